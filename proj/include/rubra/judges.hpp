#pragma once

#include <functional>
#include <memory>

#include "rubra/core.hpp"

namespace rubra {

struct RetryPolicy {
    int max_attempts = 3;
    /// Delay before retry n (1-based); the last entry repeats.
    std::vector<int> backoff_ms = {250, 1000, 4000};

    int delay_for_attempt(int failed_attempts) const;
};

struct JudgeConfig {
    std::string judge_id = "judge";
    std::string endpoint;  // base URL, e.g. "https://api.openai.com/v1"
    std::string model_name;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    bool reasoning_enabled = false;
    std::string reasoning_open = "<think>";
    std::string reasoning_close = "</think>";
    std::string system_message =
        "You are a fair judge assistant. Follow the requested output format exactly.";
    RetryPolicy retry;
    int request_timeout_ms = 120000;
    /// Name of the environment variable holding the bearer token. Secrets
    /// never live in config files.
    std::string api_key_env = "OPENAI_API_KEY";

    void validate() const;
    std::string fingerprint_material() const;
};

void to_json(json& j, const JudgeConfig& c);
void from_json(const json& j, JudgeConfig& c);

enum class JudgeErrorKind { transport, rate_limited, malformed_response };

std::string_view to_string(JudgeErrorKind kind);

/// Raised when a judge call produces no completion. Carries how many
/// attempts were spent.
class JudgeError : public std::runtime_error {
  public:
    JudgeError(JudgeErrorKind kind, int attempts, const std::string& message)
        : std::runtime_error(message), kind(kind), attempts(attempts) {}

    JudgeErrorKind kind;
    int attempts;
};

/// Everything a judge may need for one trial. HTTP judges read only the
/// prompt; the synthetic judge keys its RNG stream off
/// (seed, instance_id, ordering_index), so like the mock it answers the
/// same (instance, ordering) prompt identically on every repeat.
struct JudgeCall {
    std::string prompt;
    std::string instance_id;
    int ordering_index = 0;
    int trial_index = 0;
    Permutation permutation;
};

class Judge {
  public:
    virtual ~Judge() = default;
    virtual std::string id() const = 0;
    /// Returns the assistant message text of one completion. Must be safe to
    /// call from concurrent tasks.
    virtual std::string complete(const JudgeCall& call) = 0;
    virtual bool deterministic() const = 0;
    /// Stable bytes describing the judge configuration; folded into request
    /// fingerprints so config changes invalidate the cache.
    virtual std::string fingerprint_material() const = 0;
};

// ---------------------------------------------------------------------------
// HTTP judge (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

struct HttpResult {
    bool transport_ok = false;  // false = network-level failure (no response)
    int status = 0;
    std::string body;
    std::string error;
};

class ChatTransport {
  public:
    virtual ~ChatTransport() = default;
    virtual HttpResult post_json(const std::string& url, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// Production transport over cpp-httplib. Opens a fresh connection per call,
/// which keeps it callable from many threads at once.
std::shared_ptr<ChatTransport> make_httplib_transport(int timeout_ms);

/// POSTs {model, messages, temperature, max_tokens} to
/// {endpoint}/chat/completions and extracts the first choice's message
/// content. Retries on network errors, 5xx, 408 and 429 per the config's
/// retry policy; a well-formed completion is never retried.
class HttpJudge : public Judge {
  public:
    explicit HttpJudge(JudgeConfig config, std::shared_ptr<ChatTransport> transport = nullptr,
                       std::function<void(int)> sleep_ms = {});

    std::string id() const override { return config_.judge_id; }
    std::string complete(const JudgeCall& call) override;
    bool deterministic() const override { return false; }
    std::string fingerprint_material() const override { return config_.fingerprint_material(); }

    const JudgeConfig& config() const { return config_; }

  private:
    JudgeConfig config_;
    std::shared_ptr<ChatTransport> transport_;
    std::function<void(int)> sleep_ms_;
};

// ---------------------------------------------------------------------------
// Deterministic judges
// ---------------------------------------------------------------------------

/// Deterministic fake judge: the verdict is a pure function of
/// (seed, prompt). Identical inputs produce identical bytes.
class MockJudge : public Judge {
  public:
    explicit MockJudge(std::uint64_t seed, int k, std::string judge_id = "mock")
        : seed_(seed), k_(k), judge_id_(std::move(judge_id)) {}

    std::string id() const override { return judge_id_; }
    std::string complete(const JudgeCall& call) override;
    bool deterministic() const override { return true; }
    std::string fingerprint_material() const override;

  private:
    std::uint64_t seed_;
    int k_;
    std::string judge_id_;
};

/// Test helper: delegates to a user-supplied function.
class ScriptedJudge : public Judge {
  public:
    using Fn = std::function<std::string(const JudgeCall&)>;

    ScriptedJudge(Fn fn, std::string judge_id = "scripted", bool deterministic = true)
        : fn_(std::move(fn)), judge_id_(std::move(judge_id)), deterministic_(deterministic) {}

    std::string id() const override { return judge_id_; }
    std::string complete(const JudgeCall& call) override { return fn_(call); }
    bool deterministic() const override { return deterministic_; }
    std::string fingerprint_material() const override { return "scripted|" + judge_id_; }

  private:
    Fn fn_;
    std::string judge_id_;
    bool deterministic_;
};

// ---------------------------------------------------------------------------
// Synthetic judge with analytic oracle
// ---------------------------------------------------------------------------

/// Parametric discrete-choice model of a position-biased judge. Given a
/// latent quality q, the judge picks display position p with probability
/// softmax over u(p) = -gamma * |score_at(p) - q| + position_bonus[p].
/// gamma controls how strongly content (distance to the latent score)
/// dominates; position_bonus injects primacy/recency effects in logit units.
struct SyntheticJudgeParams {
    double gamma = 1.0;
    std::vector<double> position_bonus;       // size K, logits
    std::vector<double> latent_distribution;  // over scores 1..K, sums to 1
    std::uint64_t seed = 0;

    int k() const { return static_cast<int>(position_bonus.size()); }
    void validate() const;
    std::string fingerprint_material() const;
};

void to_json(json& j, const SyntheticJudgeParams& p);
void from_json(const json& j, SyntheticJudgeParams& p);

/// P(choose position p | latent score q) under `params` for one ordering.
std::vector<double> choice_probabilities(int latent_score, const Permutation& perm,
                                         const SyntheticJudgeParams& params);

/// Draws one verdict. The returned score is the score displayed at the
/// sampled position; the feedback is deterministic text that survives a
/// parse round-trip once the caller appends the result marker.
JudgeVerdict synthetic_choose(int latent_score, const Permutation& perm,
                              const SyntheticJudgeParams& params, Rng& rng);

/// Exact expectation of the score-position profile under `params` over a
/// balanced set: enumerates (latent score x ordering x position) weighted by
/// the latent distribution and uniform ordering weight, then normalizes each
/// row by its expected selection mass. Rows with zero mass come back
/// flagged undefined.
PositionProfile expected_position_profile(const SyntheticJudgeParams& params,
                                          const BalancedSet& set);

class SyntheticJudge : public Judge {
  public:
    explicit SyntheticJudge(SyntheticJudgeParams params, std::string judge_id = "synthetic");

    std::string id() const override { return judge_id_; }
    std::string complete(const JudgeCall& call) override;
    bool deterministic() const override { return true; }
    std::string fingerprint_material() const override { return params_.fingerprint_material(); }

    /// The instance's latent quality: stable across orderings and trials.
    int latent_score(const std::string& instance_id) const;
    const SyntheticJudgeParams& params() const { return params_; }

  private:
    SyntheticJudgeParams params_;
    std::string judge_id_;
};

}  // namespace rubra
