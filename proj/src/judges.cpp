#include "rubra/judges.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace rubra {

int RetryPolicy::delay_for_attempt(int failed_attempts) const {
    if (backoff_ms.empty()) return 0;
    const std::size_t i = std::min<std::size_t>(failed_attempts - 1, backoff_ms.size() - 1);
    return backoff_ms[i];
}

void JudgeConfig::validate() const {
    if (temperature < 0.0) throw DomainError("temperature must be >= 0");
    if (retry.max_attempts < 1) throw DomainError("retry.max_attempts must be >= 1");
    if (max_output_tokens < 1) throw DomainError("max_output_tokens must be >= 1");
}

std::string JudgeConfig::fingerprint_material() const {
    json j{{"judge_id", judge_id},
           {"endpoint", endpoint},
           {"model", model_name},
           {"temperature", temperature},
           {"max_tokens", max_output_tokens},
           {"reasoning", reasoning_enabled},
           {"system", system_message}};
    return j.dump();
}

void to_json(json& j, const JudgeConfig& c) {
    j = json{{"judge_id", c.judge_id},
             {"endpoint", c.endpoint},
             {"model", c.model_name},
             {"temperature", c.temperature},
             {"max_output_tokens", c.max_output_tokens},
             {"reasoning_enabled", c.reasoning_enabled},
             {"reasoning_open", c.reasoning_open},
             {"reasoning_close", c.reasoning_close},
             {"system_message", c.system_message},
             {"max_attempts", c.retry.max_attempts},
             {"backoff_ms", c.retry.backoff_ms},
             {"request_timeout_ms", c.request_timeout_ms},
             {"api_key_env", c.api_key_env}};
}

void from_json(const json& j, JudgeConfig& c) {
    c = JudgeConfig{};
    if (j.contains("judge_id")) j["judge_id"].get_to(c.judge_id);
    if (j.contains("endpoint")) j["endpoint"].get_to(c.endpoint);
    if (j.contains("model")) j["model"].get_to(c.model_name);
    if (j.contains("temperature")) j["temperature"].get_to(c.temperature);
    if (j.contains("max_output_tokens")) j["max_output_tokens"].get_to(c.max_output_tokens);
    if (j.contains("reasoning_enabled")) j["reasoning_enabled"].get_to(c.reasoning_enabled);
    if (j.contains("reasoning_open")) j["reasoning_open"].get_to(c.reasoning_open);
    if (j.contains("reasoning_close")) j["reasoning_close"].get_to(c.reasoning_close);
    if (j.contains("system_message")) j["system_message"].get_to(c.system_message);
    if (j.contains("max_attempts")) j["max_attempts"].get_to(c.retry.max_attempts);
    if (j.contains("backoff_ms")) j["backoff_ms"].get_to(c.retry.backoff_ms);
    if (j.contains("request_timeout_ms")) j["request_timeout_ms"].get_to(c.request_timeout_ms);
    if (j.contains("api_key_env")) j["api_key_env"].get_to(c.api_key_env);
}

std::string_view to_string(JudgeErrorKind kind) {
    switch (kind) {
        case JudgeErrorKind::transport: return "transport";
        case JudgeErrorKind::rate_limited: return "rate_limited";
        case JudgeErrorKind::malformed_response: return "malformed_response";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// httplib transport
// ---------------------------------------------------------------------------

namespace {

class HttplibTransport : public ChatTransport {
  public:
    explicit HttplibTransport(int timeout_ms) : timeout_ms_(timeout_ms) {}

    HttpResult post_json(const std::string& url, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers) override {
        HttpResult out;
        const std::size_t scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            out.error = "endpoint URL '" + url + "' has no scheme";
            return out;
        }
        const std::size_t path_start = url.find('/', scheme_end + 3);
        const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        // Fresh client per call: httplib clients are not safe for concurrent
        // requests on one connection, and judge calls are long anyway.
        httplib::Client client(origin);
        client.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
        client.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
        client.set_write_timeout(std::chrono::milliseconds(timeout_ms_));
        httplib::Headers hl;
        for (const auto& [k, v] : headers) hl.emplace(k, v);

        auto res = client.Post(path, hl, body, "application/json");
        if (!res) {
            out.error = "transport failure: " + httplib::to_string(res.error());
            return out;
        }
        out.transport_ok = true;
        out.status = res->status;
        out.body = res->body;
        return out;
    }

  private:
    int timeout_ms_;
};

}  // namespace

std::shared_ptr<ChatTransport> make_httplib_transport(int timeout_ms) {
    return std::make_shared<HttplibTransport>(timeout_ms);
}

HttpJudge::HttpJudge(JudgeConfig config, std::shared_ptr<ChatTransport> transport,
                     std::function<void(int)> sleep_ms)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport)
                           : make_httplib_transport(config_.request_timeout_ms)),
      sleep_ms_(sleep_ms ? std::move(sleep_ms) : [](int ms) {
          std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      }) {
    config_.validate();
}

std::string HttpJudge::complete(const JudgeCall& call) {
    const std::string url = config_.endpoint + "/chat/completions";

    json messages = json::array();
    if (!config_.system_message.empty()) {
        messages.push_back({{"role", "system"}, {"content", config_.system_message}});
    }
    messages.push_back({{"role", "user"}, {"content", call.prompt}});
    const json request{{"model", config_.model_name},
                       {"messages", messages},
                       {"temperature", config_.temperature},
                       {"max_tokens", config_.max_output_tokens}};
    const std::string body = request.dump();

    std::vector<std::pair<std::string, std::string>> headers;
    if (const char* token = std::getenv(config_.api_key_env.c_str()); token && *token) {
        headers.emplace_back("Authorization", std::string("Bearer ") + token);
    }

    JudgeErrorKind last_kind = JudgeErrorKind::transport;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        const HttpResult res = transport_->post_json(url, body, headers);

        bool retryable = false;
        if (!res.transport_ok) {
            last_kind = JudgeErrorKind::transport;
            last_error = res.error;
            retryable = true;
        } else if (res.status == 429) {
            last_kind = JudgeErrorKind::rate_limited;
            last_error = "HTTP 429: " + res.body;
            retryable = true;
        } else if (res.status == 408 || res.status >= 500) {
            last_kind = JudgeErrorKind::transport;
            last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
            retryable = true;
        } else if (res.status != 200) {
            throw JudgeError(JudgeErrorKind::transport, attempt,
                             "HTTP " + std::to_string(res.status) + " (not retryable): " + res.body);
        } else {
            try {
                const json response = json::parse(res.body);
                return response.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw JudgeError(JudgeErrorKind::malformed_response, attempt,
                                 std::string("cannot extract completion: ") + e.what());
            }
        }

        if (retryable && attempt < config_.retry.max_attempts) {
            sleep_ms_(config_.retry.delay_for_attempt(attempt));
        }
    }
    throw JudgeError(last_kind, config_.retry.max_attempts, last_error);
}

// ---------------------------------------------------------------------------
// Mock judge
// ---------------------------------------------------------------------------

std::string MockJudge::complete(const JudgeCall& call) {
    const std::uint64_t h = fnv1a64(call.prompt, seed_ ^ 0x6a09e667f3bcc908ull);
    const int score = 1 + static_cast<int>(h % static_cast<std::uint64_t>(k_));
    return "Deterministic mock review " + to_hex(h) + ".\n[RESULT] " + std::to_string(score);
}

std::string MockJudge::fingerprint_material() const {
    return "mock|" + judge_id_ + "|" + std::to_string(seed_) + "|" + std::to_string(k_);
}

// ---------------------------------------------------------------------------
// Synthetic judge
// ---------------------------------------------------------------------------

void SyntheticJudgeParams::validate() const {
    if (gamma < 0.0) throw DomainError("gamma must be >= 0");
    if (position_bonus.size() < 2) throw DomainError("position_bonus needs k >= 2 entries");
    if (latent_distribution.size() != position_bonus.size()) {
        throw DomainError("latent_distribution and position_bonus must both have k entries");
    }
    double sum = 0.0;
    for (double w : latent_distribution) {
        if (w < 0.0) throw DomainError("latent_distribution entries must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw DomainError("latent_distribution sums to " + std::to_string(sum) + ", expected 1");
    }
}

std::string SyntheticJudgeParams::fingerprint_material() const {
    json j;
    to_json(j, *this);
    return "synthetic|" + j.dump();
}

void to_json(json& j, const SyntheticJudgeParams& p) {
    j = json{{"gamma", p.gamma},
             {"position_bonus", p.position_bonus},
             {"latent_distribution", p.latent_distribution},
             {"seed", p.seed}};
}

void from_json(const json& j, SyntheticJudgeParams& p) {
    p = SyntheticJudgeParams{};
    j.at("gamma").get_to(p.gamma);
    j.at("position_bonus").get_to(p.position_bonus);
    j.at("latent_distribution").get_to(p.latent_distribution);
    if (j.contains("seed")) j["seed"].get_to(p.seed);
}

std::vector<double> choice_probabilities(int latent_score, const Permutation& perm,
                                         const SyntheticJudgeParams& params) {
    const int k = perm.k();
    if (latent_score < 1 || latent_score > k) {
        throw DomainError("latent score " + std::to_string(latent_score) + " outside 1.." +
                          std::to_string(k));
    }
    std::vector<double> utility(k);
    for (int p = 1; p <= k; ++p) {
        utility[p - 1] = -params.gamma * std::abs(perm.score_at(p) - latent_score) +
                         params.position_bonus[p - 1];
    }
    const double m = *std::max_element(utility.begin(), utility.end());
    double z = 0.0;
    std::vector<double> probs(k);
    for (int i = 0; i < k; ++i) {
        probs[i] = std::exp(utility[i] - m);
        z += probs[i];
    }
    for (double& p : probs) p /= z;
    return probs;
}

JudgeVerdict synthetic_choose(int latent_score, const Permutation& perm,
                              const SyntheticJudgeParams& params, Rng& rng) {
    const std::vector<double> probs = choice_probabilities(latent_score, perm, params);
    const int position = rng.pick(probs) + 1;
    const int score = perm.score_at(position);
    JudgeVerdict v;
    v.feedback = "The response matches the score " + std::to_string(score) +
                 " description (listed at position " + std::to_string(position) + ").";
    v.score = score;
    return v;
}

PositionProfile expected_position_profile(const SyntheticJudgeParams& params,
                                          const BalancedSet& set) {
    params.validate();
    if (set.orderings.empty()) throw DomainError("ordering set is empty");
    const int k = set.k();
    if (k != params.k()) throw DomainError("params and ordering set disagree on k");

    std::vector<std::vector<double>> mass(k, std::vector<double>(k, 0.0));
    const double ordering_weight = 1.0 / static_cast<double>(set.orderings.size());
    for (const Permutation& perm : set.orderings) {
        for (int q = 1; q <= k; ++q) {
            const double latent_weight = params.latent_distribution[q - 1];
            if (latent_weight == 0.0) continue;
            const std::vector<double> probs = choice_probabilities(q, perm, params);
            for (int p = 1; p <= k; ++p) {
                mass[perm.score_at(p) - 1][p - 1] += latent_weight * ordering_weight * probs[p - 1];
            }
        }
    }

    PositionProfile profile;
    profile.rows.assign(k, std::vector<double>(k, 0.0));
    profile.row_defined.assign(k, false);
    for (int s = 0; s < k; ++s) {
        double total = 0.0;
        for (double v : mass[s]) total += v;
        if (total <= 0.0) continue;
        profile.row_defined[s] = true;
        for (int p = 0; p < k; ++p) profile.rows[s][p] = mass[s][p] / total;
    }
    return profile;
}

SyntheticJudge::SyntheticJudge(SyntheticJudgeParams params, std::string judge_id)
    : params_(std::move(params)), judge_id_(std::move(judge_id)) {
    params_.validate();
}

int SyntheticJudge::latent_score(const std::string& instance_id) const {
    Rng rng(stream_seed(params_.seed, "latent|" + instance_id));
    return rng.pick(params_.latent_distribution) + 1;
}

std::string SyntheticJudge::complete(const JudgeCall& call) {
    const int q = latent_score(call.instance_id);
    // stream keyed by (seed, instance, ordering): like a temperature-0 model,
    // the same prompt always gets the same completion, so repeated trials of
    // a fixed ordering coincide
    Rng rng(stream_seed(params_.seed, "choice|" + call.instance_id + "|" +
                                          std::to_string(call.ordering_index)));
    const JudgeVerdict v = synthetic_choose(q, call.permutation, params_, rng);
    return v.feedback + "\n[RESULT] " + std::to_string(v.score);
}

}  // namespace rubra
