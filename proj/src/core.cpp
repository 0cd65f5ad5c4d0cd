#include "rubra/core.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <numeric>

namespace rubra {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t from_hex(std::string_view hex) {
    std::uint64_t v = 0;
    for (char c : hex) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
        else throw DomainError("invalid hex digit in '" + std::string(hex) + "'");
    }
    return v;
}

std::uint64_t stream_seed(std::uint64_t base, std::string_view key) {
    std::uint64_t h = fnv1a64(key);
    // splitmix64 finalizer over base ^ key hash, so nearby base seeds do not
    // produce correlated streams
    std::uint64_t z = base ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

int Rng::pick(const std::vector<double>& probs) {
    const double u = next_double();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

// ---------------------------------------------------------------------------

void Rubric::validate() const {
    if (descriptions.size() < 2) {
        throw DomainError("rubric needs at least 2 score descriptions, got " +
                          std::to_string(descriptions.size()));
    }
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        if (descriptions[i].empty()) {
            throw DomainError("rubric description for score " + std::to_string(i + 1) +
                              " is empty");
        }
    }
}

Permutation::Permutation(std::vector<int> order) : order_(std::move(order)) {
    const int n = static_cast<int>(order_.size());
    if (n < 1) throw DomainError("permutation must not be empty");
    position_of_.assign(n, 0);
    for (int p = 1; p <= n; ++p) {
        const int s = order_[p - 1];
        if (s < 1 || s > n) {
            throw DomainError("permutation entry " + std::to_string(s) + " outside 1.." +
                              std::to_string(n));
        }
        if (position_of_[s - 1] != 0) {
            throw DomainError("duplicate score " + std::to_string(s) + " in permutation");
        }
        position_of_[s - 1] = p;
    }
}

Permutation Permutation::identity(int k) {
    std::vector<int> o(k);
    std::iota(o.begin(), o.end(), 1);
    return Permutation(std::move(o));
}

Permutation Permutation::reversed(int k) {
    std::vector<int> o(k);
    std::iota(o.rbegin(), o.rend(), 1);
    return Permutation(std::move(o));
}

int Permutation::score_at(int position) const {
    if (position < 1 || position > k()) {
        throw DomainError("position " + std::to_string(position) + " outside 1.." +
                          std::to_string(k()));
    }
    return order_[position - 1];
}

int Permutation::position_of(int score) const {
    if (score < 1 || score > k()) {
        throw DomainError("score " + std::to_string(score) + " outside 1.." +
                          std::to_string(k()));
    }
    return position_of_[score - 1];
}

std::string Permutation::to_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < order_.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(order_[i]);
    }
    out += ']';
    return out;
}

Permutation Permutation::parse(std::string_view text) {
    std::vector<int> order;
    std::size_t i = 0;
    auto skip_ws = [&] { while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i; };
    skip_ws();
    if (i >= text.size() || text[i] != '[') throw DomainError("permutation must start with '['");
    ++i;
    for (;;) {
        skip_ws();
        if (i < text.size() && text[i] == ']') { ++i; break; }
        int value = 0;
        bool any = false;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            value = value * 10 + (text[i] - '0');
            any = true;
            ++i;
        }
        if (!any) throw DomainError("expected integer in permutation '" + std::string(text) + "'");
        order.push_back(value);
        skip_ws();
        if (i < text.size() && text[i] == ',') { ++i; continue; }
        if (i < text.size() && text[i] == ']') { ++i; break; }
        throw DomainError("expected ',' or ']' in permutation '" + std::string(text) + "'");
    }
    skip_ws();
    if (i != text.size()) throw DomainError("trailing characters after permutation");
    return Permutation(std::move(order));
}

// ---------------------------------------------------------------------------

std::string_view to_string(ParseErrorKind kind) {
    switch (kind) {
        case ParseErrorKind::missing_score: return "missing_score";
        case ParseErrorKind::out_of_range: return "out_of_range";
    }
    return "unknown";
}

ParseErrorKind parse_error_kind_from_string(std::string_view name) {
    if (name == "missing_score") return ParseErrorKind::missing_score;
    if (name == "out_of_range") return ParseErrorKind::out_of_range;
    throw DomainError("unknown parse error kind '" + std::string(name) + "'");
}

std::string_view to_string(AggregationMode mode) {
    switch (mode) {
        case AggregationMode::permutation: return "permutation";
        case AggregationMode::repeat: return "repeat";
        case AggregationMode::single_ordering: return "single-ordering";
    }
    return "unknown";
}

AggregationMode aggregation_mode_from_string(std::string_view name) {
    if (name == "permutation") return AggregationMode::permutation;
    if (name == "repeat") return AggregationMode::repeat;
    if (name == "single-ordering" || name == "single_ordering") return AggregationMode::single_ordering;
    throw DomainError("unknown aggregation mode '" + std::string(name) + "'");
}

PositionProfile PositionProfile::from_counts(const std::vector<std::vector<long long>>& counts) {
    PositionProfile p;
    const int k = static_cast<int>(counts.size());
    p.counts = counts;
    p.rows.assign(k, std::vector<double>(k, 0.0));
    p.row_defined.assign(k, false);
    for (int s = 0; s < k; ++s) {
        if (static_cast<int>(counts[s].size()) != k) {
            throw DomainError("count matrix is not square");
        }
        long long total = 0;
        for (long long c : counts[s]) {
            if (c < 0) throw DomainError("negative selection count");
            total += c;
        }
        if (total == 0) continue;
        p.row_defined[s] = true;
        for (int q = 0; q < k; ++q) {
            p.rows[s][q] = static_cast<double>(counts[s][q]) / static_cast<double>(total);
        }
    }
    return p;
}

PositionProfile PositionProfile::from_fractions(std::vector<std::vector<double>> rows,
                                                const std::vector<int>& undefined_rows) {
    PositionProfile p;
    const int k = static_cast<int>(rows.size());
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != k) throw DomainError("profile matrix is not square");
        for (double v : row) {
            if (v < 0.0 || v > 1.0) {
                throw DomainError("profile entry " + std::to_string(v) + " outside [0,1]");
            }
        }
    }
    p.rows = std::move(rows);
    p.row_defined.assign(k, true);
    for (int s : undefined_rows) {
        if (s < 1 || s > k) throw DomainError("undefined row index outside 1..k");
        p.row_defined[s - 1] = false;
    }
    return p;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const Rubric& r) {
    j = json{{"criterion", r.criterion_text}, {"descriptions", r.descriptions}};
}

void from_json(const json& j, Rubric& r) {
    j.at("criterion").get_to(r.criterion_text);
    j.at("descriptions").get_to(r.descriptions);
}

void to_json(json& j, const Permutation& p) { j = p.order(); }

void from_json(const json& j, Permutation& p) {
    p = Permutation(j.get<std::vector<int>>());
}

void to_json(json& j, const BalancedSet& s) { j = json{{"orderings", s.orderings}}; }

void from_json(const json& j, BalancedSet& s) { j.at("orderings").get_to(s.orderings); }

void to_json(json& j, const EvaluationInstance& e) {
    j = json{{"id", e.id},
             {"instruction", e.instruction},
             {"response", e.response},
             {"criterion", e.rubric.criterion_text},
             {"rubric_descriptions", e.rubric.descriptions}};
    if (e.reference) j["reference"] = *e.reference;
    if (!e.human_scores.empty()) j["human_scores"] = e.human_scores;
    if (!e.criterion_tag.empty()) j["criterion_tag"] = e.criterion_tag;
}

void from_json(const json& j, EvaluationInstance& e) {
    j.at("id").get_to(e.id);
    j.at("instruction").get_to(e.instruction);
    j.at("response").get_to(e.response);
    j.at("criterion").get_to(e.rubric.criterion_text);
    j.at("rubric_descriptions").get_to(e.rubric.descriptions);
    if (j.contains("reference") && !j["reference"].is_null()) {
        e.reference = j["reference"].get<std::string>();
    } else {
        e.reference.reset();
    }
    e.human_scores.clear();
    if (j.contains("human_scores")) j["human_scores"].get_to(e.human_scores);
    e.criterion_tag.clear();
    if (j.contains("criterion_tag")) j["criterion_tag"].get_to(e.criterion_tag);
}

void to_json(json& j, const JudgeVerdict& v) {
    j = json{{"feedback", v.feedback}, {"score", v.score}};
}

void from_json(const json& j, JudgeVerdict& v) {
    j.at("feedback").get_to(v.feedback);
    j.at("score").get_to(v.score);
}

void to_json(json& j, const ParseError& e) {
    j = json{{"error", std::string(to_string(e.kind))}, {"detail", e.detail}};
}

void from_json(const json& j, ParseError& e) {
    e.kind = parse_error_kind_from_string(j.at("error").get<std::string>());
    j.at("detail").get_to(e.detail);
}

void to_json(json& j, const RunRecord& r) {
    j = json{{"instance_id", r.instance_id},
             {"ordering_index", r.ordering_index},
             {"trial_index", r.trial_index},
             {"ordering", r.permutation},
             {"judge_id", r.judge_id},
             {"raw_output", r.raw_output},
             {"chosen_position", r.chosen_position},
             {"fingerprint", to_hex(r.request_fingerprint)},
             {"created_at", r.created_at}};
    if (r.parsed()) {
        j["verdict"] = r.good_verdict();
    } else {
        j["verdict"] = r.parse_error();
    }
}

void from_json(const json& j, RunRecord& r) {
    j.at("instance_id").get_to(r.instance_id);
    j.at("ordering_index").get_to(r.ordering_index);
    j.at("trial_index").get_to(r.trial_index);
    r.permutation = j.at("ordering").get<Permutation>();
    j.at("judge_id").get_to(r.judge_id);
    j.at("raw_output").get_to(r.raw_output);
    j.at("chosen_position").get_to(r.chosen_position);
    r.request_fingerprint = from_hex(j.at("fingerprint").get<std::string>());
    j.at("created_at").get_to(r.created_at);
    const json& v = j.at("verdict");
    if (v.contains("error")) {
        r.verdict = v.get<ParseError>();
    } else {
        r.verdict = v.get<JudgeVerdict>();
    }
}

void to_json(json& j, const PositionProfile& p) {
    std::vector<int> undefined;
    for (int s = 1; s <= p.k(); ++s) {
        if (!p.defined(s)) undefined.push_back(s);
    }
    j = json{{"k", p.k()}, {"rows", p.rows}};
    if (!p.counts.empty()) j["counts"] = p.counts;
    if (!undefined.empty()) j["undefined_rows"] = undefined;
}

void from_json(const json& j, PositionProfile& p) {
    std::vector<int> undefined;
    if (j.contains("undefined_rows")) j["undefined_rows"].get_to(undefined);
    p = PositionProfile::from_fractions(j.at("rows").get<std::vector<std::vector<double>>>(),
                                        undefined);
    if (j.contains("counts")) j["counts"].get_to(p.counts);
}

void to_json(json& j, const CorrelationReport& r) {
    j = json{{"n_items", r.n_items}, {"mode", std::string(to_string(r.mode))}};
    j["pearson_r"] = r.pearson_r ? json(*r.pearson_r) : json();
    j["spearman_rho"] = r.spearman_rho ? json(*r.spearman_rho) : json();
}

void from_json(const json& j, CorrelationReport& r) {
    j.at("n_items").get_to(r.n_items);
    r.mode = aggregation_mode_from_string(j.at("mode").get<std::string>());
    r.pearson_r.reset();
    r.spearman_rho.reset();
    if (!j.at("pearson_r").is_null()) r.pearson_r = j["pearson_r"].get<double>();
    if (!j.at("spearman_rho").is_null()) r.spearman_rho = j["spearman_rho"].get<double>();
}

void to_json(json& j, const ConsistencyReport& r) {
    j = json{{"per_item_sigma", r.per_item_sigma},
             {"mean_sigma", r.mean_sigma},
             {"excluded_items", r.excluded_items}};
}

void from_json(const json& j, ConsistencyReport& r) {
    j.at("per_item_sigma").get_to(r.per_item_sigma);
    j.at("mean_sigma").get_to(r.mean_sigma);
    j.at("excluded_items").get_to(r.excluded_items);
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace rubra
