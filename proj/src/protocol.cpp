#include "rubra/protocol.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace rubra {

namespace {

constexpr std::string_view kMarker = "[RESULT]";

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

PromptTemplate PromptTemplate::builtin_with_reference() {
    PromptTemplate t;
    t.preamble =
        "###Task Description:\n"
        "An instruction (which may include an input), a response to evaluate, a reference "
        "answer, and a line-by-line score rubric are given.\n"
        "1. Write detailed feedback that assesses the quality of the response strictly "
        "according to the given score rubric, not in general.\n"
        "2. After writing the feedback, select the one rubric score that fits the response "
        "best.\n"
        "\n"
        "###Instruction to evaluate:\n"
        "{instruction}\n"
        "\n"
        "###Response to evaluate:\n"
        "{response}\n"
        "\n"
        "{reference?}"
        "###Score Rubric:\n"
        "[{criterion}]\n"
        "{rubric_lines}\n"
        "\n";
    t.output_instructions =
        "###Output Format:\n"
        "(your feedback) [RESULT] (an integer between 1 and {k})\n"
        "Do not write any other opening, closing, or explanation.\n"
        "\n"
        "###Feedback:\n";
    return t;
}

PromptTemplate PromptTemplate::builtin_no_reference() {
    PromptTemplate t = builtin_with_reference();
    t.preamble =
        "###Task Description:\n"
        "An instruction (which may include an input), a response to evaluate, and a "
        "line-by-line score rubric are given.\n"
        "1. Write detailed feedback that assesses the quality of the response strictly "
        "according to the given score rubric, not in general.\n"
        "2. After writing the feedback, select the one rubric score that fits the response "
        "best.\n"
        "\n"
        "###Instruction to evaluate:\n"
        "{instruction}\n"
        "\n"
        "###Response to evaluate:\n"
        "{response}\n"
        "\n"
        "###Score Rubric:\n"
        "[{criterion}]\n"
        "{rubric_lines}\n"
        "\n";
    return t;
}

PromptTemplate PromptTemplate::load(const std::string& ref) {
    if (ref.empty() || ref == "builtin:with-reference") return builtin_with_reference();
    if (ref == "builtin:no-reference") return builtin_no_reference();
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw DomainError("cannot open template file '" + ref + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    PromptTemplate t;
    t.preamble = buf.str();
    return t;
}

namespace {

/// Substitutes {name} placeholders from `bindings` in a single pass over the
/// template text, so placeholder-like sequences inside substituted values are
/// never re-expanded. A {token} made of word characters (optionally ending in
/// '?') that has no binding is an error; anything else brace-shaped is left
/// alone as literal text.
std::string substitute(std::string_view tmpl,
                       const std::map<std::string, std::string, std::less<>>& bindings) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const char c = tmpl[i];
        if (c != '{') {
            out += c;
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < tmpl.size() && is_word_char(tmpl[j])) ++j;
        if (j < tmpl.size() && tmpl[j] == '?') ++j;
        if (j >= tmpl.size() || tmpl[j] != '}' || j == i + 1) {
            out += c;
            ++i;
            continue;
        }
        const std::string_view name = tmpl.substr(i + 1, j - i - 1);
        const auto it = bindings.find(name);
        if (it == bindings.end()) {
            throw DomainError("unbound placeholder '{" + std::string(name) + "}' in template");
        }
        out += it->second;
        i = j + 1;
    }
    return out;
}

}  // namespace

std::string render_prompt(const EvaluationInstance& instance, const Permutation& perm,
                          const PromptTemplate& tmpl) {
    instance.rubric.validate();
    if (perm.k() != instance.rubric.k()) {
        throw DomainError("ordering is over " + std::to_string(perm.k()) +
                          " scores but rubric has " + std::to_string(instance.rubric.k()));
    }

    std::string rubric_lines;
    for (int p = 1; p <= perm.k(); ++p) {
        const int score = perm.score_at(p);
        if (p > 1) rubric_lines += '\n';
        rubric_lines += "Score " + std::to_string(score) + ": " +
                        instance.rubric.descriptions[score - 1];
    }

    std::map<std::string, std::string, std::less<>> bindings;
    bindings["instruction"] = instance.instruction;
    bindings["response"] = instance.response;
    bindings["criterion"] = instance.rubric.criterion_text;
    bindings["rubric_lines"] = rubric_lines;
    bindings["k"] = std::to_string(perm.k());
    bindings["reference?"] =
        instance.reference ? "###Reference Answer:\n" + *instance.reference + "\n\n" : "";

    return substitute(tmpl.preamble, bindings) + substitute(tmpl.output_instructions, bindings);
}

VerdictOrError parse_verdict(std::string_view raw, int k, const ParseOptions& opts) {
    if (k < 2) throw DomainError("score range needs k >= 2");

    const std::size_t marker = raw.rfind(kMarker);
    if (marker != std::string_view::npos) {
        std::size_t i = marker + kMarker.size();
        while (i < raw.size() && !std::isdigit(static_cast<unsigned char>(raw[i]))) ++i;
        if (i >= raw.size()) {
            return ParseError{ParseErrorKind::missing_score,
                              "marker present but no integer follows it"};
        }
        const bool negative = raw[i - 1] == '-';
        long long value = 0;
        while (i < raw.size() && std::isdigit(static_cast<unsigned char>(raw[i]))) {
            if (value < 1000000000) value = value * 10 + (raw[i] - '0');
            ++i;
        }
        if (negative) value = -value;
        if (value < 1 || value > k) {
            return ParseError{ParseErrorKind::out_of_range,
                              "score " + std::to_string(value) + " outside 1.." +
                                  std::to_string(k)};
        }
        return JudgeVerdict{trim(raw.substr(0, marker)), static_cast<int>(value)};
    }

    if (!opts.allow_fallback) {
        return ParseError{ParseErrorKind::missing_score, "no [RESULT] marker (strict mode)"};
    }

    // Fallback: last standalone integer in 1..k. Standalone means not glued
    // to word characters or a sign, and not one side of a decimal literal.
    std::optional<int> hit;
    std::size_t i = 0;
    while (i < raw.size()) {
        if (!std::isdigit(static_cast<unsigned char>(raw[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        long long value = 0;
        while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) {
            if (value < 1000000000) value = value * 10 + (raw[j] - '0');
            ++j;
        }
        const bool left_clean =
            i == 0 || (!is_word_char(raw[i - 1]) && raw[i - 1] != '-' &&
                       !(raw[i - 1] == '.' && i >= 2 &&
                         std::isdigit(static_cast<unsigned char>(raw[i - 2]))));
        const bool right_clean =
            j >= raw.size() ||
            (!is_word_char(raw[j]) &&
             !(raw[j] == '.' && j + 1 < raw.size() &&
               std::isdigit(static_cast<unsigned char>(raw[j + 1]))));
        if (left_clean && right_clean && value >= 1 && value <= k) {
            hit = static_cast<int>(value);
        }
        i = j;
    }
    if (hit) {
        return JudgeVerdict{trim(raw), *hit};
    }
    return ParseError{ParseErrorKind::missing_score,
                      "no [RESULT] marker and no standalone integer in 1.." + std::to_string(k)};
}

std::string strip_reasoning(std::string_view raw, std::string_view open, std::string_view close) {
    if (open.empty()) return std::string(raw);
    std::string out;
    out.reserve(raw.size());
    std::size_t i = 0;
    while (i < raw.size()) {
        const std::size_t begin = raw.find(open, i);
        if (begin == std::string_view::npos) {
            out.append(raw.substr(i));
            break;
        }
        out.append(raw.substr(i, begin - i));
        const std::size_t end = close.empty() ? std::string_view::npos
                                              : raw.find(close, begin + open.size());
        if (end == std::string_view::npos) break;  // unterminated block: drop the rest
        i = end + close.size();
    }
    return out;
}

}  // namespace rubra
