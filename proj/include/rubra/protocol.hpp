#pragma once

#include <filesystem>

#include "rubra/core.hpp"

namespace rubra {

/// A judging prompt template. `preamble` carries the task text and the named
/// placeholders {instruction}, {response}, {reference?}, {criterion},
/// {rubric_lines} and {k}; `output_instructions` declares the verdict grammar
/// (feedback first, then "[RESULT] <score>") and is appended after the
/// preamble. Templates loaded from a file put everything in the preamble.
struct PromptTemplate {
    std::string preamble;
    std::string output_instructions;

    /// MT-Bench / Vicuna style: scores the response against a reference answer.
    static PromptTemplate builtin_with_reference();
    /// HANNA / SummEval style: no reference answer section.
    static PromptTemplate builtin_no_reference();
    /// Resolves "builtin:with-reference", "builtin:no-reference", or a file path.
    static PromptTemplate load(const std::string& ref);
};

/// Renders the judging prompt for one instance under a rubric ordering. The
/// rubric block lists, top to bottom for positions 1..K, the line
/// "Score s: <description of s>" with s = the score the ordering puts at
/// that position — labels travel with their lines, only display order
/// changes. The {reference?} block expands to a reference section when the
/// instance has a reference and to nothing when it does not.
///
/// Throws DomainError on a placeholder that cannot be bound or when the
/// ordering size does not match the rubric's K.
std::string render_prompt(const EvaluationInstance& instance, const Permutation& perm,
                          const PromptTemplate& tmpl);

struct ParseOptions {
    /// When the marker is absent, fall back to the last standalone integer in
    /// 1..k anywhere in the text. Deterministic but potentially ambiguous;
    /// run plans default to strict (no fallback).
    bool allow_fallback = true;
};

/// Extracts (feedback, score) from a raw judge completion.
///
/// Primary grammar: feedback is everything before the final "[RESULT]"
/// marker; the score is the first integer after it. An integer outside 1..k
/// is an out_of_range error; a missing usable score is a missing_score
/// error. The two are distinct so callers can decide what to retry.
VerdictOrError parse_verdict(std::string_view raw, int k, const ParseOptions& opts = {});

/// Removes inline chain-of-thought blocks (delimited by `open`..`close`,
/// e.g. "<think>".."</think>") before verdict parsing. Unterminated blocks
/// are dropped to the end of the text.
std::string strip_reasoning(std::string_view raw, std::string_view open = "<think>",
                            std::string_view close = "</think>");

}  // namespace rubra
