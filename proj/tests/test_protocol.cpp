#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "corpus_util.hpp"
#include "rubra/permute.hpp"
#include "rubra/protocol.hpp"

using namespace rubra;

namespace {

EvaluationInstance sample_instance(bool with_reference) {
    EvaluationInstance inst;
    inst.id = "sample-001";
    inst.instruction = "Summarize the article in two sentences.";
    inst.response = "The article says many things. It ends abruptly.";
    if (with_reference) inst.reference = "A crisp two-sentence summary of the article.";
    inst.rubric.criterion_text = "Does the summary capture the key points faithfully?";
    inst.rubric.descriptions = {
        "The summary misses or distorts nearly every key point.",
        "The summary captures a few points but omits or garbles most.",
        "The summary captures about half of the key points.",
        "The summary captures most key points with minor omissions.",
        "The summary captures every key point faithfully.",
    };
    return inst;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing fixture ", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void check_golden(const std::string& rendered, const std::string& fixture_name) {
    const std::string path = std::string(RUBRA_TEST_DATA_DIR) + "/" + fixture_name;
    if (std::getenv("RUBRA_UPDATE_GOLDEN")) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << rendered;
    }
    CHECK_MESSAGE(rendered == read_file(path), "rendered prompt diverged from ", fixture_name);
}

}  // namespace

TEST_CASE("identity ordering renders rubric lines top to bottom") {
    const EvaluationInstance inst = sample_instance(true);
    const std::string prompt =
        render_prompt(inst, Permutation::identity(5), PromptTemplate::builtin_with_reference());
    std::size_t prev = 0;
    for (int s = 1; s <= 5; ++s) {
        const std::string line = "Score " + std::to_string(s) + ": " + inst.rubric.descriptions[s - 1];
        const std::size_t at = prompt.find(line);
        REQUIRE(at != std::string::npos);
        CHECK(at > prev);
        prev = at;
    }
    CHECK(prompt.find(inst.instruction) != std::string::npos);
    CHECK(prompt.find(inst.response) != std::string::npos);
    CHECK(prompt.find(*inst.reference) != std::string::npos);
    check_golden(prompt, "golden_prompt_identity.txt");
}

TEST_CASE("rotated ordering moves lines but keeps their score labels") {
    const EvaluationInstance inst = sample_instance(true);
    const Permutation rot({5, 1, 2, 3, 4});
    const std::string prompt =
        render_prompt(inst, rot, PromptTemplate::builtin_with_reference());
    const std::size_t five = prompt.find("Score 5: " + inst.rubric.descriptions[4]);
    const std::size_t one = prompt.find("Score 1: " + inst.rubric.descriptions[0]);
    REQUIRE(five != std::string::npos);
    REQUIRE(one != std::string::npos);
    CHECK(five < one);
    check_golden(prompt, "golden_prompt_rot5.txt");
}

TEST_CASE("labels are permuted, never relabeled") {
    const EvaluationInstance inst = sample_instance(false);
    for (const Permutation& perm : generate_balanced_set(5).orderings) {
        const std::string prompt =
            render_prompt(inst, perm, PromptTemplate::builtin_no_reference());
        std::set<int> labels;
        std::size_t pos = 0;
        while ((pos = prompt.find("Score ", pos)) != std::string::npos) {
            pos += 6;
            if (pos + 1 < prompt.size() &&
                std::isdigit(static_cast<unsigned char>(prompt[pos])) &&
                prompt[pos + 1] == ':') {
                labels.insert(prompt[pos] - '0');
            }
        }
        CHECK(labels == std::set<int>{1, 2, 3, 4, 5});
        // each description appears exactly once
        for (const std::string& desc : inst.rubric.descriptions) {
            const std::size_t first = prompt.find(desc);
            REQUIRE(first != std::string::npos);
            CHECK(prompt.find(desc, first + 1) == std::string::npos);
        }
    }
}

TEST_CASE("reference section is omitted when the instance has none") {
    const EvaluationInstance with_ref = sample_instance(true);
    const EvaluationInstance no_ref = sample_instance(false);
    const PromptTemplate tmpl = PromptTemplate::builtin_with_reference();
    CHECK(render_prompt(with_ref, Permutation::identity(5), tmpl).find("###Reference Answer") !=
          std::string::npos);
    CHECK(render_prompt(no_ref, Permutation::identity(5), tmpl).find("###Reference Answer") ==
          std::string::npos);
    const std::string no_ref_prompt =
        render_prompt(no_ref, Permutation::identity(5), PromptTemplate::builtin_no_reference());
    CHECK(no_ref_prompt.find("Reference") == std::string::npos);
    check_golden(no_ref_prompt, "golden_prompt_no_reference.txt");
}

TEST_CASE("rendering is deterministic") {
    const EvaluationInstance inst = sample_instance(true);
    const PromptTemplate tmpl = PromptTemplate::builtin_with_reference();
    const Permutation perm({3, 2, 1, 5, 4});
    CHECK(render_prompt(inst, perm, tmpl) == render_prompt(inst, perm, tmpl));
}

TEST_CASE("render errors") {
    const EvaluationInstance inst = sample_instance(true);
    SUBCASE("ordering size mismatch") {
        CHECK_THROWS_AS(render_prompt(inst, Permutation::identity(4),
                                      PromptTemplate::builtin_with_reference()),
                        DomainError);
    }
    SUBCASE("unbound placeholder") {
        PromptTemplate broken;
        broken.preamble = "Rate {response} against {nonexistent_thing}.";
        CHECK_THROWS_AS(render_prompt(inst, Permutation::identity(5), broken), DomainError);
    }
    SUBCASE("braces that are not placeholders pass through") {
        PromptTemplate odd;
        odd.preamble = "Use {rubric_lines} and emit JSON like {\"score\": 1}.";
        const std::string prompt = render_prompt(inst, Permutation::identity(5), odd);
        CHECK(prompt.find("{\"score\": 1}") != std::string::npos);
    }
    SUBCASE("placeholders inside substituted values are not re-expanded") {
        EvaluationInstance sneaky = inst;
        sneaky.response = "try {rubric_lines} injection";
        const std::string prompt = render_prompt(sneaky, Permutation::identity(5),
                                                 PromptTemplate::builtin_with_reference());
        CHECK(prompt.find("try {rubric_lines} injection") != std::string::npos);
    }
}

TEST_CASE("template files load as plain preamble") {
    const std::string path = std::string(RUBRA_TEST_DATA_DIR) + "/custom_template.txt";
    const PromptTemplate tmpl = PromptTemplate::load(path);
    CHECK(tmpl.output_instructions.empty());
    const EvaluationInstance inst = sample_instance(false);
    const std::string prompt = render_prompt(inst, Permutation::identity(5), tmpl);
    CHECK(prompt.find("Score 1: ") != std::string::npos);
    CHECK(prompt.find("custom grader") != std::string::npos);
    CHECK_THROWS_AS(PromptTemplate::load("/nonexistent/template.txt"), DomainError);
}

TEST_CASE("verdict corpus parses with the exact expected outcomes") {
    const auto cases = testutil::load_verdict_corpus(std::string(RUBRA_TEST_DATA_DIR) +
                                                     "/verdict_corpus.jsonl");
    REQUIRE(cases.size() >= 30);
    for (const auto& c : cases) {
        CAPTURE(c.name);
        const std::string problem = testutil::check_corpus_case(c);
        CHECK_MESSAGE(problem.empty(), c.name, ": ", problem);
    }
}

TEST_CASE("documented parse examples") {
    const auto adequate = parse_verdict("The response is adequate. [RESULT] 4", 5);
    REQUIRE(std::holds_alternative<JudgeVerdict>(adequate));
    CHECK(std::get<JudgeVerdict>(adequate) == JudgeVerdict{"The response is adequate.", 4});

    const auto seven = parse_verdict("[RESULT] 7", 5);
    REQUIRE(std::holds_alternative<ParseError>(seven));
    CHECK(std::get<ParseError>(seven).kind == ParseErrorKind::out_of_range);

    const auto ambiguous = parse_verdict("I give this a 3 out of 5.", 5, {.allow_fallback = true});
    REQUIRE(std::holds_alternative<JudgeVerdict>(ambiguous));
    CHECK(std::get<JudgeVerdict>(ambiguous).score == 5);
}

TEST_CASE("round-trip property: feedback + marker + score parses back") {
    Rng rng(2026);
    const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,;:!?()-\n";
    for (int trial = 0; trial < 500; ++trial) {
        const int k = 2 + static_cast<int>(rng.next_u64() % 9);
        const int score = 1 + static_cast<int>(rng.next_u64() % k);
        std::string feedback;
        const std::size_t len = rng.next_u64() % 80;
        for (std::size_t i = 0; i < len; ++i) {
            feedback += alphabet[rng.next_u64() % alphabet.size()];
        }
        const std::string raw = feedback + " [RESULT] " + std::to_string(score);
        const auto result = parse_verdict(raw, k, {.allow_fallback = false});
        REQUIRE_MESSAGE(std::holds_alternative<JudgeVerdict>(result), "raw: ", raw);
        CHECK(std::get<JudgeVerdict>(result).score == score);
    }
}

TEST_CASE("strip_reasoning") {
    CHECK(strip_reasoning("<think>private</think>public") == "public");
    CHECK(strip_reasoning("a<think>x</think>b<think>y</think>c") == "abc");
    CHECK(strip_reasoning("no blocks at all") == "no blocks at all");
    CHECK(strip_reasoning("head<think>never closed") == "head");
    CHECK(strip_reasoning("[[r]]done", "[[", "]]") == "done");
}
