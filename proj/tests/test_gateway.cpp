#include <doctest.h>

#include <random>

#include "mcpforge/errors.hpp"
#include "mcpforge/schemas.hpp"
#include "support/scenarios.hpp"

using namespace mcpforge;
using namespace mcpforge::testsupport;

namespace {

PromptRequest stroke_request() {
    PromptRequest request;
    request.purpose = Purpose::TopicExtraction;
    request.system_text =
        "You extract search topics. Given a task description, reply with JSON "
        "{\"keywords\": [..]} listing short code-search phrases, most salient first.";
    request.user_text =
        "Extract at most 5 topic keywords for searching code repositories.\nQuery:\n" +
        std::string(kStrokeQuery);
    request.schema_id = "topic-keywords";
    return request;
}

}  // namespace

TEST_CASE("empty prompts are rejected before any replay lookup") {
    Gateway gateway = replay_gateway();
    PromptRequest request = stroke_request();
    request.user_text = "   ";
    CHECK_THROWS_WITH_AS(gateway.complete(request), doctest::Contains("empty-prompt"), Error);
}

TEST_CASE("replay returns the frozen recorded text, byte for byte") {
    Gateway gateway = replay_gateway();
    auto first = gateway.complete(stroke_request());
    auto second = gateway.complete(stroke_request());
    CHECK(first.raw_text == second.raw_text);
    CHECK(first.backend == "replay");
    CHECK(first.raw_text == kStrokeTopicsFrozen);
}

TEST_CASE("unknown requests raise replay-miss in replay mode") {
    Gateway gateway = replay_gateway();
    PromptRequest request = stroke_request();
    request.user_text += " (never recorded)";
    try {
        gateway.complete(request);
        FAIL("expected replay-miss");
    } catch (const Error& error) {
        CHECK(error.code() == "replay-miss");
    }
}

TEST_CASE("transcript keys ignore temperature but track content") {
    PromptRequest request = stroke_request();
    PromptRequest warm = request;
    warm.temperature = 0.9;
    CHECK(Gateway::transcript_key(request) == Gateway::transcript_key(warm));
    CHECK(Gateway::transcript_key(request) == Gateway::transcript_key(request));

    // property: any single-character edit must change the key
    std::mt19937 rng(7);
    for (int i = 0; i < 100; ++i) {
        PromptRequest mutated = request;
        size_t pos = rng() % mutated.user_text.size();
        char replacement = static_cast<char>('a' + rng() % 26);
        if (mutated.user_text[pos] == replacement) replacement = replacement == 'z' ? 'y' : 'z';
        mutated.user_text[pos] = replacement;
        CHECK(mutated.user_text != request.user_text);
        CHECK(Gateway::transcript_key(mutated) != Gateway::transcript_key(request));
    }
}

TEST_CASE("the fixture transcript has well-formed, distinct keys") {
    Transcript transcript = Transcript::load(committed_transcript_path());
    CHECK(transcript.entries.size() >= 80);
    for (const auto& [key, _] : transcript.entries) {
        CHECK(key.size() == 64);
        CHECK(key.find_first_not_of("0123456789abcdef") == std::string::npos);
    }
    CHECK(transcript.provenance.contains("model"));
}

TEST_CASE("structured parsing tolerates fenced blocks amid prose") {
    Gateway gateway = replay_gateway();
    auto topics = extract_topics({kFencedQuery, ""}, 5, gateway);
    CHECK(topics.keywords == std::vector<std::string>{"protein", "folding", "analysis"});
}

TEST_CASE("unparseable replies fail with schema-violation after one retry") {
    Gateway gateway = replay_gateway();
    try {
        extract_topics({kUnparseableQuery, ""}, 5, gateway);
        FAIL("expected schema-violation");
    } catch (const Error& error) {
        CHECK(error.code() == "schema-violation");
    }
    // original request plus exactly one reformat retry
    CHECK(gateway.call_log().size() == 2);
}

TEST_CASE("extract_json finds values in plain, fenced, and embedded forms") {
    CHECK(extract_json("{\"a\": 1}").value()["a"] == 1);
    CHECK(extract_json("prose\n```json\n{\"a\": 2}\n```\nmore").value()["a"] == 2);
    CHECK(extract_json("reply: {\"a\": {\"b\": 3}} trailing").value()["a"]["b"] == 3);
    CHECK_FALSE(extract_json("no structure here").has_value());
}

TEST_CASE("schema registry enforces the evaluation reason invariant") {
    json missing_reason = {{"core_functionality", "x"},
                           {"has_complete_structure", false},
                           {"fulfills_query", false},
                           {"reason", "  "}};
    CHECK_FALSE(schemas::conforms("repo-evaluation", missing_reason));
    missing_reason["reason"] = "no tests or manifest";
    CHECK(schemas::conforms("repo-evaluation", missing_reason));
    CHECK_FALSE(schemas::is_registered("no-such-schema"));
}

TEST_CASE("bundle-spec schema rejects wire types outside the closed set") {
    json spec = {{"service_name", "svc"},
                 {"endpoints",
                  json::array({json{{"tool_name", "t"},
                                    {"description", "d"},
                                    {"target_module", "m"},
                                    {"target_symbol", "s"},
                                    {"params", json::array({json{{"name", "p"}, {"type", "uuid"}}})},
                                    {"example_args", json::object()}}})}};
    CHECK_FALSE(schemas::conforms("bundle-spec", spec));
    spec["endpoints"][0]["params"][0]["type"] = "opaque-file-path";
    CHECK(schemas::conforms("bundle-spec", spec));
}
