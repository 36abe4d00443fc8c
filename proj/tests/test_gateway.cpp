#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "llmcer/error.hpp"
#include "llmcer/llm_gateway.hpp"
#include "llmcer/similarity.hpp"

using namespace llmcer;

namespace {

std::vector<Record> make_records(std::size_t n) {
    std::vector<Record> r;
    for (std::size_t i = 0; i < n; ++i) {
        r.push_back(Record{"r" + std::to_string(i),
                           {Attribute{"name", "item " + std::to_string(i), AttributeKind::textual},
                            Attribute{"city", i % 2 ? "Oslo" : "", AttributeKind::categorical}},
                           std::nullopt});
    }
    return r;
}

RecordSet make_set(std::string id, std::vector<RecordIndex> members) {
    RecordSet s{std::move(id), {}, 0};
    for (auto r : members) s.members.push_back(ClusterNode::singleton(r));
    return s;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

ErrorCode parse_code(std::string_view response, std::size_t members) {
    try {
        parse_clustering(response, members);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a parse error");
    return ErrorCode::ConfigError;
}

// Replays canned responses and records the prompts it saw.
class ScriptedBackend : public Backend {
  public:
    explicit ScriptedBackend(std::deque<std::string> replies) : replies_(std::move(replies)) {}
    Completion complete(const Prompt& prompt) override {
        prompts.push_back(prompt.user_text);
        std::string reply = replies_.empty() ? "garbage" : replies_.front();
        if (!replies_.empty()) replies_.pop_front();
        return Completion{reply, 100, 10};
    }
    std::vector<std::string> prompts;

  private:
    std::deque<std::string> replies_;
};

}  // namespace

TEST_CASE("prompt layout") {
    const auto records = make_records(12);
    SUBCASE("one label per member") {
        std::vector<RecordSet> sets{make_set("s", {0, 1, 2, 3, 4, 5, 6, 7, 8})};
        const auto p = build_prompt(sets, records);
        CHECK(count_of(p.user_text, "\nR") == 9);
        CHECK(p.user_text.find("R8 | name: item 7 | city: Oslo") != std::string::npos);
        CHECK(p.user_text.find("SET") == std::string::npos);
        REQUIRE(p.sections.size() == 1);
        CHECK(p.sections[0].shown.size() == 9);
    }
    SUBCASE("missing values are omitted") {
        std::vector<RecordSet> sets{make_set("s", {0, 1})};
        const auto p = build_prompt(sets, records);
        CHECK(p.user_text.find("R1 | name: item 0\n") != std::string::npos);
        CHECK(p.user_text.find("R2 | name: item 1 | city: Oslo\n") != std::string::npos);
    }
    SUBCASE("batched sets restart labels") {
        std::vector<RecordSet> sets{make_set("a", {0, 1, 2}), make_set("b", {3, 4})};
        const auto p = build_prompt(sets, records);
        CHECK(count_of(p.user_text, "SET 1") >= 1);
        CHECK(count_of(p.user_text, "\nSET 2\n") == 1);
        CHECK(count_of(p.user_text, "R1 |") == 2);
        CHECK(count_of(p.user_text, "R3 |") == 1);
    }
    SUBCASE("merged nodes are shown through their representative") {
        RecordSet s{"m", {ClusterNode{{2, 5, 7}, 5, "x"}, ClusterNode::singleton(1)}, 1};
        const auto p = build_prompt(std::span<const RecordSet>(&s, 1), records);
        CHECK(p.sections[0].shown == std::vector<RecordIndex>{5, 1});
        CHECK(p.user_text.find("item 5") != std::string::npos);
        CHECK(p.user_text.find("item 2") == std::string::npos);
    }
}

TEST_CASE("response parsing") {
    const auto c = parse_clustering("R1,R2\nR3", 3);
    CHECK(c.groups == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
    CHECK(parse_clustering("  r3 , R1\n\nR2  ", 3).groups.size() == 2);
    CHECK(parse_code("R1,R2", 3) == ErrorCode::MissingMember);
    CHECK(parse_code("R1,R1,R2,R3", 3) == ErrorCode::DuplicateMember);
    CHECK(parse_code("R1,R4\nR2,R3", 3) == ErrorCode::UnknownLabel);
    CHECK(parse_code("I cannot help with that.", 3) == ErrorCode::MalformedResponse);
    CHECK(parse_code("", 3) == ErrorCode::MalformedResponse);
    CHECK(render_clustering(c) == "R1,R2\nR3\n");
}

TEST_CASE("batched responses split on headers") {
    std::vector<RecordSet> sets{make_set("a", {0, 1, 2}), make_set("b", {3, 4})};
    const auto parsed = parse_batch("SET 1\nR1,R3\nR2\nSET 2\nR1,R2\n", sets);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].groups == std::vector<std::vector<std::size_t>>{{0, 2}, {1}});
    CHECK(parsed[1].groups == std::vector<std::vector<std::size_t>>{{0, 1}});
    CHECK_THROWS_AS(parse_batch("SET 1\nR1,R2,R3\n", sets), Error);
}

TEST_CASE("gateway retries with a reminder, then falls back") {
    const auto records = make_records(3);
    const auto set = make_set("s", {0, 1, 2});

    SUBCASE("valid first answer") {
        ScriptedBackend backend({"R1,R2\nR3"});
        CostLedger ledger;
        Gateway gw(backend, records, ledger);
        const auto out = gw.cluster_records(set);
        CHECK(out.attempts == 1);
        CHECK_FALSE(out.fallback);
        CHECK(out.clustering.groups.size() == 2);
        CHECK(ledger.totals().api_calls == 1);
        CHECK(ledger.totals().tokens_in == 100);
    }
    SUBCASE("second attempt carries the format reminder") {
        ScriptedBackend backend({"sure, here you go", "R1,R2,R3"});
        CostLedger ledger;
        Gateway gw(backend, records, ledger);
        const auto out = gw.cluster_records(set);
        CHECK(out.attempts == 2);
        REQUIRE(backend.prompts.size() == 2);
        CHECK(backend.prompts[0].find(kFormatReminder) == std::string::npos);
        CHECK(backend.prompts[1].find(kFormatReminder) != std::string::npos);
    }
    SUBCASE("garbage four times with three retries") {
        ScriptedBackend backend({});
        CostLedger ledger;
        Gateway gw(backend, records, ledger, GatewayConfig{3, 1});
        const auto out = gw.cluster_records(set);
        CHECK(out.fallback);
        CHECK(out.attempts == 4);
        CHECK(out.clustering.all_singletons());
        CHECK(ledger.totals().api_calls == 4);
    }
}

TEST_CASE("gateway batching") {
    const auto records = make_records(5);
    std::vector<RecordSet> sets{make_set("a", {0, 1, 2}), make_set("b", {3, 4})};
    ScriptedBackend backend({"SET 1\nR1\nR2,R3\nSET 2\nR1\nR2"});
    CostLedger ledger;
    Gateway gw(backend, records, ledger, GatewayConfig{3, 2});
    const auto out = gw.cluster_batch(sets);
    REQUIRE(out.size() == 2);
    CHECK(out[0].clustering.groups == std::vector<std::vector<std::size_t>>{{0}, {1, 2}});
    CHECK(out[1].clustering.all_singletons());
    CHECK(ledger.totals().api_calls == 1);

    Gateway single(backend, records, ledger);
    CHECK_THROWS_WITH_AS(single.cluster_batch(sets), doctest::Contains("ConfigError"), Error);
}

TEST_CASE("gateway writes a transcript line per attempt") {
    const auto path = std::filesystem::temp_directory_path() / "llmcer_transcript_test.jsonl";
    std::filesystem::remove(path);
    const auto records = make_records(2);
    {
        TranscriptLog log(path);
        ScriptedBackend backend({"nope", "R1\nR2"});
        CostLedger ledger;
        Gateway gw(backend, records, ledger, GatewayConfig{}, &log);
        gw.cluster_records(make_set("t", {0, 1}));
    }
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("response"));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("simulated oracle") {
    OracleConfig config;
    config.entity = {0, 0, 1, 1, 2, 0};

    SUBCASE("perfect oracle restricts truth") {
        const std::vector<RecordIndex> shown{5, 2, 0, 3};
        const auto a = simulated_oracle(shown, config, 1);
        CHECK(a.clustering.groups == std::vector<std::vector<std::size_t>>{{0, 2}, {1, 3}});
        CHECK(a.displaced.empty());
    }
    SUBCASE("one entity gives one group") {
        const std::vector<RecordIndex> shown{0, 1, 5};
        CHECK(simulated_oracle(shown, config, 1).clustering.groups.size() == 1);
    }
    SUBCASE("unknown record is rejected") {
        const std::vector<RecordIndex> shown{0, 9};
        CHECK_THROWS_WITH_AS(simulated_oracle(shown, config, 1), doctest::Contains("UncoveredRecord"), Error);
    }
    SUBCASE("displacement frequency matches the error rate") {
        OracleConfig noisy;
        noisy.error_rate = 0.2;
        for (std::size_t i = 0; i < 9; ++i) noisy.entity.push_back(i / 3);
        const std::vector<RecordIndex> shown{0, 1, 2, 3, 4, 5, 6, 7, 8};
        std::size_t displaced = 0, total = 0;
        for (std::uint64_t stream = 0; total < 10000; ++stream) {
            const auto a = simulated_oracle(shown, noisy, stable_hash(std::to_string(stream), 7));
            a.clustering.validate(shown.size());
            displaced += a.displaced.size();
            total += shown.size();
        }
        CHECK(std::abs(static_cast<double>(displaced) / static_cast<double>(total) - 0.2) <= 0.01);
    }
    SUBCASE("identical prompts get identical answers") {
        OracleConfig noisy = config;
        noisy.error_rate = 0.5;
        OracleBackend backend(noisy);
        const auto records = make_records(6);
        std::vector<RecordSet> sets{make_set("x", {0, 1, 2, 3, 4, 5})};
        const auto p = build_prompt(sets, records);
        CHECK(backend.complete(p).text == backend.complete(p).text);
        CHECK_THROWS_AS(OracleBackend(OracleConfig{{}, 1.5, 1}), Error);
    }
}

TEST_CASE("http backend against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::atomic<int> failures_left{0};
    std::string last_body, last_auth;
    std::mutex mu;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        {
            std::lock_guard lock(mu);
            last_body = req.body;
            last_auth = req.get_header_value("Authorization");
        }
        if (failures_left > 0) {
            --failures_left;
            res.status = 500;
            return;
        }
        nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "R1,R2"}}}}}},
                                {"usage", {{"prompt_tokens", 42}, {"completion_tokens", 3}}}};
        res.set_content(reply.dump(), "application/json");
    });
    server.Post("/denied", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ProviderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.model = "test-model";
    config.backoff_base = std::chrono::milliseconds(1);
    config.timeout = std::chrono::seconds(5);
    const auto records = make_records(2);
    std::vector<RecordSet> sets{make_set("h", {0, 1})};
    const auto prompt = build_prompt(sets, records);

    SUBCASE("wire format and usage") {
        HttpBackend backend(config, "sk-test");
        const auto c = backend.complete(prompt);
        CHECK(c.text == "R1,R2");
        CHECK(c.tokens_in == 42u);
        CHECK(c.tokens_out == 3u);
        std::lock_guard lock(mu);
        const auto body = nlohmann::json::parse(last_body);
        CHECK(body["model"] == "test-model");
        CHECK(body["temperature"] == 0.0);
        CHECK(body["messages"][0]["role"] == "system");
        CHECK(body["messages"][1]["content"] == prompt.user_text);
        CHECK(last_auth == "Bearer sk-test");
    }
    SUBCASE("server errors are retried") {
        failures_left = 2;
        HttpBackend backend(config, "k");
        CHECK(backend.complete(prompt).text == "R1,R2");
        CHECK(hits == 3);
    }
    SUBCASE("persistent server errors exhaust retries") {
        failures_left = 100;
        config.max_retries = 2;
        HttpBackend backend(config, "k");
        CHECK_THROWS_WITH_AS(backend.complete(prompt), doctest::Contains("ProviderUnavailable"), Error);
        CHECK(hits == 3);
    }
    SUBCASE("auth failure is not retried") {
        config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/denied";
        HttpBackend backend(config, "k");
        CHECK_THROWS_WITH_AS(backend.complete(prompt), doctest::Contains("ProviderUnavailable"), Error);
    }
    SUBCASE("gateway records provider usage") {
        HttpBackend backend(config, "k");
        CostLedger ledger(0.15, 0.6);
        Gateway gw(backend, records, ledger);
        gw.cluster_records(sets[0]);
        CHECK(ledger.totals().tokens_in == 42);
        CHECK(ledger.totals().tokens_out == 3);
    }

    server.stop();
    worker.join();
}

TEST_CASE("provider config validation") {
    ProviderConfig config;
    config.endpoint = "ftp://example";
    CHECK_THROWS_AS(config.validate(), Error);
    config.endpoint = "https://example/v1";
    config.temperature = -1.0;
    CHECK_THROWS_AS(config.validate(), Error);
    ProviderConfig unset;
    unset.api_key_env = "LLMCER_TEST_SURELY_UNSET_KEY";
    CHECK_THROWS_WITH_AS(HttpBackend{unset}, doctest::Contains("ConfigError"), Error);
}
