#include <atomic>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "imfnd/lvlm_client.hpp"
#include "imfnd/remote_client.hpp"
#include "support/fixtures.hpp"

using namespace imfnd;

namespace {

MultimodalPrompt text_prompt(const std::string& text, double temperature = 0.2) {
    MultimodalPrompt p;
    p.segments = {TextSegment{text}};
    p.temperature = temperature;
    return p;
}

MultimodalPrompt prompt_with_image(const std::string& text) {
    MultimodalPrompt p;
    p.segments = {TextSegment{text},
                  ImageRef{"img", std::make_shared<const std::vector<unsigned char>>(
                                      imfnd::testing::make_ppm(2, 2, 5))}};
    p.temperature = 0.2;
    return p;
}

// Fails with a transient error a fixed number of times, then succeeds.
class FlakyClient final : public LVLMClient {
public:
    FlakyClient(int failures, std::string answer)
        : failures_(failures), answer_(std::move(answer)) {}

    std::string model_id() const override { return "flaky"; }

protected:
    std::string do_complete(const MultimodalPrompt&) override {
        if (failures_-- > 0) throw TransientBackendError("simulated outage");
        return answer_;
    }

private:
    int failures_;
    std::string answer_;
};

class AuthFailingClient final : public LVLMClient {
public:
    std::string model_id() const override { return "locked"; }

protected:
    std::string do_complete(const MultimodalPrompt&) override {
        throw AuthError("bad credentials");
    }
};

}  // namespace

TEST(ParseVerdict, SingleKeyword) {
    EXPECT_EQ(parse_verdict("This is a fake news.").kind, VerdictKind::FAKE);
    EXPECT_EQ(parse_verdict("Looks real to me").kind, VerdictKind::REAL);
    EXPECT_EQ(parse_verdict("REAL!").kind, VerdictKind::REAL);
    EXPECT_EQ(parse_verdict("FaKe").kind, VerdictKind::FAKE);
}

TEST(ParseVerdict, PaperRefusalStringAbstains) {
    EXPECT_EQ(parse_verdict(kRefusalText).kind, VerdictKind::ABSTAIN);
}

TEST(ParseVerdict, FirstOccurrenceWins) {
    EXPECT_EQ(parse_verdict("It looks real, not fake.").kind, VerdictKind::REAL);
    EXPECT_EQ(parse_verdict("fake, definitely not real").kind, VerdictKind::FAKE);
}

TEST(ParseVerdict, WordBoundaries) {
    EXPECT_EQ(parse_verdict("surreal imagery").kind, VerdictKind::ABSTAIN);
    EXPECT_EQ(parse_verdict("realistic but fabricated").kind, VerdictKind::ABSTAIN);
    EXPECT_EQ(parse_verdict("fakery").kind, VerdictKind::ABSTAIN);
    EXPECT_EQ(parse_verdict("(real)").kind, VerdictKind::REAL);
    EXPECT_EQ(parse_verdict("it's real.").kind, VerdictKind::REAL);
}

TEST(ParseVerdict, EmptyAndTotal) {
    EXPECT_EQ(parse_verdict("").kind, VerdictKind::ABSTAIN);
    EXPECT_EQ(parse_verdict("no committal words here").kind, VerdictKind::ABSTAIN);
}

TEST(ParseVerdict, IdempotentOnStoredVerdicts) {
    const std::vector<std::string> responses = {
        "This is a fake news.", "real", kRefusalText, "It looks real, not fake.", "", "surreal"};
    for (const std::string& r : responses) {
        const Verdict v = parse_verdict(r);
        EXPECT_EQ(parse_verdict(v.raw_response).kind, v.kind);
        EXPECT_EQ(v.raw_response, r);
    }
}

TEST(MockClients, EchoFindsMultimodalSentence) {
    auto client = make_mock_client(MockPolicy::ECHO_SMALL_MODEL);
    const auto prompt = text_prompt(
        "... Multimodal classifier prediction: fake with 90% confidence. [IMAGE] News: x.");
    EXPECT_EQ(client->complete(prompt), "fake");
}

TEST(MockClients, EchoUsesLastOccurrence) {
    auto client = make_mock_client(MockPolicy::ECHO_SMALL_MODEL);
    const auto prompt = text_prompt(
        "Multimodal classifier prediction: real with 90% confidence. ..."
        " Multimodal classifier prediction: fake with 60% confidence. News: y.");
    EXPECT_EQ(client->complete(prompt), "fake");
}

TEST(MockClients, EchoAbstainsWithoutClassifierSentences) {
    auto client = make_mock_client(MockPolicy::ECHO_SMALL_MODEL);
    const std::string response = client->complete(text_prompt("plain zero-shot question"));
    EXPECT_EQ(parse_verdict(response).kind, VerdictKind::ABSTAIN);
}

TEST(MockClients, FixedAlwaysAnswersItsLabel) {
    auto real_client = make_mock_client(MockPolicy::FIXED_REAL);
    auto fake_client = make_mock_client(MockPolicy::FIXED_FAKE);
    EXPECT_EQ(real_client->complete(text_prompt("anything")), "real");
    EXPECT_EQ(fake_client->complete(text_prompt("anything")), "fake");
}

TEST(MockClients, ScriptedTransientSentinelThrows) {
    auto client = make_mock_client(
        ScriptedClient::Script{{"flaky article", "!transient!scripted outage"}}, "real");
    EXPECT_EQ(client->complete(text_prompt("fine article")), "real");
    EXPECT_THROW(client->complete(text_prompt("the flaky article body")),
                 TransientBackendError);
}

TEST(MockClients, ConcurrentQueriesAreConsistent) {
    EchoSmallModelClient client;
    const auto prompt =
        text_prompt("Multimodal classifier prediction: fake with 70% confidence.");
    std::vector<std::thread> workers;
    std::atomic<int> wrong{0};
    for (int t = 0; t < 8; ++t) {
        workers.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                if (client.complete(prompt) != "fake") wrong.fetch_add(1);
            }
        });
    }
    for (auto& w : workers) w.join();
    EXPECT_EQ(wrong.load(), 0);
    EXPECT_EQ(client.network_calls(), 400);
}

TEST(MockClients, ScriptedMatchesNeedleOrDefault) {
    auto client = make_mock_client(
        ScriptedClient::Script{{"article about cats", "fake"}, {"article about dogs", "real"}});
    EXPECT_EQ(client->complete(text_prompt("the article about dogs said...")), "real");
    EXPECT_EQ(client->complete(text_prompt("the article about cats said...")), "fake");
    EXPECT_EQ(parse_verdict(client->complete(text_prompt("unknown"))).kind,
              VerdictKind::ABSTAIN);
}

TEST(Query, RetriesTransientFailuresThenSucceeds) {
    FlakyClient client(2, "real");
    QueryOptions options;
    options.max_retries = 3;
    options.initial_backoff_s = 0.0;
    EXPECT_EQ(query(client, text_prompt("q"), options), "real");
    EXPECT_EQ(client.network_calls(), 3);  // two failures + one success
}

TEST(Query, ExhaustedRetriesThrowBackendUnavailable) {
    FlakyClient client(10, "real");
    QueryOptions options;
    options.max_retries = 2;
    options.initial_backoff_s = 0.0;
    EXPECT_THROW(query(client, text_prompt("q"), options), BackendUnavailable);
    EXPECT_EQ(client.network_calls(), 3);  // initial attempt + 2 retries
}

TEST(Query, AuthErrorIsNotRetried) {
    AuthFailingClient client;
    QueryOptions options;
    options.max_retries = 5;
    options.initial_backoff_s = 0.0;
    EXPECT_THROW(query(client, text_prompt("q"), options), AuthError);
    EXPECT_EQ(client.network_calls(), 1);
}

TEST(Query, EmptyPromptRejected) {
    FlakyClient client(0, "real");
    EXPECT_THROW(query(client, MultimodalPrompt{}), EmptyInput);
}

TEST(Cache, SecondIdenticalQueryAvoidsNetwork) {
    const auto dir = imfnd::testing::make_temp_dir("cache");
    ResponseCache cache(dir);
    FixedClient client(Label::FAKE);
    QueryOptions options;
    options.cache = &cache;
    options.initial_backoff_s = 0.0;
    QueryStats stats;
    options.stats = &stats;

    const auto prompt = prompt_with_image("cached question");
    EXPECT_EQ(query(client, prompt, options), "fake");
    EXPECT_EQ(client.network_calls(), 1);
    EXPECT_EQ(stats.misses, 1);

    EXPECT_EQ(query(client, prompt, options), "fake");
    EXPECT_EQ(client.network_calls(), 1);  // unchanged: served from cache
    EXPECT_EQ(stats.hits, 1);
    EXPECT_EQ(stats.lookups, 2);
    std::filesystem::remove_all(dir);
}

TEST(Cache, KeySeparatesImagesWithIdenticalText) {
    const auto with_image_a = prompt_with_image("same text");
    auto with_image_b = with_image_a;
    with_image_b.segments[1] = ImageRef{
        "img", std::make_shared<const std::vector<unsigned char>>(
                   imfnd::testing::make_ppm(2, 2, 99))};
    EXPECT_NE(ResponseCache::key_for("m", with_image_a),
              ResponseCache::key_for("m", with_image_b));
}

TEST(Cache, EntriesSurviveAndListAndClear) {
    const auto dir = imfnd::testing::make_temp_dir("cache2");
    ResponseCache cache(dir);
    cache.store("abc123", "model-x", "the response\nwith two lines");
    const auto loaded = cache.load("abc123");
    ASSERT_TRUE(loaded.has_value());
    EXPECT_EQ(*loaded, "the response\nwith two lines");

    const auto entries = cache.list();
    ASSERT_EQ(entries.size(), 1u);
    EXPECT_EQ(entries[0].key, "abc123");
    EXPECT_EQ(entries[0].model_id, "model-x");

    EXPECT_EQ(cache.clear(), 1u);
    EXPECT_FALSE(cache.load("abc123").has_value());
    std::filesystem::remove_all(dir);
}

TEST(Cache, DeterministicWithinRun) {
    const auto dir = imfnd::testing::make_temp_dir("cache3");
    ResponseCache cache(dir);
    EchoSmallModelClient client;
    QueryOptions options;
    options.cache = &cache;
    const auto prompt =
        text_prompt("Multimodal classifier prediction: real with 80% confidence.");
    const std::string first = query(client, prompt, options);
    const std::string second = query(client, prompt, options);
    EXPECT_EQ(first, second);
    std::filesystem::remove_all(dir);
}

// Remote client against a local HTTP server.
class RemoteClientTest : public ::testing::Test {
protected:
    void SetUp() override {
        setenv("IMFND_TEST_API_KEY", "test-key-123", 1);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    RemoteClientConfig config() {
        RemoteClientConfig cfg;
        cfg.model_id = "test-model";
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port_);
        cfg.api_key_env = "IMFND_TEST_API_KEY";
        cfg.timeout_s = 5;
        return cfg;
    }

    static std::string chat_response(const std::string& content) {
        return nlohmann::json{
            {"choices",
             nlohmann::json::array(
                 {{{"message", {{"role", "assistant"}, {"content", content}}}}})}}
            .dump();
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(RemoteClientTest, SendsInterleavedContentAndParsesAnswer) {
    nlohmann::json seen_body;
    std::string seen_auth;
    server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = nlohmann::json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        res.set_content(chat_response("this looks fake"), "application/json");
    });

    RemoteClient client(config());
    const auto prompt = prompt_with_image("Is this real or fake?");
    EXPECT_EQ(client.complete(prompt), "this looks fake");

    EXPECT_EQ(seen_auth, "Bearer test-key-123");
    EXPECT_EQ(seen_body["model"], "test-model");
    // Temperature forwarded verbatim from the prompt.
    EXPECT_DOUBLE_EQ(seen_body["temperature"].get<double>(), 0.2);
    const auto& content = seen_body["messages"][0]["content"];
    ASSERT_EQ(content.size(), 2u);
    EXPECT_EQ(content[0]["type"], "text");
    EXPECT_EQ(content[1]["type"], "image_url");
    const std::string url = content[1]["image_url"]["url"].get<std::string>();
    EXPECT_EQ(url.rfind("data:", 0), 0u);
    EXPECT_NE(url.find(";base64,"), std::string::npos);
}

TEST_F(RemoteClientTest, NonDefaultTemperatureForwarded) {
    double seen_temperature = -1.0;
    server_.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_temperature = nlohmann::json::parse(req.body)["temperature"].get<double>();
        res.set_content(chat_response("real"), "application/json");
    });
    RemoteClient client(config());
    client.complete(text_prompt("q", 0.9));
    EXPECT_DOUBLE_EQ(seen_temperature, 0.9);
}

TEST_F(RemoteClientTest, TransientFailuresThenSuccessViaQuery) {
    std::atomic<int> calls{0};
    server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (calls.fetch_add(1) < 2) {
            res.status = 503;
            res.set_content("overloaded", "text/plain");
        } else {
            res.set_content(chat_response("real"), "application/json");
        }
    });
    RemoteClient client(config());
    QueryOptions options;
    options.max_retries = 3;
    options.initial_backoff_s = 0.0;
    EXPECT_EQ(query(client, text_prompt("q"), options), "real");
    EXPECT_EQ(client.network_calls(), 3);
}

TEST_F(RemoteClientTest, AuthRejectionMapsToAuthError) {
    server_.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("unauthorized", "text/plain");
    });
    RemoteClient client(config());
    EXPECT_THROW(client.complete(text_prompt("q")), AuthError);
}

TEST_F(RemoteClientTest, MissingCredentialsFailFast) {
    RemoteClientConfig cfg = config();
    cfg.api_key_env = "IMFND_UNSET_ENV_VAR";
    unsetenv("IMFND_UNSET_ENV_VAR");
    RemoteClient client(cfg);
    EXPECT_THROW(client.complete(text_prompt("q")), AuthError);
}

TEST(Base64, KnownVectors) {
    auto enc = [](const std::string& s) {
        return base64_encode(std::vector<unsigned char>(s.begin(), s.end()));
    };
    EXPECT_EQ(enc(""), "");
    EXPECT_EQ(enc("f"), "Zg==");
    EXPECT_EQ(enc("fo"), "Zm8=");
    EXPECT_EQ(enc("foo"), "Zm9v");
    EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}
