#include <gtest/gtest.h>

#include <thread>

#include "support.hpp"

using namespace riley;
using riley::testing::fixture_dir;
using riley::testing::read_bytes;

namespace {

Gateway mock_gateway(MockBackend::Options opts = {}) {
  return Gateway(std::make_shared<MockBackend>(std::move(opts)), BackendConfig{});
}

GenerationParams text_params(const Gateway& gw) { return gw.params_for(BackendRole::Text, 0.8); }

}  // namespace

TEST(Text, RenderSubstitutesKnownKeysOnly) {
  EXPECT_EQ(text::render("{a} and {b} and {c}", {{"a", "1"}, {"b", "2"}}), "1 and 2 and {c}");
}

TEST(Text, StripThinkSpans) {
  EXPECT_EQ(text::trim(text::strip_think_spans("<think>hmm\nok</think>\nVOTE: Joy")), "VOTE: Joy");
}

TEST(Text, Base64RoundTrip) {
  std::vector<std::uint8_t> data = {0, 1, 2, 250, 251, 252, 253};
  std::vector<std::uint8_t> back;
  ASSERT_TRUE(text::base64_decode(text::base64_encode(data), back));
  EXPECT_EQ(back, data);
  EXPECT_EQ(text::base64_encode(std::vector<std::uint8_t>{'M', 'a'}), "TWE=");
}

// Digests below come from a separate script implementing FNV-1a-64.
TEST(MockBackend, PlainReplyIsDigestOfContents) {
  auto gw = mock_gateway();
  auto reply = gw.chat(BackendRole::Text, {ChatMessage::user("ping")}, text_params(gw));
  EXPECT_EQ(reply.role, Role::Assistant);
  EXPECT_EQ(reply.content, "MOCK[joy-less]:bf30e00dc53307a9");
}

TEST(MockBackend, MarkerComesFromEmotionTag) {
  auto gw = mock_gateway();
  auto reply = gw.chat(BackendRole::Text, {ChatMessage::system("[emotion: Fear]\nhi"), ChatMessage::user("ping")},
                       text_params(gw));
  EXPECT_EQ(reply.content, "MOCK[fear]:531f4e7aa160a8cb");
}

TEST(MockBackend, VisionReplyHashesImageBytes) {
  auto gw = mock_gateway();
  auto png = read_bytes(fixture_dir() / "images" / "pixel.png");
  EXPECT_EQ(gw.describe_image(png, "Describe this image in detail."), "MOCK-IMG:070200a6cfa956b1");
}

TEST(MockBackend, RepliesArePureFunctionsOfTheRequest) {
  MockBackend a, b;
  std::vector<ChatMessage> msgs{ChatMessage::system("[emotion: Joy]"), ChatMessage::user("A fire is happening!")};
  GenerationParams p1{"m", 0.8, 1, std::nullopt}, p2{"m", 0.2, 99, 12};
  EXPECT_EQ(a.chat(BackendRole::Text, msgs, p1), b.chat(BackendRole::Text, msgs, p2));
  EXPECT_EQ(a.chat(BackendRole::Text, msgs, p1), a.chat(BackendRole::Text, msgs, p1));
}

TEST(MockBackend, EmbedderBucketsTokens) {
  // "fire" -> bucket 185 and "smoke" -> bucket 166 under FNV-1a-64 % 256.
  auto v = hashed_bag_of_words("Fire!");
  ASSERT_EQ(v.size(), 256u);
  EXPECT_DOUBLE_EQ(v[185], 1.0);
  auto w = hashed_bag_of_words("fire FIRE smoke");
  EXPECT_NEAR(w[185], 2.0 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(w[166], 1.0 / std::sqrt(5.0), 1e-15);
  EXPECT_THROW(hashed_bag_of_words("!!!"), Error);
}

TEST(Gateway, EmptyMessagesArePreconditionViolations) {
  auto gw = mock_gateway();
  try {
    gw.chat(BackendRole::Text, {}, text_params(gw));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PreconditionViolation);
  }
  EXPECT_EQ(gw.call_count(), 0u);
}

TEST(Gateway, RejectsBadParamsAndMessages) {
  auto gw = mock_gateway();
  auto p = text_params(gw);
  p.temperature = 2.5;
  EXPECT_THROW(gw.chat(BackendRole::Text, {ChatMessage::user("x")}, p), Error);
  EXPECT_THROW(gw.chat(BackendRole::Text, {ChatMessage::user("x"), ChatMessage::system("late")}, text_params(gw)),
               Error);
  EXPECT_THROW(gw.chat(BackendRole::Embedding, {ChatMessage::user("x")}, text_params(gw)), Error);
}

TEST(Gateway, EverySuccessfulCallIsLoggedOnce) {
  auto gw = mock_gateway();
  for (int i = 0; i < 7; ++i) gw.chat(BackendRole::Text, {ChatMessage::user("q" + std::to_string(i))}, text_params(gw));
  gw.embed("fire");
  auto calls = gw.calls();
  ASSERT_EQ(calls.size(), 8u);
  for (std::size_t i = 0; i < calls.size(); ++i) {
    EXPECT_EQ(calls[i].id, i + 1);
    EXPECT_LT(calls[i].started_tick, calls[i].finished_tick);
  }
  EXPECT_EQ(calls.back().operation, "embed");
  EXPECT_EQ(calls.front().params.model, BackendConfig{}.text_model);
}

TEST(Gateway, RetriesOnceOnRetryableFailure) {
  int n = 0;
  MockBackend::Options opts;
  opts.script = [&](const MockRequest&) -> std::optional<std::string> {
    if (++n == 1) throw Error(ErrorCode::TransportError, "connection reset", true);
    return std::nullopt;
  };
  auto gw = mock_gateway(opts);
  auto reply = gw.chat(BackendRole::Text, {ChatMessage::user("ping")}, text_params(gw));
  EXPECT_EQ(reply.content, "MOCK[joy-less]:bf30e00dc53307a9");
  EXPECT_EQ(gw.calls().front().attempts, 2);
}

TEST(Gateway, EmptyCompletionAfterRetry) {
  MockBackend::Options opts;
  opts.script = [](const MockRequest&) -> std::optional<std::string> { return std::string("  \n"); };
  auto gw = mock_gateway(opts);
  try {
    gw.chat(BackendRole::Text, {ChatMessage::user("ping")}, text_params(gw));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCompletion);
  }
  EXPECT_EQ(gw.call_count(), 0u);
}

TEST(Gateway, NonRetryableErrorsPropagateImmediately) {
  int n = 0;
  MockBackend::Options opts;
  opts.script = [&](const MockRequest&) -> std::optional<std::string> {
    ++n;
    throw Error(ErrorCode::ModelNotFound, "no such model");
  };
  auto gw = mock_gateway(opts);
  EXPECT_THROW(gw.chat(BackendRole::Text, {ChatMessage::user("x")}, text_params(gw)), Error);
  EXPECT_EQ(n, 1);
}

TEST(Gateway, ImageValidation) {
  auto gw = mock_gateway();
  auto png = read_bytes(fixture_dir() / "images" / "pixel.png");
  auto jpg = read_bytes(fixture_dir() / "images" / "flame.jpg");
  EXPECT_NO_THROW(validate_image(png));
  EXPECT_NO_THROW(validate_image(jpg));
  std::vector<std::uint8_t> junk = {'G', 'I', 'F', '8', '9', 'a'};
  try {
    gw.describe_image(junk, "Describe");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidImage);
  }
  std::vector<std::uint8_t> truncated(png.begin(), png.begin() + 20);
  EXPECT_THROW(validate_image(truncated), Error);
  jpg.pop_back();
  EXPECT_THROW(validate_image(jpg), Error);
}

TEST(Gateway, ImageBytesAreNotKeptInTheCallLog) {
  auto gw = mock_gateway();
  auto png = read_bytes(fixture_dir() / "images" / "pixel.png");
  gw.describe_image(png, "Describe");
  auto rec = gw.calls().front();
  EXPECT_EQ(rec.role, BackendRole::Vision);
  ASSERT_EQ(rec.image_sizes.size(), 1u);
  EXPECT_EQ(rec.image_sizes[0], png.size());
  for (const auto& m : rec.messages) EXPECT_TRUE(m.images.empty());
}

TEST(Gateway, EmbeddingDimensionIsLocked) {
  int dim = 256;
  struct Flaky : Backend {
    int* dim;
    std::string chat(BackendRole, std::span<const ChatMessage>, const GenerationParams&) override { return "x"; }
    std::vector<double> embed(std::string_view, std::string_view in) override {
      return hashed_bag_of_words(in, static_cast<std::size_t>(*dim));
    }
  };
  auto b = std::make_shared<Flaky>();
  b->dim = &dim;
  Gateway gw(b, BackendConfig{});
  EXPECT_EQ(gw.embed("fire").dimension(), 256u);
  dim = 128;
  try {
    gw.embed("fire");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Gateway, ConcurrentCallsAllRecorded) {
  MockBackend::Options opts;
  opts.max_jitter = std::chrono::microseconds(2000);
  auto gw = mock_gateway(opts);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i)
        gw.chat(BackendRole::Text, {ChatMessage::user(std::to_string(t * 100 + i))}, text_params(gw));
    });
  for (auto& th : threads) th.join();
  auto calls = gw.calls();
  ASSERT_EQ(calls.size(), 40u);
  for (std::size_t i = 0; i < calls.size(); ++i) EXPECT_EQ(calls[i].id, i + 1);
}

TEST(Config, JsonOverridesAndValidation) {
  Config cfg;
  apply_json(cfg, json::parse(R"({"backend": {"agent_temperature": 0.5}, "rag": {"k": 2}})"));
  EXPECT_DOUBLE_EQ(cfg.backend.agent_temperature, 0.5);
  EXPECT_EQ(cfg.rag.k, 2u);
  Config bad;
  EXPECT_THROW(apply_json(bad, json::parse(R"({"backend": {"agent_temperature": "hot"}})")), Error);
  try {
    apply_json(bad, json::parse(R"({"backend": 3})"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(Config, DefaultModelRoster) {
  Config cfg;
  EXPECT_EQ(cfg.backend.text_model, "huihui_ai/llama3.2-abliterate:3b");
  EXPECT_EQ(cfg.backend.vision_model, "gemma3:4b");
  EXPECT_EQ(cfg.backend.reasoning_model, "huihui_ai/deepseek-r1-abliterated:8b");
  EXPECT_EQ(cfg.backend.embed_model, "mxbai-embed-large");
  EXPECT_EQ(cfg.emotions.size(), 5u);
  EXPECT_NO_THROW(validate(cfg));
}
