#include <gtest/gtest.h>

#include <condition_variable>
#include <future>
#include <set>

#include "support.hpp"

using namespace riley;
using namespace riley::testing;

namespace {

std::map<EventKind, std::size_t> kind_counts(const std::vector<LogEvent>& events) {
  std::map<EventKind, std::size_t> m;
  for (const auto& e : events) ++m[e.kind];
  return m;
}

}  // namespace

TEST(Session, CreateLogsHeaderAndArmandoWarning) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  auto riley_id = mgr.create(SynthesisMode::Riley);
  auto armando_id = mgr.create(SynthesisMode::Armando);
  EXPECT_NE(riley_id, armando_id);
  EXPECT_EQ(riley_id.size(), 32u);

  auto r = mgr.get(riley_id);
  EXPECT_EQ(r->agents().size(), 5u);
  EXPECT_EQ(r->log().size(), 1u);
  auto header = r->log().snapshot().front();
  EXPECT_EQ(header.kind, EventKind::SessionStart);
  EXPECT_EQ(header.payload["models"]["reasoning"], Config{}.backend.reasoning_model);
  EXPECT_EQ(header.payload["personas"].size(), 5u);

  auto a = mgr.get(armando_id);
  EXPECT_EQ(a->log().count(EventKind::Warning), 1u);
}

TEST(Session, OverridesApplyPerSession) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  auto id = mgr.create(SynthesisMode::Riley, json::parse(R"({"emotions": ["Joy", "Fear"]})"));
  EXPECT_EQ(mgr.get(id)->agents().size(), 2u);
  EXPECT_THROW(mgr.create(SynthesisMode::Riley, json::parse(R"({"emotions": ["Joy", "Envy"]})")), Error);
}

TEST(Session, DistinctIds) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  std::set<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.insert(mgr.create(SynthesisMode::Riley));
  EXPECT_EQ(ids.size(), 50u);
}

TEST(Session, UnknownSession) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  try {
    mgr.ask("nope", "hello");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSession);
  }
}

TEST(Session, RileyAskEventCounts) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  auto id = mgr.create(SynthesisMode::Riley);
  auto answer = mgr.ask(id, "A fire is happening! What should I do?");
  EXPECT_FALSE(answer.final.empty());
  ASSERT_TRUE(answer.thoughts);
  auto counts = kind_counts(mgr.get(id)->log().snapshot());
  EXPECT_EQ(counts[EventKind::Generation], 20u);
  EXPECT_EQ(counts[EventKind::Vote] + counts[EventKind::Abstention], 5u);
  EXPECT_EQ(counts[EventKind::Tally], 1u);
  EXPECT_EQ(counts[EventKind::Synthesis], 1u);
  EXPECT_EQ(counts[EventKind::Retrieval], 0u);
  EXPECT_EQ(counts[EventKind::ContextUpdate], 0u);
  EXPECT_EQ(mgr.get(id)->gateway().call_count(), 20u + 5u + 1u);
}

TEST(Session, ContextAndImageReachEveryAgentOnce) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  auto id = mgr.create(SynthesisMode::Riley);
  auto png = read_bytes(fixture_dir() / "images" / "pixel.png");
  mgr.submit_context(id, "I'm alone.");
  auto desc = mgr.submit_image(id, png);
  EXPECT_EQ(desc, "MOCK-IMG:070200a6cfa956b1");
  mgr.ask(id, "A fire is happening! What should I do?");
  auto s = mgr.get(id);
  for (const auto& a : s->agents()) {
    EXPECT_EQ(a.history()[1].content,
              "A fire is happening! What should I do?\n\nCONTEXT: I'm alone.\n\nIMAGE: MOCK-IMG:070200a6cfa956b1");
  }
  mgr.ask(id, "Is it safe to use the elevator?");
  for (const auto& a : s->agents()) {
    const auto& turn = a.history()[9];
    EXPECT_EQ(turn.role, Role::User);
    EXPECT_EQ(turn.content, "Is it safe to use the elevator?");
  }
  EXPECT_EQ(s->log().count(EventKind::ImageDescription), 1u);
  EXPECT_EQ(s->log().count(EventKind::ContextSubmitted), 1u);
  EXPECT_THROW(mgr.submit_context(id, "   "), Error);
  EXPECT_THROW(mgr.submit_image(id, std::vector<std::uint8_t>{1, 2, 3}), Error);
}

TEST(Session, BusyWhileAskInFlight) {
  std::mutex mu;
  std::condition_variable cv;
  bool entered = false, release = false;
  MockBackend::Options opts;
  opts.script = [&](const MockRequest&) -> std::optional<std::string> {
    std::unique_lock lk(mu);
    entered = true;
    cv.notify_all();
    cv.wait(lk, [&] { return release; });
    return std::nullopt;
  };
  SessionManager mgr(Config{}, std::make_shared<MockBackend>(opts));
  auto id = mgr.create(SynthesisMode::Riley);
  auto fut = std::async(std::launch::async, [&] { return mgr.ask(id, "first"); });
  {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return entered; });
  }
  try {
    mgr.ask(id, "second");
    ADD_FAILURE() << "expected Busy";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Busy);
  }
  EXPECT_THROW(mgr.submit_context(id, "late"), Error);
  {
    std::lock_guard lk(mu);
    release = true;
  }
  cv.notify_all();
  EXPECT_NO_THROW(fut.get());
  EXPECT_NO_THROW(mgr.ask(id, "third"));
}

TEST(Session, FailureIsLoggedAndSessionStaysUsable) {
  std::atomic<bool> fail{true};
  MockBackend::Options opts;
  opts.script = [&](const MockRequest& r) -> std::optional<std::string> {
    if (fail && r.role == BackendRole::Reasoning) throw Error(ErrorCode::ModelNotFound, "reasoning model missing");
    return std::nullopt;
  };
  SessionManager mgr(Config{}, std::make_shared<MockBackend>(opts));
  auto id = mgr.create(SynthesisMode::Riley);
  EXPECT_THROW(mgr.ask(id, "q"), Error);
  auto s = mgr.get(id);
  ASSERT_EQ(s->log().count(EventKind::Error), 1u);
  auto err = s->log().snapshot().back();
  EXPECT_EQ(err.payload["code"], "ModelNotFound");
  EXPECT_EQ(err.payload["stage"], "vote");
  EXPECT_EQ(s->log().count(EventKind::Generation), 20u);
  fail = false;
  EXPECT_NO_THROW(mgr.ask(id, "q again"));
}

TEST(Session, TranscriptFormatsAndReplay) {
  SessionManager mgr(Config{}, std::make_shared<MockBackend>());
  auto id = mgr.create(SynthesisMode::Riley);
  const std::string header_only = mgr.get_transcript(id);
  EXPECT_EQ(std::count(header_only.begin(), header_only.end(), '\n'), 1);
  mgr.ask(id, "A fire is happening!");
  auto jsonl = mgr.get_transcript(id, "jsonl");
  EXPECT_EQ(jsonl, mgr.get_transcript(id, "jsonl"));
  auto events = replay_jsonl(jsonl);
  auto live = mgr.get(id)->log().snapshot();
  ASSERT_EQ(events.size(), live.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    EXPECT_EQ(events[i].seq, i + 1);
    EXPECT_EQ(events[i].to_json(), live[i].to_json());
  }
  auto doc = json::parse(mgr.get_transcript(id, "json"));
  EXPECT_EQ(doc["events"].size(), live.size());
  EXPECT_EQ(doc["session"], id);
  EXPECT_THROW(mgr.get_transcript(id, "xml"), Error);
}

TEST(Session, ArmandoAskGroundsSynthesis) {
  auto index = fixture_index();
  SessionManager mgr(Config{}, std::make_shared<MockBackend>(), index);
  auto id = mgr.create(SynthesisMode::Armando);
  auto answer = mgr.ask(id, "Where is the fire happening?");
  EXPECT_FALSE(answer.thoughts);
  auto s = mgr.get(id);
  auto counts = kind_counts(s->log().snapshot());
  EXPECT_EQ(counts[EventKind::Generation], 20u);
  EXPECT_EQ(counts[EventKind::ContextUpdate], 1u);
  EXPECT_EQ(counts[EventKind::Retrieval], 1u);
  EXPECT_EQ(counts[EventKind::Warning], 0u);
  for (const auto& e : s->log().snapshot()) {
    if (e.kind == EventKind::Retrieval) { EXPECT_EQ(e.payload["hits"][0]["doc_id"], "incident_current"); }
    if (e.kind == EventKind::Synthesis) {
      EXPECT_TRUE(e.payload["grounded"].get<bool>());
      EXPECT_TRUE(text::contains(e.payload["prompt"].get<std::string>(), "Rua de São Bento 112"));
    }
  }
  auto calls = s->gateway().calls();
  for (const auto& c : calls) {
    if (c.tag.stage == "debate") { EXPECT_FALSE(text::contains(c.messages.back().content, "Rua de São Bento")); }
    if (c.tag.stage == "vote" || c.tag.stage == "synthesis") { EXPECT_EQ(c.role, BackendRole::Text); }
  }
  mgr.ask(id, "Is it safe to use the elevator?");
  auto ctx = s->cumulative_context();
  EXPECT_EQ(ctx.recent_questions.size(), 2u);
  EXPECT_FALSE(ctx.topics.empty());
}

TEST(Session, ConcurrentSessionsAreIndependent) {
  MockBackend::Options opts;
  opts.max_jitter = std::chrono::microseconds(500);
  SessionManager mgr(Config{}, std::make_shared<MockBackend>(opts));
  auto a = mgr.create(SynthesisMode::Riley);
  auto b = mgr.create(SynthesisMode::Riley);
  auto fa = std::async(std::launch::async, [&] { return mgr.ask(a, "same question"); });
  auto fb = std::async(std::launch::async, [&] { return mgr.ask(b, "same question"); });
  auto ra = fa.get();
  auto rb = fb.get();
  EXPECT_EQ(ra.final, rb.final);
  EXPECT_EQ(mgr.get(a)->log().size(), mgr.get(b)->log().size());
  EXPECT_EQ(mgr.get(a)->gateway().call_count(), 26u);
}
