#include <gtest/gtest.h>

#include "support.hpp"

using namespace riley;

namespace {

struct Rig {
  Config cfg;
  std::shared_ptr<MockBackend> backend;
  Gateway gw;
  EventLog log;
  PipelineContext ctx;

  explicit Rig(MockBackend::Options opts = {}, Config c = {})
      : cfg(std::move(c)),
        backend(std::make_shared<MockBackend>(std::move(opts))),
        gw(backend, cfg.backend),
        ctx{gw, cfg, &log} {}

  std::vector<EmotionAgent> agents() const {
    return init_agents(EmotionRegistry::from(cfg.emotions), cfg.personas);
  }
};

// Last user prompt sent to each emotion in the given round.
std::map<std::string, std::string> prompts_for_round(const Gateway& gw, int round) {
  std::map<std::string, std::string> out;
  for (const auto& c : gw.calls())
    if (c.tag.stage == "debate" && c.tag.round == round) out[c.tag.emotion] = c.messages.back().content;
  return out;
}

}  // namespace

TEST(Emotion, InitAgentsForFullAndReducedRegistry) {
  Config cfg;
  auto five = init_agents(EmotionRegistry::from(cfg.emotions), cfg.personas);
  ASSERT_EQ(five.size(), 5u);
  for (const auto& a : five) {
    ASSERT_EQ(a.history().size(), 1u);
    EXPECT_EQ(a.history()[0].role, Role::System);
    EXPECT_TRUE(text::contains(a.persona_prompt(), "[emotion: " + a.id().name() + "]"));
  }
  auto two = init_agents(EmotionRegistry::from({"Joy", "Fear"}), cfg.personas);
  EXPECT_EQ(two.size(), 2u);
}

TEST(Emotion, MissingPersona) {
  Config cfg;
  try {
    init_agents(EmotionRegistry::from({"Joy", "Envy"}), cfg.personas);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPersona);
  }
}

TEST(Emotion, RegistryIsCaseInsensitive) {
  auto r = EmotionRegistry::from({"Joy", "Fear"});
  EXPECT_EQ(r.find("fEAR")->name(), "Fear");
  EXPECT_FALSE(r.contains("Anger"));
  EXPECT_THROW(EmotionRegistry::from({"Joy", "joy"}), Error);
  EXPECT_THROW(EmotionRegistry::from({}), Error);
}

TEST(Emotion, HistoriesAreIsolated) {
  Config cfg;
  auto agents = init_agents(EmotionRegistry::from(cfg.emotions), cfg.personas);
  agents[0].append(ChatMessage::user("only for Joy"));
  for (std::size_t i = 1; i < agents.size(); ++i) EXPECT_EQ(agents[i].history().size(), 1u);
  EXPECT_THROW(agents[0].append(ChatMessage::system("again")), Error);
}

TEST(Emotion, InjectionCarriesContextAndImage) {
  Config cfg;
  auto agents = init_agents(EmotionRegistry::from(cfg.emotions), cfg.personas);
  inject_user_turn(agents, {"A fire is happening! What should I do?", "It's difficult to breathe.", "MOCK-IMG:1"});
  for (const auto& a : agents) {
    ASSERT_EQ(a.history().size(), 2u);
    EXPECT_EQ(a.history()[1].content,
              "A fire is happening! What should I do?\n\nCONTEXT: It's difficult to breathe.\n\nIMAGE: MOCK-IMG:1");
  }
  EXPECT_THROW(inject_user_turn(agents, {"  ", std::nullopt, std::nullopt}), Error);
}

TEST(Debate, ProducesTwentyOutputsOverFourRounds) {
  Rig rig;
  auto agents = rig.agents();
  auto t = run_debate(rig.ctx, agents, {"A fire is happening! What should I do?", std::nullopt, std::nullopt});
  ASSERT_TRUE(t.complete());
  EXPECT_EQ(t.output_count(), 20u);
  for (const auto& r : t.rounds) EXPECT_TRUE(r.complete_for(agents));
  EXPECT_EQ(rig.log.count(EventKind::Generation), 20u);
  EXPECT_EQ(rig.log.count(EventKind::RoundStarted), 4u);
  // persona, user, then per round: (prompt?) + reply. Round 0 has no prompt.
  for (const auto& a : agents) EXPECT_EQ(a.history().size(), 2u + 1u + 2u * 3u);
}

TEST(Debate, PeerPromptsExcludeSelf) {
  Rig rig;
  auto agents = rig.agents();
  run_debate(rig.ctx, agents, {"A fire is happening!", std::nullopt, std::nullopt});
  for (int round : {1, 2}) {
    auto prompts = prompts_for_round(rig.gw, round);
    ASSERT_EQ(prompts.size(), 5u);
    for (const auto& [self, prompt] : prompts) {
      for (const auto& other : rig.cfg.emotions) {
        bool labelled = text::contains(prompt, "\n" + other + ": ") || text::contains(prompt, "\n\n" + other + ": ");
        if (other == self) {
          EXPECT_FALSE(labelled) << self << " round " << round;
        } else {
          EXPECT_TRUE(labelled) << other << " missing from " << self << " round " << round;
        }
      }
    }
  }
}

TEST(Debate, RoundThreeRestatesQueryVerbatim) {
  Rig rig;
  auto agents = rig.agents();
  const std::string q = "Where is the fire happening?";
  run_debate(rig.ctx, agents, {q, "I'm alone.", std::nullopt});
  for (const auto& [emotion, prompt] : prompts_for_round(rig.gw, 3)) {
    EXPECT_TRUE(text::contains(prompt, q)) << emotion;
    EXPECT_FALSE(text::contains(prompt, "MOCK[")) << emotion;
  }
}

TEST(Debate, RoundOrderPreconditions) {
  Rig rig;
  auto agents = rig.agents();
  inject_user_turn(agents, {"q", std::nullopt, std::nullopt});
  auto r0 = run_round0(rig.ctx, agents);
  auto r1 = run_round1(rig.ctx, agents, r0);
  EXPECT_THROW(run_round1(rig.ctx, agents, r1), Error);
  RoundOutputs partial = r1;
  partial.outputs.erase(partial.outputs.begin());
  EXPECT_THROW(run_round2(rig.ctx, agents, partial), Error);
  auto fresh = rig.agents();
  EXPECT_THROW(run_round0(rig.ctx, fresh), Error);
}

TEST(Debate, RoundsAreSeparatedByBarriers) {
  MockBackend::Options opts;
  opts.max_jitter = std::chrono::microseconds(3000);
  Rig rig(opts);
  auto agents = rig.agents();
  run_debate(rig.ctx, agents, {"A fire is happening!", std::nullopt, std::nullopt});
  std::map<int, std::pair<std::uint64_t, std::uint64_t>> span;  // round -> (min start, max finish)
  for (const auto& c : rig.gw.calls()) {
    auto& s = span.try_emplace(c.tag.round, UINT64_MAX, 0).first->second;
    s.first = std::min(s.first, c.started_tick);
    s.second = std::max(s.second, c.finished_tick);
  }
  ASSERT_EQ(span.size(), 4u);
  for (int r = 1; r < 4; ++r) EXPECT_LT(span[r - 1].second, span[r].first) << "round " << r;

  // Event trace: each round's generations follow its round_started and
  // precede the next one.
  int current = -1;
  for (const auto& e : rig.log.snapshot()) {
    if (e.kind == EventKind::RoundStarted) current = *e.round;
    if (e.kind == EventKind::Generation) { EXPECT_EQ(*e.round, current); }
  }
}

TEST(Debate, OutputsDoNotDependOnAgentOrder) {
  Rig a, b;
  auto fwd = a.agents();
  auto rev = b.agents();
  std::reverse(rev.begin(), rev.end());
  UserTurn turn{"A fire is happening!", "It's difficult to breathe.", std::nullopt};
  auto ta = run_debate(a.ctx, fwd, turn);
  auto tb = run_debate(b.ctx, rev, turn);
  for (int r = 0; r < kDebateRounds; ++r) EXPECT_EQ(ta.rounds[r].outputs, tb.rounds[r].outputs) << "round " << r;
}

TEST(Debate, SequentialAndParallelAgree) {
  Config seq;
  seq.debate.parallel = false;
  Rig a, b({}, seq);
  auto x = a.agents();
  auto y = b.agents();
  UserTurn turn{"Help", std::nullopt, std::nullopt};
  EXPECT_EQ(run_debate(a.ctx, x, turn).final_round().outputs, run_debate(b.ctx, y, turn).final_round().outputs);
}

TEST(Debate, FailureAbortsAndKeepsEarlierEvents) {
  MockBackend::Options opts;
  opts.script = [](const MockRequest& r) -> std::optional<std::string> {
    if (MockBackend::marker_for(r.messages) == "anger" && r.messages.size() > 5)
      throw Error(ErrorCode::TransportError, "connection refused");
    return std::nullopt;
  };
  Rig rig(opts);
  auto agents = rig.agents();
  try {
    run_debate(rig.ctx, agents, {"q", std::nullopt, std::nullopt});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TransportError);
    EXPECT_EQ(e.stage(), "round 2");
    EXPECT_EQ(e.emotion(), "Anger");
  }
  std::size_t r01 = 0;
  for (const auto& e : rig.log.snapshot())
    if (e.kind == EventKind::Generation && *e.round <= 1) ++r01;
  EXPECT_EQ(r01, 10u);
}
