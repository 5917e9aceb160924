#include <doctest.h>

#include <algorithm>
#include <random>

#include "fakescope/fusion.hpp"
#include "fakescope/serialization.hpp"
#include "support.hpp"

using namespace fakescope;
using fakescope::testing::error_code_of;
using fakescope::testing::Reply;

namespace {

enum class Vote { R, G, X };  // X: rejected

Verdict verdict_of(Vote v) {
  switch (v) {
    case Vote::R: return Verdict::decided(Label::Real, "real");
    case Vote::G: return Verdict::decided(Label::Generated, "generated");
    case Vote::X: return Verdict::rejected();
  }
  return Verdict::unparsable();
}

PromptOutcome outcome(StrategyId id, Vote v, std::string rationale = "because") {
  PromptOutcome o;
  o.strategy = id;
  o.image_id = "img";
  o.verdict = verdict_of(v);
  o.rationale = std::move(rationale);
  o.query_count = 1;
  return o;
}

std::vector<PromptOutcome> ensemble(const std::array<Vote, 6>& votes) {
  std::vector<PromptOutcome> out;
  for (std::size_t i = 0; i < 6; ++i) out.push_back(outcome(kEnsemble[i], votes[i]));
  return out;
}

// Independent reading of the voting rule: count, compare, defer to P0 on ties.
struct Expected {
  std::optional<Label> label;
  bool tie_broken;
};

Expected oracle(const std::array<Vote, 6>& votes, Vote p0) {
  int r = 0;
  int g = 0;
  for (Vote v : votes) {
    r += v == Vote::R;
    g += v == Vote::G;
  }
  if (r > g) return {Label::Real, false};
  if (g > r) return {Label::Generated, false};
  if (p0 == Vote::R) return {Label::Real, true};
  if (p0 == Vote::G) return {Label::Generated, true};
  return {std::nullopt, true};
}

std::array<Vote, 6> pattern(int code) {
  std::array<Vote, 6> votes{};
  for (int i = 0; i < 6; ++i) {
    votes[i] = static_cast<Vote>(code % 3);
    code /= 3;
  }
  return votes;
}

struct Fixture {
  StrategyConfig config = fakescope::testing::test_strategy_config();
  PromptCatalog prompts = PromptCatalog::bundled();
  ImageRecord image{"img", fakescope::testing::png_bytes(80, 60, 5), Label::Generated, {}, Family::Diffusion};
  LocalContrastProvider saliency{16};

  std::unique_ptr<ScriptedBackend> backend;
  explicit Fixture(std::vector<ScriptEntry> entries = fakescope::testing::wildcard_entries())
      : backend(scripted_backend(std::move(entries))) {}
  StrategyContext ctx() { return {*backend, config, prompts}; }
};

std::vector<ScriptEntry> with_reply(std::vector<ScriptEntry> entries, const std::string& kind,
                                    const std::string& reply) {
  for (auto& e : entries) {
    if (e.kind == kind) e.reply = reply;
  }
  return entries;
}

}  // namespace

TEST_CASE("majority vote matches the brute-force oracle on all 3^6 patterns") {
  int checked = 0;
  for (int code = 0; code < 729; ++code) {
    const auto votes = pattern(code);
    for (Vote p0 : {Vote::R, Vote::G, Vote::X}) {
      int consulted = 0;
      const FusionResult r = majority_vote(ensemble(votes), [&] {
        ++consulted;
        PromptOutcome o = outcome(StrategyId::P0, p0);
        return o;
      });
      const Expected want = oracle(votes, p0);
      CHECK(r.verdict.label == want.label);
      CHECK(r.tie_broken == want.tie_broken);
      CHECK(consulted == (want.tie_broken ? 1 : 0));
      CHECK(r.verdict.kind == (want.label ? VerdictKind::Decided : VerdictKind::Unparsable));
      CHECK(r.contributing.size() == 6);
      CHECK(r.mode == FusionMode::MajorityVote);
      CHECK(r.rationale.empty() == !want.tie_broken);
      ++checked;
    }
  }
  CHECK(checked == 729 * 3);
}

TEST_CASE("majority vote examples") {
  using V = Vote;
  const auto none = TieBreaker{};
  CHECK(majority_vote(ensemble({V::R, V::R, V::R, V::R, V::R, V::R}), none).verdict.label == Label::Real);
  CHECK(majority_vote(ensemble({V::G, V::G, V::G, V::G, V::R, V::R}), none).verdict.label ==
        Label::Generated);
  const FusionResult tie = majority_vote(ensemble({V::R, V::R, V::R, V::G, V::G, V::G}),
                                         [] { return outcome(StrategyId::P0, Vote::G); });
  CHECK(tie.verdict.label == Label::Generated);
  CHECK(tie.tie_broken);
  CHECK(tie.rationale == "Tie (3 real, 3 generated, 0 abstained) broken by P0: generated.");
  const FusionResult unbroken = majority_vote(ensemble({V::X, V::X, V::X, V::X, V::X, V::X}), none);
  CHECK(unbroken.verdict.kind == VerdictKind::Unparsable);
}

TEST_CASE("majority vote is permutation invariant and stable under single flips") {
  std::mt19937 rng(5);
  for (int code = 0; code < 729; ++code) {
    auto outcomes = ensemble(pattern(code));
    const auto tb = [] { return outcome(StrategyId::P0, Vote::R); };
    const FusionResult base = majority_vote(outcomes, tb);
    std::shuffle(outcomes.begin(), outcomes.end(), rng);
    const FusionResult shuffled = majority_vote(outcomes, tb);
    CHECK(shuffled == base);
  }
  for (Vote unanimous : {Vote::R, Vote::G}) {
    for (int i = 0; i < 6; ++i) {
      std::array<Vote, 6> votes;
      votes.fill(unanimous);
      votes[i] = unanimous == Vote::R ? Vote::G : Vote::R;
      const FusionResult r = majority_vote(ensemble(votes), {});
      CHECK(r.verdict.label == (unanimous == Vote::R ? Label::Real : Label::Generated));
    }
  }
}

TEST_CASE("abstentions never flip a strict majority") {
  for (int code = 0; code < 729; ++code) {
    const auto votes = pattern(code);
    const FusionResult with = majority_vote(ensemble(votes), {});
    if (!with.verdict.is_decided() || with.tie_broken) continue;
    // Replacing any abstention by a vote for the winner keeps the winner.
    auto stronger = votes;
    for (auto& v : stronger) {
      if (v == Vote::X) v = *with.verdict.label == Label::Real ? Vote::R : Vote::G;
    }
    CHECK(majority_vote(ensemble(stronger), {}).verdict.label == with.verdict.label);
  }
}

TEST_CASE("arity and subset rules") {
  auto five = ensemble({Vote::R, Vote::R, Vote::R, Vote::R, Vote::R, Vote::R});
  five.pop_back();
  CHECK(error_code_of([&] { majority_vote(five, {}); }) == ErrorCode::WrongArity);
  CHECK(majority_vote_subset(five, {}).contributing.size() == 5);
  auto dup = ensemble({Vote::R, Vote::R, Vote::R, Vote::R, Vote::R, Vote::R});
  dup[5].strategy = StrategyId::P1;
  CHECK(error_code_of([&] { majority_vote(dup, {}); }) == ErrorCode::WrongArity);
  CHECK(error_code_of([&] { majority_vote_subset({}, {}); }) == ErrorCode::WrongArity);
}

TEST_CASE("tally and strict majority") {
  const auto outs = ensemble({Vote::R, Vote::G, Vote::X, Vote::G, Vote::X, Vote::X});
  CHECK(tally(outs) == VoteTally{1, 2, 3});
  CHECK(strict_majority({1, 2, 3}) == Label::Generated);
  CHECK(strict_majority({0, 0, 6}) == std::nullopt);
  CHECK(strict_majority({2, 2, 2}) == std::nullopt);
}

TEST_CASE("fusion with short rationales is a single image-bearing query") {
  Fixture f;
  auto outs = ensemble({Vote::G, Vote::G, Vote::G, Vote::G, Vote::R, Vote::G});
  const FusionResult r = fuse(outs, f.image, f.ctx());
  REQUIRE(r.query.has_value());
  CHECK(r.query->query_count == 1);
  REQUIRE(r.query->transcript.size() == 1);
  const Session& s = r.query->transcript[0];
  REQUIRE(s.size() == 3);
  CHECK(s.turns()[0].role == Role::System);
  int image_turns = 0;
  for (const auto& t : s.turns()) image_turns += !t.images.empty();
  CHECK(image_turns == 1);
  const std::string& text = s.turns()[1].text;
  for (const char* label : {"P1 (", "P2 (", "P3 (", "P4 (", "P5 (", "P6 ("}) {
    CHECK(text.find(label) != std::string::npos);
  }
  CHECK(text.find("P5 (Structural Analysis), verdict: real") != std::string::npos);
  CHECK(text.ends_with(f.prompts.verdict_prompt(WordingVariant::Generated)));
  // The fused verdict follows the reply, not the vote count.
  CHECK(r.verdict.label == Label::Generated);
  CHECK(r.mode == FusionMode::ReasoningFusion);
  CHECK(r.rationale == s.last_assistant_text());
  CHECK_FALSE(r.rationale.empty());
  CHECK(f.backend->calls() == 1);
}

TEST_CASE("fusion reasons past the vote count") {
  Fixture f(with_reply(fakescope::testing::wildcard_entries(), "Fusion",
                       "Weighing the reasons, the repeated texture outweighs the votes. generated"));
  const auto outs = ensemble({Vote::R, Vote::R, Vote::R, Vote::R, Vote::R, Vote::G});
  const FusionResult r = fuse(outs, f.image, f.ctx());
  CHECK(r.verdict.label == Label::Generated);
}

TEST_CASE("long rationales are summarized first") {
  const std::string long_text(1500, 'x');
  auto outs = ensemble({Vote::G, Vote::G, Vote::G, Vote::G, Vote::R, Vote::G});
  outs[1].rationale = long_text;
  outs[4].rationale = long_text;
  for (bool concurrent : {true, false}) {
    Fixture f;
    FusionConfig cfg;
    cfg.summarize_concurrently = concurrent;
    const FusionResult r = fuse(outs, f.image, f.ctx(), cfg);
    REQUIRE(r.query.has_value());
    CHECK(r.query->query_count == 3);
    REQUIRE(r.query->transcript.size() == 3);
    CHECK(r.query->transcript[0].turns()[0].text.find(long_text) != std::string::npos);
    CHECK(r.query->transcript[0].turns()[0].images.empty());
    const std::string& fusion_text = r.query->transcript[2].turns()[1].text;
    CHECK(fusion_text.find(long_text) == std::string::npos);
    CHECK(fusion_text.find("Key point one.") != std::string::npos);
  }
  Fixture a;
  Fixture b;
  FusionConfig seq;
  seq.summarize_concurrently = false;
  CHECK(fuse(outs, a.image, a.ctx()) == fuse(outs, b.image, b.ctx(), seq));
}

TEST_CASE("fusion is deterministic under replay and handles failed members") {
  auto outs = ensemble({Vote::G, Vote::X, Vote::G, Vote::G, Vote::R, Vote::G});
  outs[1] = failed_outcome(StrategyId::P2, "img", "boom");
  Fixture a;
  Fixture b;
  const FusionResult ra = fuse(outs, a.image, a.ctx());
  const FusionResult rb = fuse(outs, b.image, b.ctx());
  CHECK(ra == rb);
  CHECK(ra.query->transcript[0].turns()[1].text.find("(no analysis: the strategy failed)") !=
        std::string::npos);
}

TEST_CASE("unparsable fusion reply yields an Unparsable result") {
  Fixture f(with_reply(fakescope::testing::wildcard_entries(), "Fusion", "Hard to say."));
  const FusionResult r = fuse(ensemble({Vote::G, Vote::G, Vote::G, Vote::G, Vote::G, Vote::G}),
                              f.image, f.ctx());
  CHECK(r.verdict.kind == VerdictKind::Unparsable);
}

TEST_CASE("detect in both modes runs the ensemble, vote and fusion") {
  Fixture f;
  DetectOptions opts;
  const Detection d = detect(f.image, f.ctx(), f.saliency, opts);
  CHECK(d.outcomes.size() == 6);
  REQUIRE(d.majority.has_value());
  REQUIRE(d.fusion.has_value());
  CHECK_FALSE(d.p0.has_value());
  CHECK(d.majority->verdict.label == Label::Generated);
  CHECK(d.fusion->verdict.label == Label::Generated);
  CHECK(d.final_verdict(DetectMode::Both).label == Label::Generated);
  REQUIRE(d.subject.has_value());
  CHECK(d.subject->subject.phrase == "a red bus");
  CHECK(f.backend->calls() == 11);
  CHECK(detection_outcomes(d).size() == 7);
}

TEST_CASE("majority mode skips the fusion query and P0 mode runs only P0") {
  Fixture f;
  DetectOptions opts;
  opts.mode = DetectMode::Majority;
  const Detection d = detect(f.image, f.ctx(), f.saliency, opts);
  CHECK_FALSE(d.fusion.has_value());
  CHECK(f.backend->calls() == 10);

  Fixture g;
  opts.mode = DetectMode::P0;
  const Detection p0 = detect(g.image, g.ctx(), g.saliency, opts);
  CHECK(p0.outcomes.empty());
  REQUIRE(p0.p0.has_value());
  CHECK(p0.final_verdict(DetectMode::P0).label == Label::Real);
  CHECK(g.backend->calls() == 1);
}

TEST_CASE("all refusals fall through the tie breaker to Unparsable") {
  auto entries = fakescope::testing::wildcard_entries();
  const std::string refusal = fakescope::testing::verdict_reply(Reply::Refuse);
  for (auto& e : entries) {
    if (e.kind != "Identify" && e.kind != "Summarize") e.reply = refusal;
  }
  Fixture f(entries);
  const Detection d = detect(f.image, f.ctx(), f.saliency, {});
  REQUIRE(d.majority.has_value());
  CHECK(d.majority->tie_broken);
  REQUIRE(d.p0.has_value());
  CHECK(d.p0->verdict.kind == VerdictKind::Rejected);
  CHECK(d.majority->verdict.kind == VerdictKind::Unparsable);
  CHECK(d.fusion->verdict.kind == VerdictKind::Rejected);
  CHECK(d.final_verdict(DetectMode::Both).kind == VerdictKind::Unparsable);
  CHECK(d.final_rationale(DetectMode::Both).find("broken by P0: rejected") != std::string::npos);
}

TEST_CASE("tie breaking reuses an already computed P0") {
  fakescope::testing::ImagePlan plan;
  plan.id = "img";
  plan.ensemble = {Reply::Real, Reply::Real, Reply::Real, Reply::Generated, Reply::Generated,
                   Reply::Generated};
  plan.p0 = Reply::Generated;
  std::vector<ScriptEntry> entries = fakescope::testing::plan_entries(plan);
  const auto wild = fakescope::testing::wildcard_entries();
  entries.insert(entries.end(), wild.begin(), wild.end());
  Fixture f(entries);
  DetectOptions opts;
  opts.mode = DetectMode::Majority;
  opts.always_run_p0 = true;
  const Detection d = detect(f.image, f.ctx(), f.saliency, opts);
  CHECK(d.majority->tie_broken);
  CHECK(d.majority->verdict.label == Label::Generated);
  CHECK(f.backend->calls() == 11);
}

TEST_CASE("detect throws only when every strategy failed") {
  auto entries = fakescope::testing::wildcard_entries();
  for (auto& e : entries) {
    if (e.kind != "P0" && e.kind != "Fusion") e.error = ErrorCode::Network;
  }
  Fixture f(entries);
  CHECK(error_code_of([&] { detect(f.image, f.ctx(), f.saliency, {}); }) ==
        ErrorCode::AllStrategiesFailed);

  auto fusion_down = fakescope::testing::wildcard_entries();
  for (auto& e : fusion_down) {
    if (e.kind == "Fusion") e.error = ErrorCode::Network;
  }
  Fixture g(fusion_down);
  const Detection d = detect(g.image, g.ctx(), g.saliency, {});
  REQUIRE(d.fusion.has_value());
  CHECK(d.fusion->query->failed());
  CHECK(d.final_verdict(DetectMode::Both).label == Label::Generated);
}

TEST_CASE("detect appends transcripts as JSON lines") {
  fakescope::testing::TempDir dir;
  Fixture f;
  DetectOptions opts;
  opts.transcript_path = dir / "t.jsonl";
  detect(f.image, f.ctx(), f.saliency, opts);
  detect(f.image, f.ctx(), f.saliency, opts);
  const std::string text = fakescope::testing::read_text(dir / "t.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 14);
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(first.at("strategy") == "P1");
}

TEST_CASE("fusion results round-trip through JSON") {
  Fixture f;
  const Detection d = detect(f.image, f.ctx(), f.saliency, {});
  const nlohmann::json j = *d.fusion;
  CHECK(j.get<FusionResult>() == *d.fusion);
  const nlohmann::json m = *d.majority;
  CHECK(m.get<FusionResult>() == *d.majority);
  CHECK(fusion_mode_from_string(to_string(FusionMode::ReasoningFusion)) == FusionMode::ReasoningFusion);
  for (DetectMode mode : {DetectMode::P0, DetectMode::Majority, DetectMode::Fusion, DetectMode::Both}) {
    CHECK(detect_mode_from_string(to_string(mode)) == mode);
  }
  CHECK(error_code_of([] { detect_mode_from_string("vote"); }) == ErrorCode::Parse);
}

TEST_CASE("detect rejects unreadable images before querying") {
  Fixture f;
  ImageRecord missing{"gone", std::filesystem::path("/nonexistent/gone.png"), {}, {}, {}};
  CHECK(error_code_of([&] { detect(missing, f.ctx(), f.saliency, {}); }) == ErrorCode::Io);
  ImageRecord garbage{"junk", ImageBytes{1, 2, 3}, {}, {}, {}};
  CHECK(error_code_of([&] { detect(garbage, f.ctx(), f.saliency, {}); }) == ErrorCode::Decode);
  CHECK(f.backend->calls() == 0);
}
