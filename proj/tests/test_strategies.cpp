#include <doctest.h>

#include <mutex>

#include "fakescope/strategies.hpp"
#include "support.hpp"

using namespace fakescope;
using fakescope::testing::error_code_of;

namespace {

// Scripted backend that also records every tag it was asked for.
class RecordingBackend : public ScriptedBackend {
 public:
  using ScriptedBackend::ScriptedBackend;

  std::vector<std::string> tags() const {
    std::lock_guard lock(mutex_);
    return tags_;
  }
  int count(const std::string& kind) const {
    std::lock_guard lock(mutex_);
    return static_cast<int>(std::count_if(tags_.begin(), tags_.end(), [&](const std::string& t) {
      return t.starts_with(kind + ":");
    }));
  }

 protected:
  Completion do_complete(const Session& s, const QueryTag& tag, const ImageCatalog& images) override {
    {
      std::lock_guard lock(mutex_);
      tags_.push_back(tag.kind + ":" + std::to_string(tag.step));
    }
    return ScriptedBackend::do_complete(s, tag, images);
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> tags_;
};

ImageRecord target(const std::string& id = "img-00") {
  return ImageRecord{id, fakescope::testing::png_bytes(96, 64, 11), Label::Real, {}, Family::RealSource};
}

struct Fixture {
  StrategyConfig config = fakescope::testing::test_strategy_config();
  PromptCatalog prompts = PromptCatalog::bundled();
  RecordingBackend backend{fakescope::testing::wildcard_entries()};
  LocalContrastProvider saliency{16};
  RoiSettings roi;
  StrategyContext ctx() { return {backend, config, prompts}; }
};

void check_roles(const Session& s) {
  // Session::append already enforces alternation; re-check System placement.
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.turns()[i].role != Role::System);
}

}  // namespace

TEST_CASE("P0 is a single verdict query on the full image") {
  Fixture f;
  const PromptOutcome o = run_p0(target(), f.ctx());
  REQUIRE(o.transcript.size() == 1);
  const Session& s = o.transcript[0];
  REQUIRE(s.size() == 3);
  CHECK(s.turns()[0].role == Role::System);
  CHECK(s.turns()[1].text == f.prompts.verdict_prompt(WordingVariant::Generated));
  CHECK(s.turns()[1].images == std::vector<ImageRef>{{"img-00", std::nullopt}});
  CHECK(o.query_count == 1);
  CHECK(o.verdict.label == Label::Real);
  CHECK(o.rationale == s.last_assistant_text());
}

TEST_CASE("P1 uses predefined defect answers unless disabled") {
  Fixture f;
  const PromptOutcome cached = run_p1(target(), f.ctx());
  REQUIRE(cached.transcript.size() == 1);
  const Session& s = cached.transcript[0];
  REQUIRE(s.size() == 7);
  CHECK(s.turns()[2].predefined);
  CHECK(s.turns()[4].predefined);
  CHECK(s.turns()[2].text == f.prompts.get("canned/p1_defects"));
  CHECK(s.turns()[5].images.size() == 1);
  CHECK(s.turns()[1].images.empty());
  CHECK(cached.query_count == 1);
  CHECK(cached.verdict.label == Label::Generated);

  f.config.use_cached_assistant = false;
  const PromptOutcome live = run_p1(target(), f.ctx());
  CHECK(live.query_count == 3);
  CHECK_FALSE(live.transcript[0].turns()[2].predefined);
  CHECK(f.backend.tags() == std::vector<std::string>{"P1:1", "P1:1", "P1:2", "P1:3"});
}

TEST_CASE("P2 sends in-bounds ROI crops after an introduction") {
  Fixture f;
  f.config.roi_crops = 3;
  const PromptOutcome o = run_p2(target(), f.ctx(), f.saliency, f.roi);
  REQUIRE(o.transcript.size() == 1);
  const Session& s = o.transcript[0];
  REQUIRE(s.size() == 5);
  CHECK(s.turns()[1].images == std::vector<ImageRef>{{"img-00", std::nullopt}});
  const auto& crops = s.turns()[3].images;
  CHECK(crops.size() >= 1);
  CHECK(crops.size() <= 3);
  for (const auto& c : crops) {
    REQUIRE(c.crop.has_value());
    CHECK(c.crop->within(96, 64));
  }
  CHECK(o.query_count == 2);
  CHECK(s.turns()[3].text.find("generated") != std::string::npos);

  struct Broken : SaliencyProvider {
    Heatmap compute(const ImageRecord&) override {
      throw Error(ErrorCode::RemoteProvider, "down");
    }
  } broken;
  const PromptOutcome fallback = run_p2(target(), f.ctx(), broken, f.roi);
  CHECK(fallback.transcript[0].turns()[3].images == std::vector<ImageRef>{{"img-00", std::nullopt}});
  REQUIRE_FALSE(fallback.flags.empty());
  CHECK(fallback.flags[0] == "roi_fallback");
  CHECK_FALSE(fallback.failed());
}

TEST_CASE("P3 appends the verdict prompt to the checklist") {
  Fixture f;
  const PromptOutcome o = run_p3(target(), f.ctx());
  const Session& s = o.transcript[0];
  REQUIRE(s.size() == 3);
  CHECK(s.turns()[1].text.starts_with(f.prompts.get("prompts/p3_common_sense")));
  CHECK(s.turns()[1].text.ends_with(f.prompts.verdict_prompt(WordingVariant::Generated)));
  CHECK(o.query_count == 1);
}

TEST_CASE("P4 replays both exemplars as predefined turns") {
  Fixture f;
  const PromptOutcome o = run_p4(target(), f.ctx());
  const Session& s = o.transcript[0];
  REQUIRE(s.size() == 7);
  CHECK(s.turns()[1].images[0].image_id == f.config.fewshot_real->image.id);
  CHECK(s.turns()[2].text == f.config.fewshot_real->annotation);
  CHECK(s.turns()[2].predefined);
  CHECK(s.turns()[3].images[0].image_id == f.config.fewshot_fake->image.id);
  CHECK(s.turns()[4].predefined);
  CHECK(s.turns()[5].images[0].image_id == "img-00");
  CHECK(o.query_count == 1);

  f.config.fewshot_fake.reset();
  CHECK(error_code_of([&] { run_p4(target(), f.ctx()); }) == ErrorCode::MissingExemplars);
  const PromptOutcome zero = run_p4_zero_shot(target(), f.ctx());
  CHECK(zero.transcript[0].size() == 3);
  CHECK(zero.flags == std::vector<std::string>{"zero_shot"});
}

TEST_CASE("P5 and P6 build on the identified subject") {
  Fixture f;
  SubjectCache cache;
  const SubjectClass subject = identify_subject(target(), f.ctx(), cache);
  CHECK(subject.phrase == "a red bus");
  const PromptOutcome p5 = run_p5(target(), subject, f.ctx());
  REQUIRE(p5.transcript.size() == 1);
  CHECK(p5.transcript[0].size() == 5);
  CHECK(p5.transcript[0].turns()[1].text.find("shows a red bus.") != std::string::npos);
  CHECK(p5.transcript[0].turns()[3].images.empty());
  CHECK(p5.query_count == 2);

  const PromptOutcome p6 = run_p6(target(), subject, f.ctx());
  REQUIRE(p6.transcript.size() == 2);
  const Session& stereo = p6.transcript[0];
  REQUIRE(stereo.size() == 2);
  CHECK(stereo.turns()[0].role == Role::User);
  CHECK(stereo.turns()[0].images.empty());
  const Session& verdict = p6.transcript[1];
  REQUIRE(verdict.size() == 3);
  CHECK(verdict.turns()[1].text.find(stereo.last_assistant_text()) != std::string::npos);
  CHECK(verdict.turns()[1].images.size() == 1);
  CHECK(p6.query_count == 2);
  CHECK(p6.rationale == verdict.last_assistant_text());
}

TEST_CASE("subject identification is memoized per image") {
  Fixture f;
  SubjectCache cache;
  for (int i = 0; i < 3; ++i) identify_subject(target(), f.ctx(), cache);
  identify_subject(target("img-01"), f.ctx(), cache);
  CHECK(f.backend.count("Identify") == 2);
  REQUIRE(cache.lookup("img-00").has_value());
  CHECK(cache.lookup("img-00")->transcript.size() == 2);
  CHECK_FALSE(cache.lookup("img-99").has_value());

  ScriptEntry blank;
  blank.kind = "Identify";
  blank.reply = "  \n ";
  RecordingBackend empty_backend({blank});
  StrategyContext ctx{empty_backend, f.config, f.prompts};
  SubjectCache fresh;
  CHECK(error_code_of([&] { identify_subject(target(), ctx, fresh); }) == ErrorCode::EmptySubject);
}

TEST_CASE("trim_subject_reply strips list markers, quotes and periods") {
  CHECK(trim_subject_reply("a red bus") == "a red bus");
  CHECK(trim_subject_reply("\n\n  \"A daisy.\"  \nmore") == "A daisy");
  CHECK(trim_subject_reply("- **a cat**") == "a cat");
  CHECK(trim_subject_reply("1. an apple.") == "an apple");
  CHECK(trim_subject_reply("2) `a tree`") == "a tree");
  CHECK(trim_subject_reply("   ").empty());
  CHECK(trim_subject_reply("").empty());
}

TEST_CASE("run_all returns six outcomes with one shared identification") {
  for (const bool parallel : {false, true}) {
    CAPTURE(parallel);
    Fixture f;
    SubjectCache cache;
    const auto outcomes = run_all(target(), f.ctx(), f.saliency, f.roi, parallel, cache);
    REQUIRE(outcomes.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(outcomes[i].strategy == kEnsemble[i]);
      CHECK_FALSE(outcomes[i].failed());
      for (const auto& s : outcomes[i].transcript) check_roles(s);
    }
    CHECK(f.backend.count("Identify") == 1);
    CHECK(f.backend.calls() == 10);
  }
}

TEST_CASE("parallel and sequential ensembles produce equal outcomes") {
  Fixture a;
  Fixture b;
  SubjectCache ca;
  SubjectCache cb;
  const auto seq = run_all(target(), a.ctx(), a.saliency, a.roi, false, ca);
  const auto par = run_all(target(), b.ctx(), b.saliency, b.roi, true, cb);
  CHECK(seq == par);
}

TEST_CASE("a failing strategy does not affect its siblings") {
  Fixture f;
  auto entries = fakescope::testing::wildcard_entries();
  for (auto& e : entries) {
    if (e.kind == "P3") e.error = ErrorCode::Network;
    if (e.kind == "Identify") e.reply = "\n";
  }
  RecordingBackend backend(entries);
  StrategyContext ctx{backend, f.config, f.prompts};
  SubjectCache cache;
  const auto outcomes = run_all(target(), ctx, f.saliency, f.roi, true, cache);
  CHECK_FALSE(outcomes[0].failed());
  CHECK_FALSE(outcomes[1].failed());
  CHECK(outcomes[2].failed());
  CHECK(outcomes[2].verdict.kind == VerdictKind::Unparsable);
  CHECK_FALSE(outcomes[3].failed());
  CHECK(outcomes[4].failed());
  CHECK(outcomes[5].failed());
  CHECK(backend.count("Identify") == 1);
}

TEST_CASE("the wording variant reaches every verdict prompt") {
  Fixture f;
  f.config.wording = WordingVariant::Fake;
  SubjectCache cache;
  const auto outcomes = run_all(target(), f.ctx(), f.saliency, f.roi, false, cache);
  for (const auto& o : outcomes) {
    const Session& last = o.transcript.back();
    const std::string& prompt = last.turns()[last.size() - 2].text;
    INFO(to_string(o.strategy));
    CHECK(prompt.find("\"fake\"") != std::string::npos);
  }
}

TEST_CASE("strategy config validation") {
  StrategyConfig c = fakescope::testing::test_strategy_config();
  c.validate();
  c.roi_crops = 0;
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::Config);
  c.roi_crops = 1;
  c.fewshot_real->annotation.clear();
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::Config);
}
