#include <doctest.h>

#include <random>

#include "fakescope/core.hpp"
#include "fakescope/serialization.hpp"

using namespace fakescope;

namespace {

Session sample_session() {
  return Session{}
      .append(QueryTurn::system("sys"))
      .append(QueryTurn::user("look", {{"img", std::nullopt}}))
      .append(QueryTurn::assistant("canned", true))
      .append(QueryTurn::user("crop", {{"img", Rect{1, 2, 10, 12}}}))
      .append(QueryTurn::assistant("live reply real", false, 0.25));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("session accepts alternating roles after an optional system turn") {
  const Session s = sample_session();
  CHECK(s.size() == 5);
  CHECK(s.live_assistant_count() == 1);
  CHECK(s.assistant_count() == 2);
  CHECK(s.last_assistant_text() == "live reply real");

  const Session no_system = Session{}.append(QueryTurn::user("u")).append(QueryTurn::assistant("a"));
  CHECK(no_system.size() == 2);
}

TEST_CASE("session rejects role violations") {
  CHECK(code_of([] { Session{}.append(QueryTurn::assistant("a")); }) == ErrorCode::InvalidRole);
  CHECK(code_of([] {
          Session{}.append(QueryTurn::user("u")).append(QueryTurn::system("s"));
        }) == ErrorCode::InvalidRole);
  CHECK(code_of([] {
          Session{}.append(QueryTurn::user("u")).append(QueryTurn::user("u"));
        }) == ErrorCode::InvalidRole);
  CHECK(code_of([] { Session{}.append(QueryTurn::user("")); }) == ErrorCode::InvalidRole);
  CHECK(code_of([] {
          QueryTurn t = QueryTurn::assistant("a");
          t.images.push_back({"x", std::nullopt});
          Session{}.append(QueryTurn::user("u")).append(t);
        }) == ErrorCode::InvalidRole);
}

TEST_CASE("append leaves the original session untouched") {
  const Session a = Session{}.append(QueryTurn::user("u"));
  const Session b = a.append(QueryTurn::assistant("r"));
  CHECK(a.size() == 1);
  CHECK(b.size() == 2);
  CHECK(append_turn(a, QueryTurn::assistant("r")) == b);
}

TEST_CASE("context_of returns prefixes and validates the index") {
  const Session s = sample_session();
  for (std::size_t i = 0; i <= s.size(); ++i) {
    const Session prefix = context_of(s, i);
    REQUIRE(prefix.size() == i);
    for (std::size_t k = 0; k < i; ++k) CHECK(prefix.turns()[k] == s.turns()[k]);
    // Chaining: the context of i+1 is the context of i plus turn i.
    if (i < s.size()) CHECK(context_of(s, i + 1) == prefix.append(s.turns()[i]));
  }
  CHECK(code_of([&] { context_of(s, s.size() + 1); }) == ErrorCode::IndexOutOfRange);
}

TEST_CASE("make_outcome counts live assistant turns only") {
  const Session s = sample_session();
  const Session second = Session{}.append(QueryTurn::user("u")).append(
      QueryTurn::assistant("final generated", false, 0.5));
  const PromptOutcome o =
      make_outcome(StrategyId::P6, "img", Verdict::decided(Label::Generated, "generated"), {s, second});
  CHECK(o.query_count == 2);
  CHECK(o.latency_seconds == doctest::Approx(0.75));
  CHECK(o.rationale == "final generated");
  CHECK_FALSE(o.failed());

  const PromptOutcome f = failed_outcome(StrategyId::P2, "img", "boom");
  CHECK(f.failed());
  CHECK(f.verdict.kind == VerdictKind::Unparsable);
  CHECK(f.query_count == 0);
}

TEST_CASE("labels, wording and strategy names round-trip") {
  for (Label l : {Label::Real, Label::Generated}) CHECK(label_from_string(to_string(l)) == l);
  CHECK(label_from_string("fake") == Label::Generated);
  for (WordingVariant w : {WordingVariant::Fake, WordingVariant::Generated}) {
    CHECK(wording_from_string(to_string(w)) == w);
  }
  CHECK(verdict_word(WordingVariant::Fake) == "fake");
  for (StrategyId id : {StrategyId::P0, StrategyId::P3, StrategyId::Fusion}) {
    CHECK(strategy_from_string(to_string(id)) == id);
  }
  CHECK(ensemble_index(StrategyId::P6) == 5);
  CHECK(code_of([] { ensemble_index(StrategyId::P0); }) == ErrorCode::WrongArity);
  CHECK(code_of([] { label_from_string("maybe"); }) == ErrorCode::Parse);
}

TEST_CASE("outcome and session JSON round-trip") {
  const Session s = sample_session();
  PromptOutcome o = make_outcome(StrategyId::P2, "img", Verdict::decided(Label::Real, "real"), {s});
  o.flags = {"roi_fallback"};
  const json j = o;
  const PromptOutcome back = j.get<PromptOutcome>();
  CHECK(back == o);
  CHECK(back.transcript[0].turns()[4].latency_seconds == doctest::Approx(0.25));
  CHECK(back.transcript[0].turns()[3].images[0].crop == Rect{1, 2, 10, 12});
  // Serialization is stable.
  CHECK(to_json_line(json(back)) == to_json_line(j));

  const PromptOutcome failed = failed_outcome(StrategyId::P4, "img", "MissingExemplars: x");
  CHECK(json(failed).get<PromptOutcome>() == failed);
}

TEST_CASE("image record JSON keeps path or bytes") {
  ImageRecord a;
  a.id = "a";
  a.source = std::filesystem::path("dir/a.png");
  a.truth = Label::Generated;
  a.generator = "midjourney";
  a.family = Family::Diffusion;
  CHECK(json(a).get<ImageRecord>() == a);

  ImageRecord b;
  b.id = "b";
  b.source = ImageBytes{0, 1, 2, 250, 251, 252, 253};
  CHECK(json(b).get<ImageRecord>() == b);
}

TEST_CASE("random valid sessions survive a JSON round-trip") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Session s;
    if (rng() % 2) s = s.append(QueryTurn::system("system " + std::to_string(trial)));
    const int exchanges = static_cast<int>(rng() % 5);
    for (int k = 0; k < exchanges; ++k) {
      std::vector<ImageRef> images;
      if (rng() % 2) images.push_back({"img" + std::to_string(k), std::nullopt});
      s = s.append(QueryTurn::user("u\n\"" + std::to_string(rng()), images));
      s = s.append(QueryTurn::assistant("a " + std::to_string(rng()), rng() % 3 == 0));
    }
    CHECK(json(s).get<Session>() == s);
  }
}

TEST_CASE("parse_json maps errors to ParseError") {
  CHECK(code_of([] { parse_json("{nope", "test"); }) == ErrorCode::Parse);
}
