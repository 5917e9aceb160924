#include "fakescope/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <mutex>
#include <set>

#include "fakescope/image.hpp"
#include "fakescope/serialization.hpp"

namespace fakescope {

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::MajorityVote ? "majority_vote" : "reasoning_fusion";
}

FusionMode fusion_mode_from_string(std::string_view text) {
  if (text == "majority_vote") return FusionMode::MajorityVote;
  if (text == "reasoning_fusion") return FusionMode::ReasoningFusion;
  throw Error(ErrorCode::Parse, "unknown fusion mode '" + std::string(text) + "'");
}

std::string_view to_string(DetectMode mode) {
  switch (mode) {
    case DetectMode::P0: return "p0";
    case DetectMode::Majority: return "majority";
    case DetectMode::Fusion: return "fusion";
    case DetectMode::Both: return "both";
  }
  return "both";
}

DetectMode detect_mode_from_string(std::string_view text) {
  if (text == "p0") return DetectMode::P0;
  if (text == "majority") return DetectMode::Majority;
  if (text == "fusion") return DetectMode::Fusion;
  if (text == "both") return DetectMode::Both;
  throw Error(ErrorCode::Parse, "unknown mode '" + std::string(text) + "'");
}

VoteTally tally(std::span<const PromptOutcome> outcomes) {
  VoteTally t;
  for (const auto& o : outcomes) {
    if (!o.verdict.is_decided()) {
      ++t.abstained;
    } else if (*o.verdict.label == Label::Real) {
      ++t.real;
    } else {
      ++t.generated;
    }
  }
  return t;
}

std::optional<Label> strict_majority(const VoteTally& votes) {
  if (votes.real > votes.generated) return Label::Real;
  if (votes.generated > votes.real) return Label::Generated;
  return std::nullopt;
}

namespace {

// Validates a subset of P1..P6 (distinct, non-empty) and returns it in strategy order.
std::vector<PromptOutcome> ordered_subset(std::span<const PromptOutcome> outcomes) {
  if (outcomes.empty()) throw Error(ErrorCode::WrongArity, "no outcomes to combine");
  std::set<std::size_t> seen;
  for (const auto& o : outcomes) {
    if (!seen.insert(ensemble_index(o.strategy)).second) {
      throw Error(ErrorCode::WrongArity,
                  "duplicate outcome for " + std::string(to_string(o.strategy)));
    }
  }
  std::vector<PromptOutcome> sorted(outcomes.begin(), outcomes.end());
  std::sort(sorted.begin(), sorted.end(), [](const PromptOutcome& a, const PromptOutcome& b) {
    return ensemble_index(a.strategy) < ensemble_index(b.strategy);
  });
  return sorted;
}

void require_full_ensemble(std::span<const PromptOutcome> outcomes) {
  if (outcomes.size() != 6) {
    throw Error(ErrorCode::WrongArity,
                "expected 6 outcomes (P1..P6), got " + std::to_string(outcomes.size()));
  }
}

std::string tally_text(const VoteTally& t) {
  return std::to_string(t.real) + " real, " + std::to_string(t.generated) + " generated, " +
         std::to_string(t.abstained) + " abstained";
}

std::string_view strategy_title(StrategyId id) {
  switch (id) {
    case StrategyId::P1: return "Defect Query";
    case StrategyId::P2: return "Regional Analysis";
    case StrategyId::P3: return "Common Sense Reasoning";
    case StrategyId::P4: return "Few-Shot";
    case StrategyId::P5: return "Structural Analysis";
    case StrategyId::P6: return "Stereotype Matching";
    default: return "";
  }
}

}  // namespace

FusionResult majority_vote_subset(std::span<const PromptOutcome> outcomes,
                                  const TieBreaker& tie_breaker) {
  FusionResult result;
  result.mode = FusionMode::MajorityVote;
  result.contributing = ordered_subset(outcomes);
  const VoteTally votes = tally(result.contributing);
  if (const auto winner = strict_majority(votes)) {
    result.verdict = Verdict::decided(*winner, std::string(to_string(*winner)));
    return result;
  }
  if (!tie_breaker) {
    result.verdict = Verdict::unparsable();
    result.rationale = "Tie (" + tally_text(votes) + ") with no tie breaker.";
    return result;
  }
  const PromptOutcome p0 = tie_breaker();
  result.tie_broken = true;
  if (p0.verdict.is_decided()) {
    result.verdict = Verdict::decided(*p0.verdict.label, std::string(to_string(*p0.verdict.label)));
  } else {
    result.verdict = Verdict::unparsable();
  }
  result.rationale = "Tie (" + tally_text(votes) + ") broken by P0: " + p0.verdict.display() + ".";
  return result;
}

FusionResult majority_vote(std::span<const PromptOutcome> outcomes, const TieBreaker& tie_breaker) {
  require_full_ensemble(outcomes);
  return majority_vote_subset(outcomes, tie_breaker);
}

FusionResult fuse_subset(std::span<const PromptOutcome> outcomes, const ImageRecord& image,
                         const StrategyContext& ctx, const FusionConfig& config) {
  FusionResult result;
  result.mode = FusionMode::ReasoningFusion;
  result.contributing = ordered_subset(outcomes);
  const ImageCatalog catalog = {{image.id, image}};

  // Condense long rationales; each summary is its own text-only session.
  const std::size_t n = result.contributing.size();
  std::vector<std::optional<Session>> summaries(n);
  auto summarize = [&](std::size_t i) {
    const PromptOutcome& o = result.contributing[i];
    Session s = Session{}.append(QueryTurn::user(
        ctx.prompts.render("prompts/summarize", {{"response", o.rationale}})));
    const QueryTag tag{image.id, "Summarize", static_cast<int>(ensemble_index(o.strategy)) + 1};
    Completion c = ctx.backend.complete(s, tag, catalog);
    return std::move(s).append(QueryTurn::assistant(std::move(c.text), false,
                                                    c.stats.latency_seconds));
  };
  std::vector<std::pair<std::size_t, std::future<Session>>> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (result.contributing[i].rationale.size() <= config.summary_budget_chars) continue;
    if (config.summarize_concurrently) {
      pending.emplace_back(i, std::async(std::launch::async, summarize, i));
    } else {
      summaries[i] = summarize(i);
    }
  }
  for (auto& [i, future] : pending) summaries[i] = future.get();

  std::string analyses;
  std::vector<Session> transcript;
  for (std::size_t i = 0; i < n; ++i) {
    const PromptOutcome& o = result.contributing[i];
    if (!analyses.empty()) analyses += "\n\n";
    analyses += std::string(to_string(o.strategy)) + " (" + std::string(strategy_title(o.strategy)) +
                "), verdict: " + o.verdict.display() + "\n";
    if (summaries[i]) {
      analyses += summaries[i]->last_assistant_text();
      transcript.push_back(std::move(*summaries[i]));
    } else if (o.failed()) {
      analyses += "(no analysis: the strategy failed)";
    } else if (o.rationale.empty()) {
      analyses += "(no analysis)";
    } else {
      analyses += o.rationale;
    }
  }

  Session s = Session{}
                  .append(QueryTurn::system(ctx.system_prompt()))
                  .append(QueryTurn::user(
                      ctx.prompts.render("prompts/fusion", {{"analyses", analyses},
                                                            {"verdict_prompt", ctx.verdict_prompt()}}),
                      {{image.id, std::nullopt}}));
  Completion c = ctx.backend.complete(s, {image.id, "Fusion", 1}, catalog);
  s = std::move(s).append(QueryTurn::assistant(std::move(c.text), false, c.stats.latency_seconds));
  transcript.push_back(std::move(s));

  const Verdict verdict = ctx.parse(transcript.back().last_assistant_text());
  result.query = make_outcome(StrategyId::Fusion, image.id, verdict, std::move(transcript));
  result.verdict = verdict;
  result.rationale = result.query->rationale;
  return result;
}

FusionResult fuse(std::span<const PromptOutcome> outcomes, const ImageRecord& image,
                  const StrategyContext& ctx, const FusionConfig& config) {
  require_full_ensemble(outcomes);
  return fuse_subset(outcomes, image, ctx, config);
}

Verdict Detection::final_verdict(DetectMode mode) const {
  switch (mode) {
    case DetectMode::P0: return p0 ? p0->verdict : Verdict::unparsable();
    case DetectMode::Majority: return majority ? majority->verdict : Verdict::unparsable();
    case DetectMode::Fusion: return fusion ? fusion->verdict : Verdict::unparsable();
    case DetectMode::Both:
      if (fusion && fusion->verdict.is_decided()) return fusion->verdict;
      return majority ? majority->verdict : Verdict::unparsable();
  }
  return Verdict::unparsable();
}

std::string Detection::final_rationale(DetectMode mode) const {
  switch (mode) {
    case DetectMode::P0: return p0 ? p0->rationale : std::string{};
    case DetectMode::Majority: return majority ? majority->rationale : std::string{};
    case DetectMode::Fusion: return fusion ? fusion->rationale : std::string{};
    case DetectMode::Both:
      if (fusion && fusion->verdict.is_decided()) return fusion->rationale;
      return majority ? majority->rationale : std::string{};
  }
  return {};
}

std::vector<PromptOutcome> detection_outcomes(const Detection& d) {
  std::vector<PromptOutcome> all;
  if (d.p0) all.push_back(*d.p0);
  all.insert(all.end(), d.outcomes.begin(), d.outcomes.end());
  if (d.fusion && d.fusion->query) all.push_back(*d.fusion->query);
  return all;
}

namespace {

PromptOutcome guarded_p0(const ImageRecord& image, const StrategyContext& ctx) {
  try {
    return run_p0(image, ctx);
  } catch (const std::exception& e) {
    return failed_outcome(StrategyId::P0, image.id, e.what());
  }
}

}  // namespace

Detection detect(const ImageRecord& image, const StrategyContext& ctx, SaliencyProvider& saliency,
                 const DetectOptions& options) {
  decode_image(image);  // fail fast on unreadable input, whatever the backend
  Detection d;
  d.image_id = image.id;
  if (options.mode == DetectMode::P0) {
    d.p0 = run_p0(image, ctx);
  } else {
    SubjectCache subjects;
    d.outcomes = run_all(image, ctx, saliency, options.roi, options.parallel, subjects);
    if (std::all_of(d.outcomes.begin(), d.outcomes.end(),
                    [](const PromptOutcome& o) { return o.failed(); })) {
      throw Error(ErrorCode::AllStrategiesFailed,
                  "all strategies failed for '" + image.id + "'; first error: " +
                      d.outcomes.front().error.value_or(""));
    }
    d.subject = subjects.lookup(image.id);
    if (options.always_run_p0) d.p0 = guarded_p0(image, ctx);

    if (options.mode == DetectMode::Majority || options.mode == DetectMode::Both) {
      d.majority = majority_vote(d.outcomes, [&] {
        if (!d.p0) d.p0 = guarded_p0(image, ctx);
        return *d.p0;
      });
    }
    if (options.mode == DetectMode::Fusion || options.mode == DetectMode::Both) {
      try {
        d.fusion = fuse(d.outcomes, image, ctx, options.fusion);
      } catch (const std::exception& e) {
        FusionResult failed;
        failed.mode = FusionMode::ReasoningFusion;
        failed.contributing = d.outcomes;
        failed.query = failed_outcome(StrategyId::Fusion, image.id, e.what());
        d.fusion = std::move(failed);
      }
    }
  }

  if (options.transcript_path) {
    static std::mutex file_mutex;
    std::lock_guard lock(file_mutex);
    std::ofstream out(*options.transcript_path, std::ios::app);
    if (!out) {
      throw Error(ErrorCode::Io, "cannot append to '" + options.transcript_path->string() + "'");
    }
    for (const auto& o : detection_outcomes(d)) out << to_json_line(json(o)) << '\n';
  }
  return d;
}

nlohmann::json fusion_to_json_compact(const FusionResult& r) {
  nlohmann::json j{{"mode", to_string(r.mode)},
                   {"verdict", r.verdict},
                   {"rationale", r.rationale},
                   {"tie_broken", r.tie_broken}};
  if (r.query) j["query"] = *r.query;
  return j;
}

void to_json(nlohmann::json& j, const FusionResult& r) {
  j = fusion_to_json_compact(r);
  j["contributing"] = r.contributing;
}

void from_json(const nlohmann::json& j, FusionResult& r) {
  r.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
  r.verdict = j.at("verdict").get<Verdict>();
  r.rationale = j.at("rationale").get<std::string>();
  r.tie_broken = j.at("tie_broken").get<bool>();
  r.query.reset();
  if (j.contains("query")) r.query = j.at("query").get<PromptOutcome>();
  r.contributing = j.value("contributing", std::vector<PromptOutcome>{});
}

}  // namespace fakescope
