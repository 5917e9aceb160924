#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fakescope/core.hpp"
#include "fakescope/roi.hpp"
#include "fakescope/strategies.hpp"

namespace fakescope {

enum class FusionMode { MajorityVote, ReasoningFusion };

std::string_view to_string(FusionMode mode);
FusionMode fusion_mode_from_string(std::string_view text);

struct FusionResult {
  FusionMode mode = FusionMode::MajorityVote;
  Verdict verdict;
  std::string rationale;
  std::vector<PromptOutcome> contributing;  // one per P1..P6 in strategy order
  bool tie_broken = false;
  // The consolidation query (summaries + final session) for ReasoningFusion.
  std::optional<PromptOutcome> query;

  friend bool operator==(const FusionResult&, const FusionResult&) = default;
};

struct VoteTally {
  int real = 0;
  int generated = 0;
  int abstained = 0;  // Rejected or Unparsable

  friend bool operator==(const VoteTally&, const VoteTally&) = default;
};

VoteTally tally(std::span<const PromptOutcome> outcomes);

/// Label with strictly more Decided votes, or nullopt on a tie (including 0-0).
std::optional<Label> strict_majority(const VoteTally& votes);

/// Supplies a P0 outcome for tie-breaking (fresh or cached).
using TieBreaker = std::function<PromptOutcome()>;

/// Majority over exactly one outcome per P1..P6. Non-Decided outcomes abstain;
/// a tie consults the tie breaker and sets tie_broken, and an undecided tie
/// breaker leaves the verdict Unparsable. Throws WrongArity.
FusionResult majority_vote(std::span<const PromptOutcome> outcomes, const TieBreaker& tie_breaker);

/// majority_vote over any non-empty subset of P1..P6 (ablation re-tally).
FusionResult majority_vote_subset(std::span<const PromptOutcome> outcomes,
                                  const TieBreaker& tie_breaker);

struct FusionConfig {
  std::size_t summary_budget_chars = 1200;
  bool summarize_concurrently = true;
};

/// Reasoning fusion: one session showing the image, each strategy's rationale
/// (condensed by the summarization prompt when longer than the budget) labeled
/// with its verdict, and the P0 instruction. Requires one outcome per P1..P6.
FusionResult fuse(std::span<const PromptOutcome> outcomes, const ImageRecord& image,
                  const StrategyContext& ctx, const FusionConfig& config = {});

/// fuse over any non-empty subset of P1..P6 (ablation re-query).
FusionResult fuse_subset(std::span<const PromptOutcome> outcomes, const ImageRecord& image,
                         const StrategyContext& ctx, const FusionConfig& config = {});

enum class DetectMode { P0, Majority, Fusion, Both };

std::string_view to_string(DetectMode mode);
DetectMode detect_mode_from_string(std::string_view text);

struct DetectOptions {
  DetectMode mode = DetectMode::Both;
  bool parallel = true;
  bool always_run_p0 = false;  // otherwise P0 runs only as a tie breaker
  RoiSettings roi;
  FusionConfig fusion;
  // When set, every outcome produced is appended here as one JSON line.
  std::optional<std::filesystem::path> transcript_path;
};

/// Everything produced for one image.
struct Detection {
  std::string image_id;
  std::optional<PromptOutcome> p0;
  std::vector<PromptOutcome> outcomes;  // P1..P6, empty in P0 mode
  std::optional<SubjectRecord> subject;
  std::optional<FusionResult> majority;
  std::optional<FusionResult> fusion;

  /// The verdict for the mode that produced this detection. In Both mode an
  /// undecided fusion falls back to the majority vote.
  Verdict final_verdict(DetectMode mode) const;
  /// Rationale paired with final_verdict.
  std::string final_rationale(DetectMode mode) const;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// End-to-end detection: run_all, then majority vote and/or fusion per mode.
/// Throws Io or Decode for an unreadable image and AllStrategiesFailed when
/// all six strategies failed; other failures are recorded on the outcomes.
Detection detect(const ImageRecord& image, const StrategyContext& ctx, SaliencyProvider& saliency,
                 const DetectOptions& options);

/// One line per outcome of a detection (P0, P1..P6, fusion query).
std::vector<PromptOutcome> detection_outcomes(const Detection& detection);

void to_json(nlohmann::json& j, const FusionResult& r);
void from_json(const nlohmann::json& j, FusionResult& r);

/// Without "contributing": used inside per-image records, which store the
/// outcomes once and relink them on load.
nlohmann::json fusion_to_json_compact(const FusionResult& r);

}  // namespace fakescope
