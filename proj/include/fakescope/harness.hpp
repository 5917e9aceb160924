#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fakescope/core.hpp"
#include "fakescope/fusion.hpp"
#include "fakescope/roi.hpp"
#include "fakescope/strategies.hpp"

namespace fakescope {

// ---------------------------------------------------------------- manifests

/// A labeled image set. Manifest files hold one JSON object per line with
/// fields id, path (relative to the manifest's directory), label, generator,
/// family, and an optional annotation used when the image serves as a few-shot
/// exemplar. Blank lines and lines starting with '#' are ignored.
struct Manifest {
  std::string name;
  std::vector<ImageRecord> records;
  std::map<std::string, std::string> annotations;  // by image id

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Parses manifest text. Errors name the line: ParseError for malformed lines
/// or fields, DuplicateId, and MissingLabel when require_labels is set.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        std::string name, bool require_labels);

/// Reads and parses a manifest file; the name is the file stem.
Manifest load_manifest(const std::filesystem::path& path, bool require_labels = true);

/// Writes a manifest with paths relative to the target file's directory.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// The images of a manifest as few-shot exemplars. Throws Config when an image
/// has no annotation.
std::vector<Exemplar> manifest_exemplars(const Manifest& manifest);

// ------------------------------------------------------------------- runs

/// Everything recorded for one image of an evaluation run.
struct ImageResult {
  ImageRecord image;
  Detection detection;
  std::optional<std::string> error;  // set when the image could not be scored at all

  friend bool operator==(const ImageResult&, const ImageResult&) = default;
};

/// Settings that shape the recorded results. Scheduling knobs (parallel
/// strategies, image concurrency) are left out so they cannot change artifacts.
struct RunSettings {
  DetectMode mode = DetectMode::Both;
  WordingVariant wording = WordingVariant::Generated;
  bool include_p0 = true;  // record P0 for every image (also the cached tie breaker)

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

/// In-memory run artifact: per-image results in manifest order.
struct RunArtifact {
  std::string name;
  RunSettings settings;
  std::string prompts_version;
  std::vector<ImageResult> images;
  bool complete = true;  // false when evaluation stopped early

  friend bool operator==(const RunArtifact&, const RunArtifact&) = default;
};

struct EvaluateOptions {
  DetectOptions detect;  // mode and parallel are taken from here
  bool include_p0 = true;
  int concurrency = 4;   // images in flight
  // Run directory: results.jsonl is appended after every image, so an
  // interrupted run can continue with resume set.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool resume = false;
  // Stop after this many newly evaluated images (simulated interruption).
  std::optional<int> max_new_images;
  // Called after each image with (done, total).
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Evaluates every image with bounded concurrency. Per-image failures are
/// recorded on the image and the run continues; Config errors abort. With a
/// checkpoint directory the finished artifact is also written there.
RunArtifact evaluate(const Manifest& manifest, const StrategyContext& ctx,
                     SaliencyProvider& saliency, const EvaluateOptions& options);

/// Run directory layout.
inline constexpr std::string_view kRunInfoFile = "run.json";
inline constexpr std::string_view kResultsFile = "results.jsonl";
inline constexpr std::string_view kTranscriptsFile = "transcripts.jsonl";
inline constexpr std::string_view kSummaryFile = "summary.json";

/// Writes run.json, results.jsonl (manifest order), transcripts.jsonl and
/// summary.json. Output is byte-identical for equal artifacts.
void save_run(const RunArtifact& run, const std::filesystem::path& dir);

/// Reads a run directory. A truncated final line of results.jsonl (from a
/// killed process) is ignored.
RunArtifact load_run(const std::filesystem::path& dir);

nlohmann::json image_result_to_json(const ImageResult& result);
ImageResult image_result_from_json(const nlohmann::json& j);

/// The verdict that counts for an image under the run's mode.
Verdict final_verdict(const ImageResult& result, DetectMode mode);

// ---------------------------------------------------------------- metrics

/// Counts behind one accuracy row. Rejections (any non-Decided verdict,
/// including failures) count as incorrect and are also tallied separately.
struct AccuracyRow {
  std::string name;
  int n_real = 0;
  int n_generated = 0;
  int correct_real = 0;
  int correct_generated = 0;
  int rejections = 0;

  double acc_all() const;
  double acc_real() const;
  double acc_generated() const;
  int total() const { return n_real + n_generated; }
  int correct() const { return correct_real + correct_generated; }

  void add(Label truth, const Verdict& verdict);

  friend bool operator==(const AccuracyRow&, const AccuracyRow&) = default;
};

struct Metrics {
  WordingVariant wording = WordingVariant::Generated;
  DetectMode mode = DetectMode::Both;
  AccuracyRow overall;                  // the run mode's final verdicts
  std::vector<AccuracyRow> per_strategy;  // P0, P1..P6, Maj., Fusion where recorded

  int n_real() const { return overall.n_real; }
  int n_generated() const { return overall.n_generated; }
  int rejections() const { return overall.rejections; }
};

/// Throws MissingTruth when an image has no label.
Metrics compute_metrics(const RunArtifact& run);

// --------------------------------------------------------------- ablation

enum class AblationKind { Vote, Fusion };

/// Full-set row ("P1-6") followed by "w/o P1" .. "w/o P6".
struct AblationReport {
  AblationKind kind = AblationKind::Vote;
  std::vector<AccuracyRow> rows;
};

/// Majority over the remaining five outcomes of every recorded image. Ties use
/// the recorded P0 outcome; without one a tie stays Unparsable. No backend
/// calls.
std::vector<Verdict> retally_without(const RunArtifact& run, StrategyId excluded);
AblationReport ablate_votes(const RunArtifact& run);

/// Re-runs reasoning fusion over the remaining five outcomes of every image.
AblationReport ablate_fusion(const RunArtifact& run, const StrategyContext& ctx,
                             const FusionConfig& fusion, int concurrency);

// -------------------------------------------------------------- conflicts

/// Decided labels of P1..P6 for one image; nullopt for non-Decided.
using VoteVector = std::array<std::optional<Label>, 6>;

struct ConflictMatrix {
  std::array<std::array<int, 6>, 6> disagree{};    // images with different Decided labels
  std::array<std::array<int, 6>, 6> comparable{};  // images where both are Decided
  int images = 0;
  int images_with_conflict = 0;

  /// 100 * disagree / comparable, 0 when nothing is comparable.
  double percent(std::size_t i, std::size_t j) const;
  /// Share of all images (in percent) with at least one disagreeing pair.
  double any_conflict_rate() const;

  friend bool operator==(const ConflictMatrix&, const ConflictMatrix&) = default;
};

std::vector<VoteVector> vote_vectors(const RunArtifact& run);

/// OpenMP over images.
ConflictMatrix conflict_matrix(std::span<const VoteVector> votes);
ConflictMatrix conflict_matrix(const RunArtifact& run);

/// Sums counts across runs (pooled aggregate).
ConflictMatrix pool(std::span<const ConflictMatrix> matrices);

namespace reference {
/// Serial single-loop version of conflict_matrix, kept for tests and benchmarks.
ConflictMatrix conflict_matrix(std::span<const VoteVector> votes);
}  // namespace reference

// ----------------------------------------------------------------- timing

struct TimingRow {
  std::string name;
  double mean_seconds = 0.0;
  int images = 0;  // images that contributed
};

/// Rows "P0", "P1-6 (Sequential)", "P1-6 + Fusion (Sequential)",
/// "P1-6 (Parallel)", "P1-6 + Fusion (Parallel)"; empty for an empty run.
/// Computed from recorded per-query latencies: sequential sums every query,
/// parallel takes the critical path max(P1..P4, identify + max(P5, P6)), and
/// fusion adds its summaries (sum or max) plus the final query.
struct TimingProfile {
  std::vector<TimingRow> rows;
};

TimingProfile timing_profile(const RunArtifact& run);

// ------------------------------------------------------------------ sweep

struct SweepCell {
  std::string real_id;
  std::string fake_id;
  AccuracyRow accuracy;
  double delta_all = 0.0;  // acc_all minus the control's
};

struct SweepResult {
  AccuracyRow control;  // P4 with no exemplars
  std::vector<SweepCell> cells;  // real-major order
};

/// One P4 pass over the manifest per (real, fake) exemplar pair plus the
/// zero-shot control. Throws MissingExemplars when either list is empty.
SweepResult sweep_exemplars(const Manifest& manifest, const StrategyContext& ctx,
                            std::span<const Exemplar> reals, std::span<const Exemplar> fakes,
                            int concurrency);

// --------------------------------------------------------------- keywords

struct KeywordCount {
  std::string phrase;
  int count = 0;

  friend bool operator==(const KeywordCount&, const KeywordCount&) = default;
};

/// The bundled default phrase list.
std::vector<std::string> default_keywords();

/// Case-insensitive, non-overlapping phrase counts over all recorded
/// rationales. Zero counts are dropped; sorted by count, then phrase.
std::vector<KeywordCount> keyword_tally(const RunArtifact& run,
                                        std::span<const std::string> keywords);

/// Same over plain texts.
std::vector<KeywordCount> keyword_tally(std::span<const std::string> texts,
                                        std::span<const std::string> keywords);

}  // namespace fakescope
