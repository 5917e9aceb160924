#include "fakescope/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fakescope/report.hpp"
#include "fakescope/resources.hpp"
#include "fakescope/serialization.hpp"

namespace fakescope {

namespace fs = std::filesystem;

namespace {

constexpr int kRunFormatVersion = 1;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
  }
  return lines;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Runs fn(i) for i in [0, n) on up to `width` threads. The first exception is
// rethrown after all workers stop; `stop` lets fn end the loop early.
void for_each_bounded(std::size_t n, int width, const std::function<void(std::size_t)>& fn,
                      std::atomic<bool>* stop = nullptr) {
  if (n == 0) return;
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, width)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> local_stop{false};
  std::atomic<bool>& halt = stop ? *stop : local_stop;
  auto worker = [&] {
    while (!halt.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        halt = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

// ---------------------------------------------------------------- manifests

Manifest parse_manifest(std::string_view text, const fs::path& base_dir, std::string name,
                        bool require_labels) {
  static const std::set<std::string> kKnown = {"id",     "path",   "label",     "generator",
                                               "family", "annotation"};
  Manifest manifest;
  manifest.name = std::move(name);
  std::map<std::string, std::size_t> seen;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "line " + std::to_string(n + 1);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::Parse, where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!kKnown.count(key)) throw Error(ErrorCode::Parse, where + ": unknown field '" + key + "'");
    }
    auto text_field = [&](const char* key, bool required) -> std::optional<std::string> {
      if (!j.contains(key) || j.at(key).is_null()) {
        if (required) throw Error(ErrorCode::Parse, where + ": missing field '" + key + "'");
        return std::nullopt;
      }
      if (!j.at(key).is_string()) {
        throw Error(ErrorCode::Parse, where + ": field '" + key + "' must be a string");
      }
      return j.at(key).get<std::string>();
    };
    ImageRecord record;
    record.id = *text_field("id", true);
    if (record.id.empty()) throw Error(ErrorCode::Parse, where + ": empty id");
    const std::string path = *text_field("path", true);
    if (path.empty()) throw Error(ErrorCode::Parse, where + ": empty path");
    const fs::path p(path);
    record.source = (p.is_absolute() ? p : base_dir / p).lexically_normal();
    try {
      if (auto label = text_field("label", false)) record.truth = label_from_string(*label);
      if (auto family = text_field("family", false)) record.family = family_from_string(*family);
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, where + ": " + e.what());
    }
    record.generator = text_field("generator", false);
    if (auto annotation = text_field("annotation", false)) {
      manifest.annotations[record.id] = *annotation;
    }
    if (auto [it, inserted] = seen.emplace(record.id, n + 1); !inserted) {
      throw Error(ErrorCode::DuplicateId, where + ": id '" + record.id +
                                              "' already used on line " +
                                              std::to_string(it->second));
    }
    if (require_labels && !record.truth) {
      throw Error(ErrorCode::MissingLabel, where + ": record '" + record.id + "' has no label");
    }
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

Manifest load_manifest(const fs::path& path, bool require_labels) {
  const std::string text = read_file(path);
  try {
    return parse_manifest(text, path.parent_path(), path.stem().string(), require_labels);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path dir = path.parent_path();
  std::string out;
  for (const auto& r : manifest.records) {
    const auto* source = std::get_if<fs::path>(&r.source);
    if (!source) throw Error(ErrorCode::Config, "record '" + r.id + "' has no file path");
    json j{{"id", r.id}, {"path", source->lexically_proximate(dir.empty() ? "." : dir).generic_string()}};
    if (r.truth) j["label"] = to_string(*r.truth);
    if (r.generator) j["generator"] = *r.generator;
    if (r.family) j["family"] = to_string(*r.family);
    if (auto it = manifest.annotations.find(r.id); it != manifest.annotations.end()) {
      j["annotation"] = it->second;
    }
    out += j.dump() + "\n";
  }
  write_text_file(path, out);
}

std::vector<Exemplar> manifest_exemplars(const Manifest& manifest) {
  std::vector<Exemplar> out;
  for (const auto& r : manifest.records) {
    auto it = manifest.annotations.find(r.id);
    if (it == manifest.annotations.end() || it->second.empty()) {
      throw Error(ErrorCode::Config, "exemplar '" + r.id + "' has no annotation");
    }
    out.push_back({r, it->second});
  }
  return out;
}

// ------------------------------------------------------------------- runs

namespace {

json settings_json(const RunSettings& s) {
  return json{{"mode", to_string(s.mode)},
              {"wording", to_string(s.wording)},
              {"include_p0", s.include_p0}};
}

RunSettings settings_from_json(const json& j) {
  RunSettings s;
  s.mode = detect_mode_from_string(j.at("mode").get<std::string>());
  s.wording = wording_from_string(j.at("wording").get<std::string>());
  s.include_p0 = j.at("include_p0").get<bool>();
  return s;
}

// The fields a resumed run must agree on.
json run_fingerprint(const std::string& name, const RunSettings& settings,
                     const std::string& prompts_version) {
  return json{{"format", kRunFormatVersion},
              {"name", name},
              {"settings", settings_json(settings)},
              {"prompts_version", prompts_version}};
}

json run_info(const RunArtifact& run) {
  json j = run_fingerprint(run.name, run.settings, run.prompts_version);
  j["complete"] = run.complete;
  j["images"] = run.images.size();
  return j;
}

json subject_json(const SubjectRecord& s) {
  return json{{"phrase", s.subject.phrase},
              {"latency_seconds", s.latency_seconds},
              {"transcript", s.transcript}};
}

SubjectRecord subject_from_json(const json& j) {
  SubjectRecord s;
  s.subject.phrase = j.at("phrase").get<std::string>();
  s.latency_seconds = j.at("latency_seconds").get<double>();
  s.transcript = j.at("transcript").get<Session>();
  return s;
}

FusionResult fusion_from_compact(const json& j, const std::vector<PromptOutcome>& outcomes) {
  FusionResult r = j.get<FusionResult>();
  r.contributing = outcomes;
  return r;
}

// Reads JSON lines, tolerating a truncated last line.
std::vector<json> read_json_lines(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  const std::string text = read_file(path);
  const auto lines = split_lines(text);
  const bool ends_cleanly = !text.empty() && text.back() == '\n';
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(json::parse(lines[i]));
    } catch (const json::exception& e) {
      if (i + 1 == lines.size() && !ends_cleanly) break;
      throw Error(ErrorCode::Parse, path.string() + ": line " + std::to_string(i + 1) + ": " +
                                        e.what());
    }
  }
  return out;
}

std::string transcript_lines(const ImageResult& r) {
  std::string out;
  for (const auto& o : detection_outcomes(r.detection)) out += to_json_line(json(o)) + "\n";
  return out;
}

void append_line(std::ofstream& out, const std::string& text, const fs::path& path) {
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace

json image_result_to_json(const ImageResult& r) {
  const Detection& d = r.detection;
  json j{{"image", r.image}, {"outcomes", d.outcomes}};
  if (r.error) j["error"] = *r.error;
  if (d.p0) j["p0"] = *d.p0;
  if (d.subject) j["subject"] = subject_json(*d.subject);
  if (d.majority) j["majority"] = fusion_to_json_compact(*d.majority);
  if (d.fusion) j["fusion"] = fusion_to_json_compact(*d.fusion);
  return j;
}

ImageResult image_result_from_json(const json& j) {
  ImageResult r;
  r.image = j.at("image").get<ImageRecord>();
  Detection& d = r.detection;
  d.image_id = r.image.id;
  d.outcomes = j.at("outcomes").get<std::vector<PromptOutcome>>();
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  if (j.contains("p0")) d.p0 = j.at("p0").get<PromptOutcome>();
  if (j.contains("subject")) d.subject = subject_from_json(j.at("subject"));
  if (j.contains("majority")) d.majority = fusion_from_compact(j.at("majority"), d.outcomes);
  if (j.contains("fusion")) d.fusion = fusion_from_compact(j.at("fusion"), d.outcomes);
  return r;
}

Verdict final_verdict(const ImageResult& result, DetectMode mode) {
  if (result.error) return Verdict::unparsable();
  return result.detection.final_verdict(mode);
}

void save_run(const RunArtifact& run, const fs::path& dir) {
  fs::create_directories(dir);
  std::string results;
  std::string transcripts;
  for (const auto& r : run.images) {
    results += to_json_line(image_result_to_json(r)) + "\n";
    transcripts += transcript_lines(r);
  }
  json summary{{"name", run.name},
               {"settings", settings_json(run.settings)},
               {"images", run.images.size()},
               {"complete", run.complete},
               {"conflicts", to_json_value(conflict_matrix(run))},
               {"timing", to_json_value(timing_profile(run))}};
  try {
    summary["metrics"] = to_json_value(compute_metrics(run));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::MissingTruth) throw;
  }
  write_text_file(dir / kResultsFile, results);
  write_text_file(dir / kTranscriptsFile, transcripts);
  write_text_file(dir / kSummaryFile, summary.dump(2) + "\n");
  write_text_file(dir / kRunInfoFile, run_info(run).dump(2) + "\n");
}

RunArtifact load_run(const fs::path& dir) {
  const fs::path info_path = dir / kRunInfoFile;
  if (!fs::exists(info_path)) {
    throw Error(ErrorCode::Io, "'" + dir.string() + "' is not a run directory (no run.json)");
  }
  RunArtifact run;
  try {
    const json info = parse_json(read_file(info_path), info_path.string());
    run.name = info.at("name").get<std::string>();
    run.settings = settings_from_json(info.at("settings"));
    run.prompts_version = info.at("prompts_version").get<std::string>();
    run.complete = info.value("complete", false);
    for (const auto& j : read_json_lines(dir / kResultsFile)) {
      run.images.push_back(image_result_from_json(j));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, dir.string() + ": " + e.what());
  }
  return run;
}

RunArtifact evaluate(const Manifest& manifest, const StrategyContext& ctx,
                     SaliencyProvider& saliency, const EvaluateOptions& options) {
  if (options.concurrency < 1) throw Error(ErrorCode::Config, "concurrency must be positive");
  RunArtifact run;
  run.name = manifest.name;
  run.settings = {options.detect.mode, ctx.config.wording, options.include_p0};
  run.prompts_version = ctx.prompts.version();

  DetectOptions detect_options = options.detect;
  detect_options.always_run_p0 = options.include_p0;
  detect_options.transcript_path.reset();

  std::map<std::string, ImageResult> done;
  std::ofstream results_out;
  std::ofstream transcripts_out;
  fs::path results_path;
  fs::path transcripts_path;
  if (options.checkpoint_dir) {
    const fs::path& dir = *options.checkpoint_dir;
    fs::create_directories(dir);
    results_path = dir / kResultsFile;
    transcripts_path = dir / kTranscriptsFile;
    const fs::path info_path = dir / kRunInfoFile;
    const json fingerprint = run_fingerprint(run.name, run.settings, run.prompts_version);
    if (fs::exists(info_path) || fs::exists(results_path)) {
      if (!options.resume) {
        throw Error(ErrorCode::Config, "'" + dir.string() +
                                           "' already holds a run; resume it or choose another "
                                           "directory");
      }
      if (fs::exists(info_path)) {
        json info = parse_json(read_file(info_path), info_path.string());
        info.erase("complete");
        info.erase("images");
        if (info != fingerprint) {
          throw Error(ErrorCode::Config, "'" + dir.string() +
                                             "' was recorded with different settings; cannot "
                                             "resume");
        }
      }
      std::set<std::string> ids;
      for (const auto& r : manifest.records) ids.insert(r.id);
      for (const auto& j : read_json_lines(results_path)) {
        ImageResult r = image_result_from_json(j);
        if (ids.count(r.image.id)) done.insert_or_assign(r.image.id, std::move(r));
      }
    }
    // Start from a clean copy of what survived so appends land on fresh lines.
    std::string results;
    std::string transcripts;
    for (const auto& record : manifest.records) {
      if (auto it = done.find(record.id); it != done.end()) {
        results += to_json_line(image_result_to_json(it->second)) + "\n";
        transcripts += transcript_lines(it->second);
      }
    }
    write_text_file(results_path, results);
    write_text_file(transcripts_path, transcripts);
    json info = fingerprint;
    info["complete"] = false;
    info["images"] = done.size();
    write_text_file(info_path, info.dump(2) + "\n");
    results_out.open(results_path, std::ios::app | std::ios::binary);
    transcripts_out.open(transcripts_path, std::ios::app | std::ios::binary);
    if (!results_out || !transcripts_out) {
      throw Error(ErrorCode::Io, "cannot open checkpoint files in '" + dir.string() + "'");
    }
  }

  std::vector<const ImageRecord*> pending;
  for (const auto& record : manifest.records) {
    if (!done.count(record.id)) pending.push_back(&record);
  }

  std::mutex writer;
  std::atomic<int> claimed{0};
  std::atomic<bool> stop{false};
  const std::size_t total = manifest.records.size();
  for_each_bounded(
      pending.size(), options.concurrency,
      [&](std::size_t i) {
        if (options.max_new_images && claimed.fetch_add(1) >= *options.max_new_images) {
          stop = true;
          return;
        }
        const ImageRecord& image = *pending[i];
        ImageResult result;
        result.image = image;
        result.detection.image_id = image.id;
        try {
          result.detection = detect(image, ctx, saliency, detect_options);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::Config) throw;
          result.error = e.what();
        } catch (const std::exception& e) {
          result.error = e.what();
        }
        std::lock_guard lock(writer);
        if (results_out.is_open()) {
          append_line(transcripts_out, transcript_lines(result), transcripts_path);
          append_line(results_out, to_json_line(image_result_to_json(result)) + "\n", results_path);
        }
        done.insert_or_assign(image.id, std::move(result));
        if (options.progress) options.progress(done.size(), total);
      },
      &stop);

  for (const auto& record : manifest.records) {
    if (auto it = done.find(record.id); it != done.end()) run.images.push_back(it->second);
  }
  run.complete = run.images.size() == total;
  if (options.checkpoint_dir && run.complete) {
    results_out.close();
    transcripts_out.close();
    save_run(run, *options.checkpoint_dir);
  }
  return run;
}

// ---------------------------------------------------------------- metrics

namespace {
double ratio(int num, int den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
}  // namespace

double AccuracyRow::acc_all() const { return ratio(correct(), total()); }
double AccuracyRow::acc_real() const { return ratio(correct_real, n_real); }
double AccuracyRow::acc_generated() const { return ratio(correct_generated, n_generated); }

void AccuracyRow::add(Label truth, const Verdict& verdict) {
  const bool correct = verdict.is_decided() && *verdict.label == truth;
  if (truth == Label::Real) {
    ++n_real;
    correct_real += correct ? 1 : 0;
  } else {
    ++n_generated;
    correct_generated += correct ? 1 : 0;
  }
  if (!verdict.is_decided()) ++rejections;
}

namespace {

void require_truth(const RunArtifact& run) {
  for (const auto& r : run.images) {
    if (!r.image.truth) {
      throw Error(ErrorCode::MissingTruth, "image '" + r.image.id + "' has no label");
    }
  }
}

std::optional<Verdict> ensemble_verdict(const ImageResult& r, StrategyId id) {
  for (const auto& o : r.detection.outcomes) {
    if (o.strategy == id) return o.verdict;
  }
  return std::nullopt;
}

}  // namespace

Metrics compute_metrics(const RunArtifact& run) {
  require_truth(run);
  Metrics m;
  m.wording = run.settings.wording;
  m.mode = run.settings.mode;
  m.overall.name = "Final";

  bool any_p0 = false;
  bool any_outcomes = false;
  bool any_majority = false;
  bool any_fusion = false;
  for (const auto& r : run.images) {
    any_p0 |= r.detection.p0.has_value();
    any_outcomes |= !r.detection.outcomes.empty();
    any_majority |= r.detection.majority.has_value();
    any_fusion |= r.detection.fusion.has_value();
  }

  using Pick = std::function<std::optional<Verdict>(const ImageResult&)>;
  std::vector<std::pair<std::string, Pick>> columns;
  if (any_p0) {
    columns.emplace_back("P0", [](const ImageResult& r) -> std::optional<Verdict> {
      if (!r.detection.p0) return std::nullopt;
      return r.detection.p0->verdict;
    });
  }
  if (any_outcomes) {
    for (StrategyId id : kEnsemble) {
      columns.emplace_back(std::string(to_string(id)),
                           [id](const ImageResult& r) { return ensemble_verdict(r, id); });
    }
  }
  if (any_majority) {
    columns.emplace_back("Maj.", [](const ImageResult& r) -> std::optional<Verdict> {
      if (!r.detection.majority) return std::nullopt;
      return r.detection.majority->verdict;
    });
  }
  if (any_fusion) {
    columns.emplace_back("Fusion", [](const ImageResult& r) -> std::optional<Verdict> {
      if (!r.detection.fusion) return std::nullopt;
      return r.detection.fusion->verdict;
    });
  }

  for (const auto& [name, pick] : columns) {
    AccuracyRow row;
    row.name = name;
    for (const auto& r : run.images) {
      row.add(*r.image.truth, pick(r).value_or(Verdict::unparsable()));
    }
    m.per_strategy.push_back(std::move(row));
  }
  for (const auto& r : run.images) m.overall.add(*r.image.truth, final_verdict(r, run.settings.mode));
  return m;
}

// --------------------------------------------------------------- ablation

namespace {

std::vector<PromptOutcome> without(const std::vector<PromptOutcome>& outcomes, StrategyId excluded) {
  std::vector<PromptOutcome> subset;
  for (const auto& o : outcomes) {
    if (o.strategy != excluded) subset.push_back(o);
  }
  return subset;
}

bool has_full_ensemble(const ImageResult& r) {
  return !r.error && r.detection.outcomes.size() == 6;
}

TieBreaker recorded_p0(const ImageResult& r) {
  if (!r.detection.p0) return {};
  return [p0 = *r.detection.p0] { return p0; };
}

std::string without_name(StrategyId id) { return "w/o " + std::string(to_string(id)); }

}  // namespace

std::vector<Verdict> retally_without(const RunArtifact& run, StrategyId excluded) {
  ensemble_index(excluded);
  std::vector<Verdict> verdicts;
  verdicts.reserve(run.images.size());
  for (const auto& r : run.images) {
    if (!has_full_ensemble(r)) {
      verdicts.push_back(Verdict::unparsable());
      continue;
    }
    const auto subset = without(r.detection.outcomes, excluded);
    verdicts.push_back(majority_vote_subset(subset, recorded_p0(r)).verdict);
  }
  return verdicts;
}

AblationReport ablate_votes(const RunArtifact& run) {
  require_truth(run);
  AblationReport report;
  report.kind = AblationKind::Vote;
  AccuracyRow full;
  full.name = "P1-6";
  for (const auto& r : run.images) {
    Verdict v = Verdict::unparsable();
    if (has_full_ensemble(r)) v = majority_vote(r.detection.outcomes, recorded_p0(r)).verdict;
    full.add(*r.image.truth, v);
  }
  report.rows.push_back(std::move(full));
  for (StrategyId id : kEnsemble) {
    AccuracyRow row;
    row.name = without_name(id);
    const auto verdicts = retally_without(run, id);
    for (std::size_t i = 0; i < run.images.size(); ++i) {
      row.add(*run.images[i].image.truth, verdicts[i]);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

AblationReport ablate_fusion(const RunArtifact& run, const StrategyContext& ctx,
                             const FusionConfig& fusion, int concurrency) {
  require_truth(run);
  AblationReport report;
  report.kind = AblationKind::Fusion;
  const std::size_t n = run.images.size();

  // verdicts[k][i]: k = 0 for the full set, k = 1..6 for "without P_k".
  std::vector<std::vector<Verdict>> verdicts(7, std::vector<Verdict>(n, Verdict::unparsable()));
  auto fused = [&](const ImageResult& r, std::span<const PromptOutcome> subset) {
    try {
      return fuse_subset(subset, r.image, ctx, fusion).verdict;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Config) throw;
      return Verdict::unparsable();
    }
  };
  for_each_bounded(n, concurrency, [&](std::size_t i) {
    const ImageResult& r = run.images[i];
    if (!has_full_ensemble(r)) return;
    if (r.detection.fusion && r.detection.fusion->query && !r.detection.fusion->query->failed()) {
      verdicts[0][i] = r.detection.fusion->verdict;
    } else {
      verdicts[0][i] = fused(r, r.detection.outcomes);
    }
    for (std::size_t k = 0; k < 6; ++k) {
      verdicts[k + 1][i] = fused(r, without(r.detection.outcomes, kEnsemble[k]));
    }
  });
  for (std::size_t k = 0; k < 7; ++k) {
    AccuracyRow row;
    row.name = k == 0 ? "P1-6" : without_name(kEnsemble[k - 1]);
    for (std::size_t i = 0; i < n; ++i) row.add(*run.images[i].image.truth, verdicts[k][i]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// -------------------------------------------------------------- conflicts

double ConflictMatrix::percent(std::size_t i, std::size_t j) const {
  if (comparable.at(i).at(j) == 0) return 0.0;
  return 100.0 * disagree[i][j] / comparable[i][j];
}

double ConflictMatrix::any_conflict_rate() const {
  return images == 0 ? 0.0 : 100.0 * images_with_conflict / images;
}

std::vector<VoteVector> vote_vectors(const RunArtifact& run) {
  std::vector<VoteVector> out;
  out.reserve(run.images.size());
  for (const auto& r : run.images) {
    VoteVector v{};
    for (const auto& o : r.detection.outcomes) {
      if (o.verdict.is_decided()) v[ensemble_index(o.strategy)] = o.verdict.label;
    }
    out.push_back(v);
  }
  return out;
}

namespace {

using Counts = std::array<std::array<int, 6>, 6>;

// Upper-triangle counts for one image; returns whether any pair disagrees.
bool count_pairs(const VoteVector& v, Counts& disagree, Counts& comparable) {
  bool conflict = false;
  for (std::size_t i = 0; i < 6; ++i) {
    if (!v[i]) continue;
    for (std::size_t j = i + 1; j < 6; ++j) {
      if (!v[j]) continue;
      ++comparable[i][j];
      if (*v[i] != *v[j]) {
        ++disagree[i][j];
        conflict = true;
      }
    }
  }
  return conflict;
}

void mirror(ConflictMatrix& m) {
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      m.disagree[j][i] = m.disagree[i][j];
      m.comparable[j][i] = m.comparable[i][j];
    }
  }
}

}  // namespace

ConflictMatrix conflict_matrix(std::span<const VoteVector> votes) {
  ConflictMatrix m;
  m.images = static_cast<int>(votes.size());
  const long n = static_cast<long>(votes.size());
  int conflicts = 0;
#pragma omp parallel
  {
    Counts disagree{};
    Counts comparable{};
    int local = 0;
#pragma omp for schedule(static) nowait
    for (long k = 0; k < n; ++k) {
      local += count_pairs(votes[static_cast<std::size_t>(k)], disagree, comparable) ? 1 : 0;
    }
#pragma omp critical
    {
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
          m.disagree[i][j] += disagree[i][j];
          m.comparable[i][j] += comparable[i][j];
        }
      }
      conflicts += local;
    }
  }
  m.images_with_conflict = conflicts;
  mirror(m);
  return m;
}

ConflictMatrix conflict_matrix(const RunArtifact& run) {
  const auto votes = vote_vectors(run);
  return conflict_matrix(votes);
}

ConflictMatrix pool(std::span<const ConflictMatrix> matrices) {
  ConflictMatrix out;
  for (const auto& m : matrices) {
    out.images += m.images;
    out.images_with_conflict += m.images_with_conflict;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        out.disagree[i][j] += m.disagree[i][j];
        out.comparable[i][j] += m.comparable[i][j];
      }
    }
  }
  return out;
}

namespace reference {

ConflictMatrix conflict_matrix(std::span<const VoteVector> votes) {
  ConflictMatrix m;
  m.images = static_cast<int>(votes.size());
  for (const auto& v : votes) {
    Counts disagree{};
    Counts comparable{};
    if (count_pairs(v, disagree, comparable)) ++m.images_with_conflict;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        m.disagree[i][j] += disagree[i][j];
        m.comparable[i][j] += comparable[i][j];
      }
    }
  }
  mirror(m);
  return m;
}

}  // namespace reference

// ----------------------------------------------------------------- timing

namespace {

double session_latency(const Session& s) {
  double total = 0.0;
  for (const auto& t : s.turns()) {
    if (t.is_live_assistant()) total += t.latency_seconds.value_or(0.0);
  }
  return total;
}

}  // namespace

TimingProfile timing_profile(const RunArtifact& run) {
  TimingProfile profile;
  if (run.images.empty()) return profile;
  struct Acc {
    double sum = 0.0;
    int n = 0;
    void add(double v) {
      sum += v;
      ++n;
    }
  };
  Acc p0, seq, seq_fusion, par, par_fusion;
  for (const auto& r : run.images) {
    const Detection& d = r.detection;
    if (d.p0 && !d.p0->failed()) p0.add(d.p0->latency_seconds);
    if (!has_full_ensemble(r)) continue;
    std::array<double, 6> lat{};
    for (const auto& o : d.outcomes) lat[ensemble_index(o.strategy)] = o.latency_seconds;
    const double identify = d.subject ? d.subject->latency_seconds : 0.0;
    double sequential = identify;
    for (double v : lat) sequential += v;
    const double parallel =
        std::max({lat[0], lat[1], lat[2], lat[3], identify + std::max(lat[4], lat[5])});
    seq.add(sequential);
    par.add(parallel);
    if (d.fusion && d.fusion->query && !d.fusion->query->failed()) {
      const auto& sessions = d.fusion->query->transcript;
      double summaries_sum = 0.0;
      double summaries_max = 0.0;
      for (std::size_t i = 0; i + 1 < sessions.size(); ++i) {
        const double v = session_latency(sessions[i]);
        summaries_sum += v;
        summaries_max = std::max(summaries_max, v);
      }
      const double final_query = sessions.empty() ? 0.0 : session_latency(sessions.back());
      seq_fusion.add(sequential + summaries_sum + final_query);
      par_fusion.add(parallel + summaries_max + final_query);
    }
  }
  auto row = [](std::string name, const Acc& a) {
    return TimingRow{std::move(name), a.n ? a.sum / a.n : 0.0, a.n};
  };
  profile.rows = {row("P0", p0), row("P1-6 (Sequential)", seq),
                  row("P1-6 + Fusion (Sequential)", seq_fusion), row("P1-6 (Parallel)", par),
                  row("P1-6 + Fusion (Parallel)", par_fusion)};
  return profile;
}

// ------------------------------------------------------------------ sweep

namespace {

AccuracyRow p4_pass(const Manifest& manifest, const StrategyContext& ctx, std::string name,
                    bool zero_shot, int concurrency) {
  std::vector<Verdict> verdicts(manifest.records.size(), Verdict::unparsable());
  for_each_bounded(manifest.records.size(), concurrency, [&](std::size_t i) {
    const ImageRecord& image = manifest.records[i];
    try {
      verdicts[i] = (zero_shot ? run_p4_zero_shot(image, ctx) : run_p4(image, ctx)).verdict;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Config || e.code() == ErrorCode::MissingExemplars) throw;
    } catch (const std::exception&) {
    }
  });
  AccuracyRow row;
  row.name = std::move(name);
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    row.add(*manifest.records[i].truth, verdicts[i]);
  }
  return row;
}

}  // namespace

SweepResult sweep_exemplars(const Manifest& manifest, const StrategyContext& ctx,
                            std::span<const Exemplar> reals, std::span<const Exemplar> fakes,
                            int concurrency) {
  if (reals.empty() || fakes.empty()) {
    throw Error(ErrorCode::MissingExemplars, "exemplar sweep needs real and fake exemplars");
  }
  for (const auto& r : manifest.records) {
    if (!r.truth) throw Error(ErrorCode::MissingTruth, "image '" + r.id + "' has no label");
  }
  SweepResult result;
  result.control = p4_pass(manifest, ctx, "zero-shot", true, concurrency);
  for (const auto& real : reals) {
    for (const auto& fake : fakes) {
      StrategyConfig config = ctx.config;
      config.fewshot_real = real;
      config.fewshot_fake = fake;
      config.validate();
      const StrategyContext cell_ctx{ctx.backend, config, ctx.prompts, ctx.rejections};
      SweepCell cell;
      cell.real_id = real.image.id;
      cell.fake_id = fake.image.id;
      cell.accuracy = p4_pass(manifest, cell_ctx, cell.real_id + "+" + cell.fake_id, false,
                              concurrency);
      cell.delta_all = cell.accuracy.acc_all() - result.control.acc_all();
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

// --------------------------------------------------------------- keywords

std::vector<std::string> default_keywords() {
  const auto text = embedded_resource("keywords.txt");
  if (!text) throw Error(ErrorCode::Config, "bundled keyword list missing");
  std::vector<std::string> out;
  for (const auto& line : split_lines(*text)) {
    std::string phrase = trim(line);
    if (phrase.empty() || phrase.front() == '#') continue;
    out.push_back(std::move(phrase));
  }
  return out;
}

std::vector<KeywordCount> keyword_tally(std::span<const std::string> texts,
                                        std::span<const std::string> keywords) {
  std::vector<std::string> lowered;
  lowered.reserve(texts.size());
  for (const auto& t : texts) lowered.push_back(lower(t));
  std::vector<KeywordCount> out;
  std::set<std::string> seen;
  for (const auto& keyword : keywords) {
    const std::string needle = lower(trim(keyword));
    if (needle.empty() || !seen.insert(needle).second) continue;
    int count = 0;
    for (const auto& text : lowered) {
      for (std::size_t pos = text.find(needle); pos != std::string::npos;
           pos = text.find(needle, pos + needle.size())) {
        ++count;
      }
    }
    if (count > 0) out.push_back({trim(keyword), count});
  }
  std::sort(out.begin(), out.end(), [](const KeywordCount& a, const KeywordCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.phrase < b.phrase;
  });
  return out;
}

std::vector<KeywordCount> keyword_tally(const RunArtifact& run,
                                        std::span<const std::string> keywords) {
  std::vector<std::string> texts;
  for (const auto& r : run.images) {
    for (const auto& o : detection_outcomes(r.detection)) {
      if (!o.rationale.empty()) texts.push_back(o.rationale);
    }
  }
  return keyword_tally(texts, keywords);
}

}  // namespace fakescope
