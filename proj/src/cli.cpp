#include "fakescope/cli.hpp"

#include <CLI11.hpp>

#include "fakescope/harness.hpp"
#include "fakescope/report.hpp"
#include "fakescope/serialization.hpp"

namespace fakescope {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string backend;
  std::string script;
  std::string mode;
  std::string wording;
  bool parallel = false;
  bool sequential = false;
  int concurrency = 0;
  std::string checkpoint;
  std::string report;
  bool resume = false;
};

struct CommandArgs {
  std::string image;
  std::string manifest;
  std::vector<std::string> run_dirs;
  std::string output;
  std::string ablation_kind = "vote";
  std::string reals;
  std::string fakes;
  std::string keywords;
  bool unlabeled = false;
};

CliConfig resolve_config(const CommonFlags& flags, const EnvLookup& env) {
  CliConfig config;
  std::string path = flags.config_path;
  if (path.empty()) {
    if (auto v = env("FAKESCOPE_CONFIG")) path = *v;
  }
  if (!path.empty()) config = load_config(path);
  apply_env(config, env);

  if (!flags.backend.empty()) select_backend(config, flags.backend);
  if (!flags.script.empty()) {
    config.backend.kind = "scripted";
    config.backend.script = flags.script;
  }
  if (!flags.mode.empty()) config.fusion.mode = detect_mode_from_string(flags.mode);
  if (!flags.wording.empty() && flags.wording != "both") {
    config.strategy.wording = wording_from_string(flags.wording);
  }
  if (flags.parallel) config.strategy.parallel = true;
  if (flags.sequential) config.strategy.parallel = false;
  if (flags.concurrency > 0) config.harness.concurrency = flags.concurrency;
  if (!flags.checkpoint.empty()) config.harness.checkpoint_dir = flags.checkpoint;
  if (!flags.report.empty()) config.harness.report = report_format_from_string(flags.report);
  return config;
}

DetectOptions detect_options(const CliConfig& config) {
  DetectOptions options;
  options.mode = config.fusion.mode;
  options.parallel = config.strategy.parallel;
  options.roi = config.roi.settings;
  options.fusion = config.fusion.fusion;
  return options;
}

// Prints a report and writes it to `path` when one is given.
template <typename Report>
void deliver(const Report& report, ReportFormat format, const std::optional<fs::path>& path,
             std::ostream& out) {
  const std::string text = render_report(report, format);
  out << text;
  if (path) write_text_file(*path, text);
}

std::optional<fs::path> output_path(const CommandArgs& args, const fs::path& default_dir,
                                    std::string_view stem, ReportFormat format) {
  if (!args.output.empty()) return fs::path(args.output);
  if (default_dir.empty()) return std::nullopt;
  return default_dir / (std::string(stem) + "." + std::string(file_extension(format)));
}

std::string vote_line(const Detection& d) {
  std::string line;
  for (const auto& o : d.outcomes) {
    if (!line.empty()) line += ", ";
    line += std::string(to_string(o.strategy)) + " " + o.verdict.display();
  }
  const VoteTally t = tally(d.outcomes);
  line += " (" + std::to_string(t.generated) + " generated, " + std::to_string(t.real) +
          " real, " + std::to_string(t.abstained) + " abstained)";
  return line;
}

int cmd_detect(const CliConfig& config, const CommandArgs& args, std::ostream& out) {
  const fs::path image_path(args.image);
  if (!fs::is_regular_file(image_path)) {
    throw Error(ErrorCode::Io, "no such image '" + image_path.string() + "'");
  }
  Runtime runtime = make_runtime(config);
  ImageRecord image;
  image.id = image_path.filename().string();
  image.source = image_path;

  DetectOptions options = detect_options(config);
  if (config.harness.checkpoint_dir) {
    fs::create_directories(*config.harness.checkpoint_dir);
    options.transcript_path = *config.harness.checkpoint_dir / kTranscriptsFile;
  }
  const Detection d = detect(image, runtime.context(), *runtime.saliency, options);
  const Verdict verdict = d.final_verdict(options.mode);

  if (config.harness.report == ReportFormat::Structured) {
    ImageResult result{image, d, std::nullopt};
    json j = image_result_to_json(result);
    j["verdict"] = verdict;
    j["mode"] = to_string(options.mode);
    out << j.dump(2) << "\n";
  } else {
    out << "verdict: " << verdict.display() << "\n";
    if (!d.outcomes.empty()) out << "votes: " << vote_line(d) << "\n";
    if (d.majority && d.majority->tie_broken) out << "tie: " << d.majority->rationale << "\n";
    if (d.subject) out << "subject: " << d.subject->subject.phrase << "\n";
    const std::string rationale = d.final_rationale(options.mode);
    if (!rationale.empty()) out << "rationale:\n" << rationale << "\n";
  }
  return verdict.is_decided() ? kExitOk : kExitUndecided;
}

RunArtifact bench_run(const CliConfig& config, const Manifest& manifest, bool resume,
                      const std::optional<fs::path>& dir, std::ostream& err) {
  Runtime runtime = make_runtime(config);
  EvaluateOptions options;
  options.detect = detect_options(config);
  options.include_p0 = config.harness.include_p0;
  options.concurrency = config.harness.concurrency;
  options.checkpoint_dir = dir;
  options.resume = resume;
  RunArtifact run = evaluate(manifest, runtime.context(), *runtime.saliency, options);
  std::size_t failed = 0;
  for (const auto& r : run.images) failed += r.error ? 1 : 0;
  if (failed) err << failed << " of " << run.images.size() << " images failed; see results\n";
  return run;
}

int cmd_bench(CliConfig config, const CommonFlags& flags, const CommandArgs& args,
              std::ostream& out, std::ostream& err) {
  if (flags.resume && !config.harness.checkpoint_dir) {
    throw Error(ErrorCode::Config, "--resume needs a checkpoint directory");
  }
  const Manifest manifest = load_manifest(args.manifest, true);
  const ReportFormat format = config.harness.report;
  const auto& dir = config.harness.checkpoint_dir;

  if (flags.wording == "both") {
    std::vector<Metrics> runs;
    for (WordingVariant w : {WordingVariant::Fake, WordingVariant::Generated}) {
      config.strategy.wording = w;
      std::optional<fs::path> sub;
      if (dir) sub = *dir / std::string(to_string(w));
      const RunArtifact run = bench_run(config, manifest, flags.resume, sub, err);
      const Metrics metrics = compute_metrics(run);
      if (sub) write_text_file(*sub / ("report." + std::string(file_extension(format))),
                               render_report(metrics, format));
      runs.push_back(metrics);
    }
    const std::string text = render_wording_report(runs, format);
    out << text;
    if (dir) write_text_file(*dir / ("wording." + std::string(file_extension(format))), text);
    return kExitOk;
  }

  const RunArtifact run = bench_run(config, manifest, flags.resume, dir, err);
  const Metrics metrics = compute_metrics(run);
  if (dir) {
    write_text_file(*dir / ("report." + std::string(file_extension(format))),
                    render_report(metrics, format));
  }
  out << render_report(metrics, ReportFormat::Table);
  return kExitOk;
}

int cmd_ablate(CliConfig config, const CommandArgs& args, std::ostream& out) {
  const fs::path dir = args.run_dirs.at(0);
  const RunArtifact run = load_run(dir);
  const ReportFormat format = config.harness.report;
  AblationReport report;
  if (args.ablation_kind == "vote") {
    report = ablate_votes(run);
  } else if (args.ablation_kind == "fusion") {
    config.strategy.wording = run.settings.wording;
    Runtime runtime = make_runtime(config);
    report = ablate_fusion(run, runtime.context(), config.fusion.fusion, config.harness.concurrency);
  } else {
    throw Error(ErrorCode::Config, "--kind must be vote or fusion");
  }
  deliver(report, format, output_path(args, dir, "ablation-" + args.ablation_kind, format), out);
  return kExitOk;
}

int cmd_conflicts(const CliConfig& config, const CommandArgs& args, std::ostream& out) {
  ConflictReport report;
  for (const auto& d : args.run_dirs) {
    const RunArtifact run = load_run(d);
    report.runs.emplace_back(run.name, conflict_matrix(run));
  }
  const ReportFormat format = config.harness.report;
  deliver(report, format, output_path(args, args.run_dirs.at(0), "conflicts", format), out);
  return kExitOk;
}

int cmd_profile(const CliConfig& config, const CommandArgs& args, std::ostream& out) {
  const fs::path dir = args.run_dirs.at(0);
  const TimingProfile profile = timing_profile(load_run(dir));
  const ReportFormat format = config.harness.report;
  deliver(profile, format, output_path(args, dir, "timing", format), out);
  return kExitOk;
}

int cmd_keywords(const CliConfig& config, const CommandArgs& args, std::ostream& out) {
  const fs::path dir = args.run_dirs.at(0);
  std::vector<std::string> keywords;
  if (args.keywords.empty()) {
    keywords = default_keywords();
  } else {
    std::ifstream in(args.keywords);
    if (!in) throw Error(ErrorCode::Io, "cannot read '" + args.keywords + "'");
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line.front() != '#') keywords.push_back(line);
    }
  }
  const auto counts = keyword_tally(load_run(dir), keywords);
  const ReportFormat format = config.harness.report;
  deliver(std::span<const KeywordCount>(counts), format, output_path(args, dir, "keywords", format),
          out);
  return kExitOk;
}

int cmd_sweep(const CliConfig& config, const CommandArgs& args, std::ostream& out) {
  if (args.reals.empty() || args.fakes.empty()) {
    throw Error(ErrorCode::Config, "sweep needs --reals and --fakes exemplar manifests");
  }
  const Manifest manifest = load_manifest(args.manifest, true);
  const auto reals = manifest_exemplars(load_manifest(args.reals, false));
  const auto fakes = manifest_exemplars(load_manifest(args.fakes, false));
  Runtime runtime = make_runtime(config);
  const SweepResult sweep =
      sweep_exemplars(manifest, runtime.context(), reals, fakes, config.harness.concurrency);
  const ReportFormat format = config.harness.report;
  const fs::path dir = config.harness.checkpoint_dir.value_or(fs::path{});
  deliver(sweep, format, output_path(args, dir, "sweep", format), out);
  return kExitOk;
}

int cmd_validate(const CommandArgs& args, std::ostream& out) {
  const Manifest manifest = load_manifest(args.manifest, !args.unlabeled);
  std::size_t missing = 0;
  for (const auto& r : manifest.records) {
    const auto* path = std::get_if<fs::path>(&r.source);
    if (path && !fs::exists(*path)) ++missing;
  }
  out << args.manifest << ": " << manifest.records.size() << " records";
  if (missing) out << " (" << missing << " image files not found)";
  out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            const EnvLookup& env) {
  CLI::App app{"Interrogates a multimodal chat model about whether an image is real or "
               "generated, and evaluates the prompt ensemble on labeled image sets.",
               "fakescope"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "fakescope 1.0");

  CommonFlags flags;
  CommandArgs args;
  app.add_option("--config", flags.config_path, "JSON config file (also FAKESCOPE_CONFIG)");
  app.add_option("--backend", flags.backend,
                 "Backend: openai, scripted, or a name from the config's backends section");
  app.add_option("--script", flags.script, "Scripted-backend reply file (selects scripted)");
  app.add_option("--mode", flags.mode, "Verdict mode")
      ->check(CLI::IsMember({"p0", "majority", "fusion", "both"}));
  app.add_option("--wording", flags.wording, "Verdict wording (bench also accepts both)")
      ->check(CLI::IsMember({"fake", "generated", "both"}));
  auto* parallel = app.add_flag("--parallel", flags.parallel, "Run P1-P6 concurrently per image");
  app.add_flag("--sequential", flags.sequential, "Run P1-P6 one after another")
      ->excludes(parallel);
  app.add_option("--concurrency", flags.concurrency, "Images evaluated at once")
      ->check(CLI::PositiveNumber);
  app.add_option("--checkpoint", flags.checkpoint, "Run/output directory");
  app.add_option("--report", flags.report, "Report format")
      ->check(CLI::IsMember({"structured", "json", "csv", "table"}));
  app.add_flag("--resume", flags.resume, "Continue the run recorded in --checkpoint");

  auto* detect_cmd = app.add_subcommand("detect", "Classify one image");
  detect_cmd->add_option("image", args.image, "Image file")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Evaluate a labeled manifest");
  bench_cmd->add_option("manifest", args.manifest, "Manifest (.jsonl)")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Leave-one-out ablation of a recorded run");
  ablate_cmd->add_option("run_dir", args.run_dirs, "Run directory")->required()->expected(1);
  ablate_cmd->add_option("--kind", args.ablation_kind, "vote (no backend calls) or fusion")
      ->check(CLI::IsMember({"vote", "fusion"}));
  ablate_cmd->add_option("--output", args.output, "Report file (default: in the run directory)");

  auto* conflicts_cmd = app.add_subcommand("conflicts", "Pairwise disagreement matrix");
  conflicts_cmd->add_option("run_dirs", args.run_dirs, "Run directories (pooled when several)")
      ->required();
  conflicts_cmd->add_option("--output", args.output, "Report file (default: in the first run)");

  auto* profile_cmd = app.add_subcommand("profile", "Seconds per image by execution mode");
  profile_cmd->add_option("run_dir", args.run_dirs, "Run directory")->required()->expected(1);
  profile_cmd->add_option("--output", args.output, "Report file (default: in the run directory)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Few-shot exemplar sweep");
  sweep_cmd->add_option("manifest", args.manifest, "Evaluation manifest")->required();
  sweep_cmd->add_option("--reals", args.reals, "Manifest of real exemplars with annotations");
  sweep_cmd->add_option("--fakes", args.fakes, "Manifest of generated exemplars with annotations");
  sweep_cmd->add_option("--output", args.output, "Report file (default: in --checkpoint)");

  auto* validate_cmd = app.add_subcommand("validate", "Check a manifest");
  validate_cmd->add_option("manifest", args.manifest, "Manifest (.jsonl)")->required();
  validate_cmd->add_flag("--unlabeled", args.unlabeled, "Allow records without labels");

  auto* keywords_cmd = app.add_subcommand("keywords", "Phrase frequencies in rationales");
  keywords_cmd->add_option("run_dir", args.run_dirs, "Run directory")->required()->expected(1);
  keywords_cmd->add_option("--keywords", args.keywords, "Phrase list, one per line");
  keywords_cmd->add_option("--output", args.output, "Report file (default: in the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*validate_cmd) return cmd_validate(args, out);
    CliConfig config = resolve_config(flags, env);
    if (*detect_cmd) {
      if (flags.wording == "both") throw Error(ErrorCode::Config, "detect needs one wording");
      return cmd_detect(config, args, out);
    }
    if (*bench_cmd) return cmd_bench(config, flags, args, out, err);
    if (*ablate_cmd) return cmd_ablate(config, args, out);
    if (*conflicts_cmd) return cmd_conflicts(config, args, out);
    if (*profile_cmd) return cmd_profile(config, args, out);
    if (*sweep_cmd) return cmd_sweep(config, args, out);
    if (*keywords_cmd) return cmd_keywords(config, args, out);
  } catch (const std::exception& e) {
    err << "fakescope: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace fakescope
