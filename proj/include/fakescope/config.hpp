#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "fakescope/backend.hpp"
#include "fakescope/fusion.hpp"
#include "fakescope/harness.hpp"
#include "fakescope/prompts.hpp"
#include "fakescope/report.hpp"
#include "fakescope/roi.hpp"
#include "fakescope/strategies.hpp"
#include "fakescope/verdict.hpp"

namespace fakescope {

struct BackendSection {
  std::string kind = "openai";  // "openai" or "scripted"
  BackendConfig openai;
  std::optional<std::filesystem::path> script;  // scripted replies
};

struct ExemplarSource {
  std::filesystem::path image;
  std::string annotation;
};

struct StrategySection {
  WordingVariant wording = WordingVariant::Generated;
  std::string system_prompt;  // empty: bundled
  bool use_cached_assistant = true;
  std::optional<ExemplarSource> fewshot_real;  // unset: bundled placeholder
  std::optional<ExemplarSource> fewshot_fake;
  int roi_crops = 1;
  bool parallel = true;
  std::optional<std::filesystem::path> prompt_dir;
  std::optional<std::filesystem::path> rejection_patterns;
};

struct RoiSection {
  std::string provider = "local";  // "local" or "remote"
  int grid = 16;
  std::string url;                 // remote provider endpoint
  double timeout_seconds = 60.0;
  RoiSettings settings;
};

struct FusionSection {
  DetectMode mode = DetectMode::Both;
  FusionConfig fusion;
};

struct HarnessSection {
  int concurrency = 4;
  std::optional<std::filesystem::path> checkpoint_dir;
  ReportFormat report = ReportFormat::Table;
  bool include_p0 = true;
};

/// Everything the command line can configure. Layers apply in order: defaults,
/// config file, FAKESCOPE_* environment variables, flags.
struct CliConfig {
  BackendSection backend;
  std::map<std::string, BackendSection> named_backends;  // selectable with --backend NAME
  StrategySection strategy;
  RoiSection roi;
  FusionSection fusion;
  HarnessSection harness;
};

/// Parses a config document. Relative paths resolve against base_dir. Unknown
/// keys and bad values throw Config naming the key.
CliConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
CliConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Applies FAKESCOPE_BACKEND, FAKESCOPE_SCRIPT, FAKESCOPE_ENDPOINT,
/// FAKESCOPE_MODEL, FAKESCOPE_MODE, FAKESCOPE_WORDING, FAKESCOPE_CONCURRENCY,
/// FAKESCOPE_CHECKPOINT and FAKESCOPE_REPORT.
void apply_env(CliConfig& config, const EnvLookup& env);

/// Switches the active backend: "openai", "scripted", or a named backend.
void select_backend(CliConfig& config, const std::string& name);

/// Objects built from a config that strategy runs borrow.
struct Runtime {
  PromptCatalog prompts;
  RejectionPatterns rejections;
  StrategyConfig strategy;
  std::unique_ptr<Backend> backend;
  std::unique_ptr<SaliencyProvider> saliency;

  StrategyContext context() const { return {*backend, strategy, prompts, rejections}; }
};

/// Builds prompts, exemplars, backend and saliency provider. Credentials are
/// not read here; the live backend reads its key variable per request.
Runtime make_runtime(const CliConfig& config);

std::unique_ptr<Backend> make_backend(const BackendSection& section);

}  // namespace fakescope
