#include "fakescope/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fakescope/http_backend.hpp"
#include "fakescope/serialization.hpp"

namespace fakescope {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& message) {
  throw Error(ErrorCode::Config, where + ": " + message);
}

// Typed access to one JSON object that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_, "expected an object");
  }

  // Rejects keys that were never looked at.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) config_error(where_, "unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      config_error(where_ + "." + key, "wrong type");
    }
  }

  void read_path(const std::string& key, std::optional<fs::path>& out, const fs::path& base) {
    std::string text;
    read(key, text);
    if (!text.empty()) out = resolve(text, base);
  }

  const json& child(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return where_ + "." + key; }

  static fs::path resolve(const std::string& text, const fs::path& base) {
    const fs::path p(text);
    return p.is_absolute() ? p : (base / p).lexically_normal();
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

template <typename Fn>
auto parse_enum(const std::string& where, const std::string& text, Fn&& fn) {
  try {
    return fn(text);
  } catch (const Error& e) {
    config_error(where, e.what());
  }
}

BackendSection parse_backend(const json& j, const std::string& where, const fs::path& base,
                             BackendSection out) {
  Section s(j, where);
  s.read("kind", out.kind);
  if (out.kind != "openai" && out.kind != "scripted") {
    config_error(where + ".kind", "must be \"openai\" or \"scripted\"");
  }
  BackendConfig& c = out.openai;
  s.read("endpoint_url", c.endpoint_url);
  s.read("model", c.model_name);
  s.read("api_key_env", c.api_key_env_var);
  s.read("max_output_tokens", c.max_output_tokens);
  s.read("temperature", c.temperature);
  s.read("timeout_seconds", c.request_timeout_seconds);
  s.read("max_retries", c.max_retries);
  s.read("max_image_dimension", c.max_image_dimension);
  s.read("max_concurrent_requests", c.max_concurrent_requests);
  s.read("backoff_initial_seconds", c.backoff_initial_seconds);
  s.read("backoff_max_seconds", c.backoff_max_seconds);
  s.read_path("script", out.script, base);
  s.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    config_error(where, e.what());
  }
  return out;
}

ExemplarSource parse_exemplar(const json& j, const std::string& where, const fs::path& base) {
  Section s(j, where);
  std::optional<fs::path> image;
  s.read_path("image", image, base);
  if (!image) config_error(where, "missing 'image'");
  ExemplarSource out{*image, {}};
  s.read("annotation", out.annotation);
  std::optional<fs::path> annotation_file;
  s.read_path("annotation_file", annotation_file, base);
  if (annotation_file) {
    std::ifstream in(*annotation_file, std::ios::binary);
    if (!in) config_error(where + ".annotation_file", "cannot read " + annotation_file->string());
    std::ostringstream buf;
    buf << in.rdbuf();
    out.annotation = buf.str();
  }
  s.finish();
  if (out.annotation.empty()) config_error(where, "needs 'annotation' or 'annotation_file'");
  return out;
}

}  // namespace

CliConfig parse_config(const json& doc, const fs::path& base) {
  CliConfig config;
  Section root(doc, "config");

  if (root.has("backend")) {
    config.backend = parse_backend(root.child("backend"), "backend", base, config.backend);
  }
  if (root.has("backends")) {
    const json& named = root.child("backends");
    if (!named.is_object()) config_error("backends", "expected an object");
    for (const auto& [name, value] : named.items()) {
      config.named_backends[name] = parse_backend(value, "backends." + name, base, {});
    }
  }

  if (root.has("strategy")) {
    Section s(root.child("strategy"), "strategy");
    StrategySection& st = config.strategy;
    std::string wording;
    s.read("wording", wording);
    if (!wording.empty()) st.wording = parse_enum(s.where("wording"), wording, wording_from_string);
    s.read("system_prompt", st.system_prompt);
    s.read("use_cached_assistant", st.use_cached_assistant);
    if (s.has("fewshot_real")) {
      st.fewshot_real = parse_exemplar(s.child("fewshot_real"), s.where("fewshot_real"), base);
    }
    if (s.has("fewshot_fake")) {
      st.fewshot_fake = parse_exemplar(s.child("fewshot_fake"), s.where("fewshot_fake"), base);
    }
    s.read("roi_crops", st.roi_crops);
    if (st.roi_crops < 1) config_error(s.where("roi_crops"), "must be >= 1");
    s.read("parallel", st.parallel);
    s.read_path("prompt_dir", st.prompt_dir, base);
    s.read_path("rejection_patterns", st.rejection_patterns, base);
    s.finish();
  }

  if (root.has("roi")) {
    Section s(root.child("roi"), "roi");
    RoiSection& roi = config.roi;
    s.read("provider", roi.provider);
    if (roi.provider != "local" && roi.provider != "remote") {
      config_error("roi.provider", "must be \"local\" or \"remote\"");
    }
    s.read("grid", roi.grid);
    s.read("url", roi.url);
    s.read("timeout_seconds", roi.timeout_seconds);
    s.read("threshold", roi.settings.threshold);
    s.read("k", roi.settings.k);
    if (roi.grid < 1) config_error("roi.grid", "must be >= 1");
    if (!(roi.settings.threshold >= 0.0 && roi.settings.threshold <= 1.0)) {
      config_error("roi.threshold", "must be in [0, 1]");
    }
    if (roi.settings.k < 1) config_error("roi.k", "must be >= 1");
    if (roi.provider == "remote" && roi.url.empty()) config_error("roi.url", "required for remote");
    s.finish();
  }

  if (root.has("fusion")) {
    Section s(root.child("fusion"), "fusion");
    std::string mode;
    s.read("mode", mode);
    if (!mode.empty()) {
      config.fusion.mode = parse_enum("fusion.mode", mode, detect_mode_from_string);
    }
    std::string tie_break = "p0";
    s.read("tie_break", tie_break);
    if (tie_break != "p0") config_error("fusion.tie_break", "only \"p0\" is supported");
    s.read("summary_budget_chars", config.fusion.fusion.summary_budget_chars);
    s.read("summarize_concurrently", config.fusion.fusion.summarize_concurrently);
    s.finish();
  }

  if (root.has("harness")) {
    Section s(root.child("harness"), "harness");
    HarnessSection& h = config.harness;
    s.read("concurrency", h.concurrency);
    if (h.concurrency < 1) config_error("harness.concurrency", "must be >= 1");
    s.read_path("checkpoint_dir", h.checkpoint_dir, base);
    std::string report;
    s.read("report", report);
    if (!report.empty()) h.report = parse_enum("harness.report", report, report_format_from_string);
    s.read("include_p0", h.include_p0);
    s.finish();
  }
  root.finish();
  return config;
}

CliConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Config, "cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* value = std::getenv(name.c_str());
    if (!value || !*value) return std::nullopt;
    return std::string(value);
  };
}

void select_backend(CliConfig& config, const std::string& name) {
  if (auto it = config.named_backends.find(name); it != config.named_backends.end()) {
    config.backend = it->second;
  } else if (name == "openai" || name == "scripted") {
    config.backend.kind = name;
  } else {
    throw Error(ErrorCode::Config, "unknown backend '" + name + "'");
  }
}

void apply_env(CliConfig& config, const EnvLookup& env) {
  if (auto v = env("FAKESCOPE_BACKEND")) select_backend(config, *v);
  if (auto v = env("FAKESCOPE_SCRIPT")) {
    config.backend.script = *v;
    config.backend.kind = "scripted";
  }
  if (auto v = env("FAKESCOPE_ENDPOINT")) config.backend.openai.endpoint_url = *v;
  if (auto v = env("FAKESCOPE_MODEL")) config.backend.openai.model_name = *v;
  try {
    if (auto v = env("FAKESCOPE_MODE")) config.fusion.mode = detect_mode_from_string(*v);
    if (auto v = env("FAKESCOPE_WORDING")) config.strategy.wording = wording_from_string(*v);
    if (auto v = env("FAKESCOPE_REPORT")) config.harness.report = report_format_from_string(*v);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, std::string("environment: ") + e.what());
  }
  if (auto v = env("FAKESCOPE_CONCURRENCY")) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(*v, &used);
      if (used != v->size() || n < 1) throw std::invalid_argument("range");
      config.harness.concurrency = n;
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "FAKESCOPE_CONCURRENCY must be a positive integer");
    }
  }
  if (auto v = env("FAKESCOPE_CHECKPOINT")) config.harness.checkpoint_dir = *v;
}

std::unique_ptr<Backend> make_backend(const BackendSection& section) {
  if (section.kind == "scripted") {
    if (!section.script) throw Error(ErrorCode::Config, "scripted backend needs a script file");
    return load_script(*section.script);
  }
  section.openai.validate();
  return std::make_unique<ChatCompletionsBackend>(section.openai);
}

namespace {

Exemplar load_exemplar(const ExemplarSource& source, Label label) {
  ImageRecord record;
  record.id = "exemplar-" + source.image.stem().string();
  record.source = source.image;
  record.truth = label;
  return {std::move(record), source.annotation};
}

}  // namespace

Runtime make_runtime(const CliConfig& config) {
  const StrategySection& st = config.strategy;
  PromptCatalog prompts =
      st.prompt_dir ? PromptCatalog::with_overrides(*st.prompt_dir) : PromptCatalog::bundled();
  RejectionPatterns rejections = st.rejection_patterns
                                     ? RejectionPatterns::from_file(*st.rejection_patterns)
                                     : default_rejection_patterns();
  StrategyConfig strategy;
  strategy.wording = st.wording;
  strategy.system_prompt = st.system_prompt;
  strategy.use_cached_assistant = st.use_cached_assistant;
  strategy.roi_crops = std::min(st.roi_crops, config.roi.settings.k);
  strategy.fewshot_real =
      st.fewshot_real ? load_exemplar(*st.fewshot_real, Label::Real) : bundled_real_exemplar();
  strategy.fewshot_fake = st.fewshot_fake ? load_exemplar(*st.fewshot_fake, Label::Generated)
                                          : bundled_fake_exemplar();
  strategy.validate();

  std::unique_ptr<SaliencyProvider> saliency;
  if (config.roi.provider == "remote") {
    saliency = std::make_unique<RemoteSaliencyProvider>(config.roi.url, config.roi.timeout_seconds);
  } else {
    saliency = std::make_unique<LocalContrastProvider>(config.roi.grid);
  }
  return Runtime{std::move(prompts), std::move(rejections), std::move(strategy),
                 make_backend(config.backend), std::move(saliency)};
}

}  // namespace fakescope
