#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "fakescope/core.hpp"

namespace fakescope {

struct BackendConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-4o-2024-08-06";
  std::string api_key_env_var = "OPENAI_API_KEY";
  int max_output_tokens = 1024;
  double temperature = 0.0;
  double request_timeout_seconds = 120.0;
  int max_retries = 3;
  int max_image_dimension = 1024;
  int max_concurrent_requests = 8;
  double backoff_initial_seconds = 1.0;
  double backoff_max_seconds = 30.0;

  /// Throws Config when an invariant is violated.
  void validate() const;
};

struct CompletionStats {
  double latency_seconds = 0.0;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

struct Completion {
  std::string text;
  CompletionStats stats;
};

/// Routing key for one live query: which image, which query kind ("P0".."P6",
/// "Fusion", "Identify", "Summarize") and the 1-based ordinal of the live query
/// within that kind's run.
struct QueryTag {
  std::string image_id;
  std::string kind;
  int step = 1;
};

/// Images a session may reference, by id.
using ImageCatalog = std::map<std::string, ImageRecord, std::less<>>;

/// A multimodal chat model: o = M(t, v, c).
///
/// complete() checks the call contract, then forwards to do_complete() while
/// holding one of max_concurrent slots. Implementations must be safe to call
/// from many threads.
class Backend {
 public:
  explicit Backend(int max_concurrent = 8);
  virtual ~Backend();

  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  /// Returns the next Assistant text for a session ending in a User turn. The
  /// session is not modified; the caller appends the Assistant turn.
  Completion complete(const Session& session, const QueryTag& tag, const ImageCatalog& images);

  /// Number of completed complete() calls.
  long calls() const { return calls_.load(); }

 protected:
  virtual Completion do_complete(const Session& session, const QueryTag& tag,
                                 const ImageCatalog& images) = 0;

 private:
  std::counting_semaphore<1024> slots_;
  std::atomic<long> calls_{0};
};

/// One scripted reply. image "*" matches any image; contains (when set) must be
/// a substring of the final User turn's text.
struct ScriptEntry {
  std::string image = "*";
  std::string kind;
  int step = 1;
  std::optional<std::string> contains;
  std::string reply;
  std::optional<ErrorCode> error;  // throw instead of replying
  std::optional<double> latency_seconds;
};

/// Deterministic test double: a pure function of (script, tag, final user text).
///
/// Lookup prefers an exact image id over "*", and within each, an entry with a
/// matching `contains` over one without; ties go to declaration order.
class ScriptedBackend : public Backend {
 public:
  /// Throws Config when two entries share the same key.
  explicit ScriptedBackend(std::vector<ScriptEntry> entries, double default_latency_seconds = 0.0,
                           int max_concurrent = 8);

  const std::vector<ScriptEntry>& entries() const { return entries_; }

 protected:
  Completion do_complete(const Session& session, const QueryTag& tag,
                         const ImageCatalog& images) override;

 private:
  std::vector<ScriptEntry> entries_;
  double default_latency_seconds_;
};

std::unique_ptr<ScriptedBackend> scripted_backend(std::vector<ScriptEntry> entries,
                                                  double default_latency_seconds = 0.0,
                                                  int max_concurrent = 8);

/// Loads a script file: {"default_latency_ms": N, "max_concurrent": N,
/// "entries": [{"image", "kind", "step", "contains", "reply", "error", "latency_ms"}]}.
std::unique_ptr<ScriptedBackend> load_script(const std::filesystem::path& path);

}  // namespace fakescope
