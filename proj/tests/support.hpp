#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fakescope/backend.hpp"
#include "fakescope/core.hpp"
#include "fakescope/harness.hpp"

namespace fakescope::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Synthetic PNG: smooth gradient plus a few textured blobs placed by seed.
void write_png(const fs::path& path, int width, int height, unsigned seed);

/// In-memory PNG bytes of the same kind.
ImageBytes png_bytes(int width, int height, unsigned seed);

enum class Reply { Real, Generated, Refuse, Gibberish };

/// A model-style reply that parses to the given outcome.
std::string verdict_reply(Reply reply, const std::string& lead = "");

/// Per-image overrides for a full detection (P0, P1..P6, identification, fusion).
struct ImagePlan {
  std::string id;
  Reply p0 = Reply::Real;
  std::array<Reply, 6> ensemble{Reply::Generated, Reply::Generated, Reply::Generated,
                                Reply::Generated, Reply::Generated, Reply::Generated};
  Reply fusion = Reply::Generated;
  std::string subject = "a red bus";
};

/// Wildcard replies for every query kind and step used by a detection.
std::vector<ScriptEntry> wildcard_entries();

/// Exact-image entries realizing a plan.
std::vector<ScriptEntry> plan_entries(const ImagePlan& plan);

/// Script JSON for load_script.
std::string script_json(const std::vector<ScriptEntry>& entries, double default_latency_ms = 0.0,
                        int max_concurrent = 8);

/// Writes `n` images and a labeled manifest (alternating real/generated,
/// mixed generator tags) into dir; returns the manifest path.
fs::path write_fixture_manifest(const fs::path& dir, int n, const std::string& name = "fixture");

/// Vote plans for a fixture manifest: a deterministic mix of unanimous,
/// split, tied and refused images keyed by the fixture ids.
std::vector<ImagePlan> fixture_plans(int n);

/// Plan entries for fixture_plans(n) followed by the wildcard fallbacks.
std::vector<ScriptEntry> fixture_entries(int n);

/// Runs fn and returns the code of the Error it throws; fails the test otherwise.
ErrorCode error_code_of(const std::function<void()>& fn);

/// Strategy config with the bundled exemplars.
StrategyConfig test_strategy_config(WordingVariant wording = WordingVariant::Generated);

}  // namespace fakescope::testing
