#include "fakescope/backend.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "fakescope/serialization.hpp"

namespace fakescope {

void BackendConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
  if (endpoint_url.empty()) fail("endpoint_url must be set");
  if (model_name.empty()) fail("model_name must be set");
  if (max_output_tokens < 1) fail("max_output_tokens must be positive");
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (!(request_timeout_seconds > 0.0)) fail("request_timeout_seconds must be positive");
  if (max_retries < 0) fail("max_retries must be >= 0");
  if (max_image_dimension < 64) fail("max_image_dimension must be >= 64");
  if (max_concurrent_requests < 1 || max_concurrent_requests > 1024) {
    fail("max_concurrent_requests must be in [1, 1024]");
  }
  if (!(backoff_initial_seconds >= 0.0) || !(backoff_max_seconds >= backoff_initial_seconds)) {
    fail("backoff bounds must satisfy 0 <= initial <= max");
  }
}

Backend::Backend(int max_concurrent) : slots_(std::clamp(max_concurrent, 1, 1024)) {}

Backend::~Backend() = default;

Completion Backend::complete(const Session& session, const QueryTag& tag,
                             const ImageCatalog& images) {
  if (session.empty() || session.back().role != Role::User) {
    throw Error(ErrorCode::Precondition, "session must end with a user turn");
  }
  for (const auto& turn : session.turns()) {
    for (const auto& ref : turn.images) {
      if (!images.contains(ref.image_id)) {
        throw Error(ErrorCode::Precondition, "unresolvable image '" + ref.image_id + "'");
      }
    }
  }
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  Completion c = do_complete(session, tag, images);
  if (c.text.empty()) throw Error(ErrorCode::MalformedResponse, "empty assistant text");
  ++calls_;
  return c;
}

namespace {

auto entry_key(const ScriptEntry& e) {
  return std::make_tuple(e.image, e.kind, e.step, e.contains.value_or(std::string{}),
                         e.contains.has_value());
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries, double default_latency_seconds,
                                 int max_concurrent)
    : Backend(max_concurrent),
      entries_(std::move(entries)),
      default_latency_seconds_(default_latency_seconds) {
  std::set<decltype(entry_key(entries_.front()))> seen;
  for (const auto& e : entries_) {
    if (e.kind.empty()) throw Error(ErrorCode::Config, "script entry without kind");
    if (!seen.insert(entry_key(e)).second) {
      throw Error(ErrorCode::Config, "ambiguous script key (" + e.image + ", " + e.kind + ", " +
                                         std::to_string(e.step) + ")");
    }
  }
}

Completion ScriptedBackend::do_complete(const Session& session, const QueryTag& tag,
                                        const ImageCatalog&) {
  const std::string& user_text = session.back().text;
  // Tiers: exact image + contains, exact image, wildcard + contains, wildcard.
  const ScriptEntry* best = nullptr;
  int best_rank = 4;
  for (const auto& e : entries_) {
    if (e.kind != tag.kind || e.step != tag.step) continue;
    const bool exact = e.image == tag.image_id;
    if (!exact && e.image != "*") continue;
    if (e.contains && user_text.find(*e.contains) == std::string::npos) continue;
    const int rank = (exact ? 0 : 2) + (e.contains ? 0 : 1);
    if (rank < best_rank) {
      best = &e;
      best_rank = rank;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::ScriptMiss, "no scripted reply for (" + tag.image_id + ", " + tag.kind +
                                           ", " + std::to_string(tag.step) + ")");
  }
  const double latency = best->latency_seconds.value_or(default_latency_seconds_);
  if (latency > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(latency));
  if (best->error) throw Error(*best->error, "scripted failure for " + tag.kind);
  Completion c;
  c.text = best->reply;
  c.stats.latency_seconds = latency;
  return c;
}

std::unique_ptr<ScriptedBackend> scripted_backend(std::vector<ScriptEntry> entries,
                                                  double default_latency_seconds,
                                                  int max_concurrent) {
  return std::make_unique<ScriptedBackend>(std::move(entries), default_latency_seconds,
                                           max_concurrent);
}

namespace {

ErrorCode script_error_from_string(const std::string& s) {
  if (s == "network") return ErrorCode::Network;
  if (s == "auth") return ErrorCode::Auth;
  if (s == "malformed") return ErrorCode::MalformedResponse;
  throw Error(ErrorCode::Config, "unknown scripted error '" + s + "'");
}

}  // namespace

std::unique_ptr<ScriptedBackend> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read script '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const json doc = parse_json(buf.str(), path.string());
  static const std::set<std::string> kTop = {"default_latency_ms", "max_concurrent", "entries"};
  static const std::set<std::string> kEntry = {"image", "kind", "step", "contains",
                                               "reply", "error", "latency_ms"};
  for (const auto& [key, _] : doc.items()) {
    if (!kTop.contains(key)) throw Error(ErrorCode::Config, "unknown script key '" + key + "'");
  }
  std::vector<ScriptEntry> entries;
  try {
    for (const auto& item : doc.at("entries")) {
      for (const auto& [key, _] : item.items()) {
        if (!kEntry.contains(key)) {
          throw Error(ErrorCode::Config, "unknown script entry key '" + key + "'");
        }
      }
      ScriptEntry e;
      e.image = item.value("image", std::string("*"));
      e.kind = item.at("kind").get<std::string>();
      e.step = item.value("step", 1);
      if (item.contains("contains")) e.contains = item.at("contains").get<std::string>();
      e.reply = item.value("reply", std::string{});
      if (item.contains("error")) e.error = script_error_from_string(item.at("error"));
      if (item.contains("latency_ms")) e.latency_seconds = item.at("latency_ms").get<double>() / 1e3;
      if (!e.error && e.reply.empty()) {
        throw Error(ErrorCode::Config, "script entry for " + e.kind + " has empty reply");
      }
      entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return scripted_backend(std::move(entries), doc.value("default_latency_ms", 0.0) / 1e3,
                          doc.value("max_concurrent", 8));
}

}  // namespace fakescope
