#include "support.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fakescope::testing {

TempDir::TempDir() {
  std::random_device rd;
  std::mt19937_64 rng(rd());
  for (int attempt = 0; attempt < 100; ++attempt) {
    fs::path candidate = fs::temp_directory_path() / ("fakescope-test-" + std::to_string(rng()));
    if (fs::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

namespace {

cv::Mat synthetic(int width, int height, unsigned seed) {
  cv::Mat img(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(static_cast<uchar>(x * 255 / std::max(1, width - 1)),
                                          static_cast<uchar>(y * 255 / std::max(1, height - 1)),
                                          static_cast<uchar>((seed * 37) % 256));
    }
  }
  cv::RNG rng(seed + 1);
  for (int i = 0; i < 3; ++i) {
    const int cx = rng.uniform(0, width);
    const int cy = rng.uniform(0, height);
    const int r = rng.uniform(3, std::max(4, std::min(width, height) / 6));
    cv::Mat noise(height, width, CV_8UC3);
    rng.fill(noise, cv::RNG::UNIFORM, 0, 255);
    cv::Mat mask = cv::Mat::zeros(height, width, CV_8U);
    cv::circle(mask, {cx, cy}, r, cv::Scalar(255), cv::FILLED);
    noise.copyTo(img, mask);
  }
  return img;
}

}  // namespace

void write_png(const fs::path& path, int width, int height, unsigned seed) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), synthetic(width, height, seed))) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

ImageBytes png_bytes(int width, int height, unsigned seed) {
  std::vector<uchar> buf;
  cv::imencode(".png", synthetic(width, height, seed), buf);
  return ImageBytes(buf.begin(), buf.end());
}

std::string verdict_reply(Reply reply, const std::string& lead) {
  const std::string prefix = lead.empty() ? "" : lead + " ";
  switch (reply) {
    case Reply::Real:
      return prefix + "Lighting, shadows and texture are physically consistent. real";
    case Reply::Generated:
      return prefix + "The hands have too many fingers and the text is garbled. generated";
    case Reply::Refuse:
      return "I'm sorry, but I can't help with that request.";
    case Reply::Gibberish:
      return "Interesting composition with vivid colors.";
  }
  return "";
}

namespace {

ScriptEntry entry(std::string image, std::string kind, int step, std::string reply) {
  ScriptEntry e;
  e.image = std::move(image);
  e.kind = std::move(kind);
  e.step = step;
  e.reply = std::move(reply);
  return e;
}

}  // namespace

std::vector<ScriptEntry> wildcard_entries() {
  std::vector<ScriptEntry> e;
  e.push_back(entry("*", "P0", 1, verdict_reply(Reply::Real)));
  e.push_back(entry("*", "P1", 1, verdict_reply(Reply::Generated, "P1:")));
  e.push_back(entry("*", "P1", 2, "Typical defects: hands, text, lighting."));
  e.push_back(entry("*", "P1", 3, verdict_reply(Reply::Generated, "P1:")));
  e.push_back(entry("*", "P2", 1, "The image shows a street with a bus."));
  e.push_back(entry("*", "P2", 2, verdict_reply(Reply::Generated, "P2:")));
  e.push_back(entry("*", "P3", 1, verdict_reply(Reply::Generated, "P3:")));
  e.push_back(entry("*", "P4", 1, verdict_reply(Reply::Generated, "P4:")));
  e.push_back(entry("*", "Identify", 1, "a red bus"));
  e.push_back(entry("*", "P5", 1, "Components: wheels, windows, doors, mirrors."));
  e.push_back(entry("*", "P5", 2, verdict_reply(Reply::Generated, "P5:")));
  e.push_back(entry("*", "P6", 1, "Stereotypes: overly glossy paint, perfect symmetry."));
  e.push_back(entry("*", "P6", 2, verdict_reply(Reply::Generated, "P6:")));
  for (int step = 1; step <= 6; ++step) {
    e.push_back(entry("*", "Summarize", step, "1. Key point one.\n2. Key point two."));
  }
  e.push_back(entry("*", "Fusion", 1, verdict_reply(Reply::Generated, "Fusion:")));
  return e;
}

std::vector<ScriptEntry> plan_entries(const ImagePlan& plan) {
  static const char* kVerdictKind[6] = {"P1", "P2", "P3", "P4", "P5", "P6"};
  static const int kVerdictStep[6] = {1, 2, 1, 1, 2, 2};
  std::vector<ScriptEntry> e;
  e.push_back(entry(plan.id, "P0", 1, verdict_reply(plan.p0, "P0:")));
  for (int i = 0; i < 6; ++i) {
    const std::string lead = std::string(kVerdictKind[i]) + " on " + plan.id + ":";
    e.push_back(entry(plan.id, kVerdictKind[i], kVerdictStep[i], verdict_reply(plan.ensemble[i], lead)));
  }
  e.push_back(entry(plan.id, "Identify", 1, plan.subject));
  e.push_back(entry(plan.id, "Fusion", 1, verdict_reply(plan.fusion, "Fusion on " + plan.id + ":")));
  return e;
}

std::string script_json(const std::vector<ScriptEntry>& entries, double default_latency_ms,
                        int max_concurrent) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json j{{"image", e.image}, {"kind", e.kind}, {"step", e.step}};
    if (e.contains) j["contains"] = *e.contains;
    if (!e.reply.empty()) j["reply"] = e.reply;
    if (e.error) {
      j["error"] = *e.error == ErrorCode::Auth      ? "auth"
                   : *e.error == ErrorCode::Network ? "network"
                                                    : "malformed";
    }
    if (e.latency_seconds) j["latency_ms"] = *e.latency_seconds * 1e3;
    items.push_back(j);
  }
  return nlohmann::json{{"default_latency_ms", default_latency_ms},
                        {"max_concurrent", max_concurrent},
                        {"entries", items}}
      .dump(2);
}

fs::path write_fixture_manifest(const fs::path& dir, int n, const std::string& name) {
  static const char* kGenerators[] = {"stable-diffusion", "midjourney", "stylegan", "dall-e"};
  static const char* kFamilies[] = {"diffusion", "diffusion", "gan", "other"};
  std::string text;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img-%02d", i);
    const std::string file = std::string("images/") + id + ".png";
    write_png(dir / file, 48 + 8 * (i % 3), 40 + 4 * (i % 4), static_cast<unsigned>(i));
    nlohmann::json j{{"id", id}, {"path", file}};
    if (i % 2 == 0) {
      j["label"] = "real";
      j["family"] = "real";
    } else {
      j["label"] = "generated";
      j["generator"] = kGenerators[(i / 2) % 4];
      j["family"] = kFamilies[(i / 2) % 4];
    }
    text += j.dump() + "\n";
  }
  const fs::path path = dir / (name + ".jsonl");
  write_text(path, text);
  return path;
}

std::vector<ImagePlan> fixture_plans(int n) {
  std::vector<ImagePlan> plans;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "img-%02d", i);
    const Reply truth = i % 2 == 0 ? Reply::Real : Reply::Generated;
    const Reply wrong = i % 2 == 0 ? Reply::Generated : Reply::Real;
    ImagePlan p;
    p.id = id;
    p.p0 = (i % 3 == 0) ? wrong : truth;
    switch (i % 5) {
      case 0: p.ensemble = {truth, truth, truth, truth, truth, truth}; break;
      case 1: p.ensemble = {truth, wrong, truth, truth, wrong, truth}; break;
      case 2: p.ensemble = {truth, wrong, truth, wrong, truth, wrong}; break;
      case 3: p.ensemble = {Reply::Refuse, truth, Reply::Gibberish, truth, wrong, truth}; break;
      default: p.ensemble = {wrong, wrong, truth, wrong, truth, wrong}; break;
    }
    p.fusion = (i % 7 == 3) ? wrong : (i % 11 == 5 ? Reply::Refuse : truth);
    p.subject = i % 4 == 0 ? "a red bus" : (i % 4 == 1 ? "an apple" : "a portrait of a woman");
    plans.push_back(p);
  }
  return plans;
}

std::vector<ScriptEntry> fixture_entries(int n) {
  std::vector<ScriptEntry> entries;
  for (const auto& plan : fixture_plans(n)) {
    auto e = plan_entries(plan);
    entries.insert(entries.end(), e.begin(), e.end());
  }
  auto wild = wildcard_entries();
  entries.insert(entries.end(), wild.begin(), wild.end());
  return entries;
}

ErrorCode error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an Error");
}

StrategyConfig test_strategy_config(WordingVariant wording) {
  StrategyConfig c;
  c.wording = wording;
  c.fewshot_real = bundled_real_exemplar();
  c.fewshot_fake = bundled_fake_exemplar();
  return c;
}

}  // namespace fakescope::testing
