#include "fakescope/serialization.hpp"

#include "fakescope/base64.hpp"

namespace fakescope {

void to_json(json& j, const Verdict& v) {
  j = json::object();
  j["kind"] = to_string(v.kind);
  if (v.label) j["label"] = to_string(*v.label);
  if (!v.terminal_token.empty()) j["terminal_token"] = v.terminal_token;
}

void from_json(const json& j, Verdict& v) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "decided") {
    v = Verdict::decided(label_from_string(j.at("label").get<std::string>()),
                         j.value("terminal_token", std::string{}));
  } else if (kind == "rejected") {
    v = Verdict::rejected();
  } else if (kind == "unparsable") {
    v = Verdict::unparsable();
  } else {
    throw Error(ErrorCode::Parse, "unknown verdict kind '" + kind + "'");
  }
}

void to_json(json& j, const Rect& r) { j = json::array({r.x0, r.y0, r.x1, r.y1}); }

void from_json(const json& j, Rect& r) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::Parse, "rect must be [x0,y0,x1,y1]");
  r = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

void to_json(json& j, const ImageRef& r) {
  j = json{{"id", r.image_id}};
  if (r.crop) j["crop"] = *r.crop;
}

void from_json(const json& j, ImageRef& r) {
  r.image_id = j.at("id").get<std::string>();
  r.crop.reset();
  if (j.contains("crop")) r.crop = j.at("crop").get<Rect>();
}

void to_json(json& j, const QueryTurn& t) {
  j = json{{"role", to_string(t.role)}, {"text", t.text}};
  if (!t.images.empty()) j["images"] = t.images;
  if (t.predefined) j["predefined"] = true;
  if (t.latency_seconds) j["latency_seconds"] = *t.latency_seconds;
}

void from_json(const json& j, QueryTurn& t) {
  t.role = role_from_string(j.at("role").get<std::string>());
  t.text = j.at("text").get<std::string>();
  t.images = j.value("images", std::vector<ImageRef>{});
  t.predefined = j.value("predefined", false);
  t.latency_seconds.reset();
  if (j.contains("latency_seconds")) t.latency_seconds = j.at("latency_seconds").get<double>();
}

void to_json(json& j, const Session& s) { j = json{{"turns", s.turns()}}; }

void from_json(const json& j, Session& s) {
  s = Session::from_turns(j.at("turns").get<std::vector<QueryTurn>>());
}

void to_json(json& j, const ImageRecord& r) {
  j = json{{"id", r.id}};
  if (const auto* path = std::get_if<std::filesystem::path>(&r.source)) {
    j["path"] = path->generic_string();
  } else {
    j["bytes_base64"] = base64_encode(std::get<ImageBytes>(r.source));
  }
  if (r.truth) j["label"] = to_string(*r.truth);
  if (r.generator) j["generator"] = *r.generator;
  if (r.family) j["family"] = to_string(*r.family);
}

void from_json(const json& j, ImageRecord& r) {
  r.id = j.at("id").get<std::string>();
  if (j.contains("path")) {
    r.source = std::filesystem::path(j.at("path").get<std::string>());
  } else if (j.contains("bytes_base64")) {
    r.source = base64_decode(j.at("bytes_base64").get<std::string>());
  } else {
    throw Error(ErrorCode::Parse, "image record '" + r.id + "' has neither path nor bytes");
  }
  r.truth.reset();
  r.generator.reset();
  r.family.reset();
  if (j.contains("label") && !j.at("label").is_null()) {
    r.truth = label_from_string(j.at("label").get<std::string>());
  }
  if (j.contains("generator") && !j.at("generator").is_null()) {
    r.generator = j.at("generator").get<std::string>();
  }
  if (j.contains("family") && !j.at("family").is_null()) {
    r.family = family_from_string(j.at("family").get<std::string>());
  }
}

void to_json(json& j, const PromptOutcome& o) {
  j = json{{"strategy", to_string(o.strategy)},
           {"image_id", o.image_id},
           {"verdict", o.verdict},
           {"rationale", o.rationale},
           {"transcript", o.transcript},
           {"latency_seconds", o.latency_seconds},
           {"query_count", o.query_count}};
  if (o.error) j["error"] = *o.error;
  if (!o.flags.empty()) j["flags"] = o.flags;
}

void from_json(const json& j, PromptOutcome& o) {
  o.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  o.image_id = j.at("image_id").get<std::string>();
  o.verdict = j.at("verdict").get<Verdict>();
  o.rationale = j.at("rationale").get<std::string>();
  o.transcript = j.at("transcript").get<std::vector<Session>>();
  o.latency_seconds = j.at("latency_seconds").get<double>();
  o.query_count = j.at("query_count").get<int>();
  o.error.reset();
  if (j.contains("error")) o.error = j.at("error").get<std::string>();
  o.flags = j.value("flags", std::vector<std::string>{});
}

std::string to_json_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

json parse_json(std::string_view text, std::string_view where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (!where.empty()) msg = std::string(where) + ": " + msg;
    throw Error(ErrorCode::Parse, msg);
  }
}

}  // namespace fakescope
