#pragma once

#include <nlohmann/json.hpp>

#include "fakescope/core.hpp"

// JSON schema for persisted values. Field names are part of the transcript and
// run-artifact formats; see README "File formats".
namespace fakescope {

using json = nlohmann::json;

void to_json(json& j, const Verdict& v);
void from_json(const json& j, Verdict& v);

void to_json(json& j, const Rect& r);
void from_json(const json& j, Rect& r);

void to_json(json& j, const ImageRef& r);
void from_json(const json& j, ImageRef& r);

void to_json(json& j, const QueryTurn& t);
void from_json(const json& j, QueryTurn& t);

void to_json(json& j, const Session& s);
void from_json(const json& j, Session& s);

void to_json(json& j, const ImageRecord& r);
void from_json(const json& j, ImageRecord& r);

void to_json(json& j, const PromptOutcome& o);
void from_json(const json& j, PromptOutcome& o);

/// One compact JSON document on a single line (no trailing newline).
std::string to_json_line(const json& j);

/// Parses JSON, mapping library exceptions to ErrorCode::Parse.
json parse_json(std::string_view text, std::string_view where = {});

}  // namespace fakescope
