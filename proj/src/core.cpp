#include "fakescope/core.hpp"

#include <array>
#include <utility>

namespace fakescope {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidRole: return "InvalidRole";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::Network: return "NetworkError";
    case ErrorCode::Auth: return "AuthError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::ScriptMiss: return "ScriptMiss";
    case ErrorCode::Decode: return "DecodeError";
    case ErrorCode::CropOutOfBounds: return "CropOutOfBounds";
    case ErrorCode::MissingExemplars: return "MissingExemplars";
    case ErrorCode::EmptySubject: return "EmptySubject";
    case ErrorCode::WrongArity: return "WrongArity";
    case ErrorCode::AllStrategiesFailed: return "AllStrategiesFailed";
    case ErrorCode::RemoteProvider: return "RemoteProviderError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::MissingTruth: return "MissingTruth";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
  }
  return "Error";
}

std::string_view to_string(Label label) {
  return label == Label::Real ? "real" : "generated";
}

Label label_from_string(std::string_view text) {
  if (text == "real") return Label::Real;
  if (text == "generated" || text == "fake") return Label::Generated;
  throw Error(ErrorCode::Parse, "unknown label '" + std::string(text) + "'");
}

std::string_view to_string(WordingVariant wording) {
  return wording == WordingVariant::Fake ? "fake" : "generated";
}

WordingVariant wording_from_string(std::string_view text) {
  if (text == "fake") return WordingVariant::Fake;
  if (text == "generated") return WordingVariant::Generated;
  throw Error(ErrorCode::Parse, "unknown wording '" + std::string(text) + "'");
}

std::string_view verdict_word(WordingVariant wording) { return to_string(wording); }

namespace {
constexpr std::array<std::pair<StrategyId, std::string_view>, 8> kStrategyNames = {{
    {StrategyId::P0, "P0"},
    {StrategyId::P1, "P1"},
    {StrategyId::P2, "P2"},
    {StrategyId::P3, "P3"},
    {StrategyId::P4, "P4"},
    {StrategyId::P5, "P5"},
    {StrategyId::P6, "P6"},
    {StrategyId::Fusion, "Fusion"},
}};
}  // namespace

std::string_view to_string(StrategyId id) {
  for (const auto& [key, name] : kStrategyNames) {
    if (key == id) return name;
  }
  return "?";
}

StrategyId strategy_from_string(std::string_view text) {
  for (const auto& [key, name] : kStrategyNames) {
    if (name == text) return key;
  }
  throw Error(ErrorCode::Parse, "unknown strategy '" + std::string(text) + "'");
}

std::size_t ensemble_index(StrategyId id) {
  switch (id) {
    case StrategyId::P1: return 0;
    case StrategyId::P2: return 1;
    case StrategyId::P3: return 2;
    case StrategyId::P4: return 3;
    case StrategyId::P5: return 4;
    case StrategyId::P6: return 5;
    default: break;
  }
  throw Error(ErrorCode::WrongArity, std::string(to_string(id)) + " is not an ensemble strategy");
}

std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::Decided: return "decided";
    case VerdictKind::Rejected: return "rejected";
    case VerdictKind::Unparsable: return "unparsable";
  }
  return "unparsable";
}

Verdict Verdict::decided(Label label, std::string token) {
  return {VerdictKind::Decided, label, std::move(token)};
}

std::string Verdict::display() const {
  if (is_decided()) return std::string(to_string(*label));
  return std::string(to_string(kind));
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  if (text == "system") return Role::System;
  if (text == "user") return Role::User;
  if (text == "assistant") return Role::Assistant;
  throw Error(ErrorCode::Parse, "unknown role '" + std::string(text) + "'");
}

QueryTurn QueryTurn::system(std::string text) {
  return {Role::System, std::move(text), {}, false, std::nullopt};
}

QueryTurn QueryTurn::user(std::string text, std::vector<ImageRef> images) {
  return {Role::User, std::move(text), std::move(images), false, std::nullopt};
}

QueryTurn QueryTurn::assistant(std::string text, bool predefined,
                               std::optional<double> latency_seconds) {
  return {Role::Assistant, std::move(text), {}, predefined, latency_seconds};
}

void Session::check_append(const std::vector<QueryTurn>& turns, const QueryTurn& turn) {
  if (turn.role != Role::User && !turn.images.empty()) {
    throw Error(ErrorCode::InvalidRole, std::string(to_string(turn.role)) +
                                            " turns cannot carry images");
  }
  if (turn.role != Role::Assistant && turn.text.empty()) {
    throw Error(ErrorCode::InvalidRole,
                std::string(to_string(turn.role)) + " turn text must be non-empty");
  }
  if (turn.role == Role::System) {
    if (!turns.empty()) {
      throw Error(ErrorCode::InvalidRole, "system turn only allowed at index 0");
    }
    return;
  }
  // After the optional system turn, the expected role flips with each turn.
  Role expected = Role::User;
  if (!turns.empty() && turns.back().role == Role::User) expected = Role::Assistant;
  if (turn.role != expected) {
    throw Error(ErrorCode::InvalidRole, "expected " + std::string(to_string(expected)) +
                                            " turn at index " + std::to_string(turns.size()) +
                                            ", got " + std::string(to_string(turn.role)));
  }
}

Session Session::from_turns(std::vector<QueryTurn> turns) {
  Session session;
  session.turns_.reserve(turns.size());
  for (auto& turn : turns) {
    check_append(session.turns_, turn);
    session.turns_.push_back(std::move(turn));
  }
  return session;
}

Session Session::append(QueryTurn turn) const& {
  Session copy = *this;
  return std::move(copy).append(std::move(turn));
}

Session Session::append(QueryTurn turn) && {
  check_append(turns_, turn);
  turns_.push_back(std::move(turn));
  return std::move(*this);
}

std::string Session::last_assistant_text() const {
  for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
    if (it->role == Role::Assistant) return it->text;
  }
  return {};
}

std::size_t Session::live_assistant_count() const {
  std::size_t n = 0;
  for (const auto& t : turns_) n += t.is_live_assistant() ? 1 : 0;
  return n;
}

std::size_t Session::assistant_count() const {
  std::size_t n = 0;
  for (const auto& t : turns_) n += t.role == Role::Assistant ? 1 : 0;
  return n;
}

Session append_turn(Session session, QueryTurn turn) {
  return std::move(session).append(std::move(turn));
}

Session context_of(const Session& session, std::size_t i) {
  if (i > session.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "context index " + std::to_string(i) +
                                                " exceeds session length " +
                                                std::to_string(session.size()));
  }
  return Session::from_turns({session.turns().begin(), session.turns().begin() + i});
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Diffusion: return "diffusion";
    case Family::GAN: return "gan";
    case Family::Other: return "other";
    case Family::RealSource: return "real";
  }
  return "other";
}

Family family_from_string(std::string_view text) {
  if (text == "diffusion") return Family::Diffusion;
  if (text == "gan") return Family::GAN;
  if (text == "other") return Family::Other;
  if (text == "real") return Family::RealSource;
  throw Error(ErrorCode::Parse, "unknown family '" + std::string(text) + "'");
}

PromptOutcome make_outcome(StrategyId strategy, std::string image_id, Verdict verdict,
                           std::vector<Session> transcript) {
  PromptOutcome out;
  out.strategy = strategy;
  out.image_id = std::move(image_id);
  out.verdict = std::move(verdict);
  if (!transcript.empty()) out.rationale = transcript.back().last_assistant_text();
  for (const auto& session : transcript) {
    for (const auto& turn : session.turns()) {
      if (!turn.is_live_assistant()) continue;
      ++out.query_count;
      out.latency_seconds += turn.latency_seconds.value_or(0.0);
    }
  }
  out.transcript = std::move(transcript);
  return out;
}

PromptOutcome failed_outcome(StrategyId strategy, std::string image_id, std::string error) {
  PromptOutcome out;
  out.strategy = strategy;
  out.image_id = std::move(image_id);
  out.verdict = Verdict::unparsable();
  out.error = std::move(error);
  return out;
}

}  // namespace fakescope
