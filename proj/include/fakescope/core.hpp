#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fakescope/error.hpp"

namespace fakescope {

enum class Label { Real, Generated };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

/// Lexical choice for the verdict word in verdict prompts.
enum class WordingVariant { Fake, Generated };

std::string_view to_string(WordingVariant wording);
WordingVariant wording_from_string(std::string_view text);

/// The verdict word a prompt asks for: "fake" or "generated".
std::string_view verdict_word(WordingVariant wording);

enum class StrategyId { P0, P1, P2, P3, P4, P5, P6, Fusion };

std::string_view to_string(StrategyId id);
StrategyId strategy_from_string(std::string_view text);

/// P1..P6 in order.
inline constexpr StrategyId kEnsemble[] = {StrategyId::P1, StrategyId::P2, StrategyId::P3,
                                           StrategyId::P4, StrategyId::P5, StrategyId::P6};

/// Zero-based position of P1..P6 within kEnsemble.
std::size_t ensemble_index(StrategyId id);

enum class VerdictKind { Decided, Rejected, Unparsable };

std::string_view to_string(VerdictKind kind);

struct Verdict {
  VerdictKind kind = VerdictKind::Unparsable;
  std::optional<Label> label;  // set iff kind == Decided
  std::string terminal_token;  // "real", "fake" or "generated" when Decided

  static Verdict decided(Label label, std::string token);
  static Verdict rejected() { return {VerdictKind::Rejected, std::nullopt, {}}; }
  static Verdict unparsable() { return {}; }

  bool is_decided() const { return kind == VerdictKind::Decided; }

  /// "real", "generated", "rejected" or "unparsable".
  std::string display() const;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return width() <= 0 || height() <= 0; }
  bool within(int image_width, int image_height) const {
    return x0 >= 0 && y0 >= 0 && x1 <= image_width && y1 <= image_height && !empty();
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// A reference to an ImageRecord by id, optionally cropped, so transcripts never
/// duplicate image payloads.
struct ImageRef {
  std::string image_id;
  std::optional<Rect> crop;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct QueryTurn {
  Role role = Role::User;
  std::string text;
  std::vector<ImageRef> images;
  // Assistant turns injected from canned or annotated text instead of a live query.
  bool predefined = false;
  // Metadata only; excluded from equality.
  std::optional<double> latency_seconds;

  static QueryTurn system(std::string text);
  static QueryTurn user(std::string text, std::vector<ImageRef> images = {});
  static QueryTurn assistant(std::string text, bool predefined = false,
                             std::optional<double> latency_seconds = std::nullopt);

  bool is_live_assistant() const { return role == Role::Assistant && !predefined; }

  friend bool operator==(const QueryTurn& a, const QueryTurn& b) {
    return a.role == b.role && a.text == b.text && a.images == b.images &&
           a.predefined == b.predefined;
  }
};

/// Append-only conversation. Turn i's context is the prefix turns[0..i).
///
/// Invariants: at most one System turn and only at index 0; after it, roles
/// alternate User, Assistant, User, ...; System and Assistant turns carry no
/// images; System and User text is non-empty.
class Session {
 public:
  Session() = default;

  /// Builds a session from turns, validating every append. Throws InvalidRole.
  static Session from_turns(std::vector<QueryTurn> turns);

  const std::vector<QueryTurn>& turns() const { return turns_; }
  std::size_t size() const { return turns_.size(); }
  bool empty() const { return turns_.empty(); }
  const QueryTurn& back() const { return turns_.back(); }

  /// Returns this session with one more turn. Throws InvalidRole when the turn
  /// would break system placement or role alternation.
  Session append(QueryTurn turn) const&;
  Session append(QueryTurn turn) &&;

  /// Text of the final Assistant turn, empty when there is none.
  std::string last_assistant_text() const;
  std::size_t live_assistant_count() const;
  std::size_t assistant_count() const;

  friend bool operator==(const Session&, const Session&) = default;

 private:
  static void check_append(const std::vector<QueryTurn>& turns, const QueryTurn& turn);

  std::vector<QueryTurn> turns_;
};

Session append_turn(Session session, QueryTurn turn);

/// Prefix turns[0..i). Throws IndexOutOfRange when i > size.
Session context_of(const Session& session, std::size_t i);

enum class Family { Diffusion, GAN, Other, RealSource };

std::string_view to_string(Family family);
Family family_from_string(std::string_view text);

using ImageBytes = std::vector<std::uint8_t>;

struct ImageRecord {
  std::string id;
  std::variant<std::filesystem::path, ImageBytes> source;
  std::optional<Label> truth;
  std::optional<std::string> generator;
  std::optional<Family> family;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// One strategy's verdict, rationale, transcript and cost.
///
/// query_count counts live (non-predefined) Assistant turns over the
/// transcript; rationale is the final Assistant text of the last session.
struct PromptOutcome {
  StrategyId strategy = StrategyId::P0;
  std::string image_id;
  Verdict verdict;
  std::string rationale;
  std::vector<Session> transcript;
  double latency_seconds = 0.0;
  int query_count = 0;
  std::optional<std::string> error;
  std::vector<std::string> flags;

  bool failed() const { return error.has_value(); }

  friend bool operator==(const PromptOutcome&, const PromptOutcome&) = default;
};

/// Builds an outcome from finished sessions, deriving rationale, query_count and
/// latency from the transcript.
PromptOutcome make_outcome(StrategyId strategy, std::string image_id, Verdict verdict,
                           std::vector<Session> transcript);

/// Outcome standing in for a strategy that threw.
PromptOutcome failed_outcome(StrategyId strategy, std::string image_id, std::string error);

}  // namespace fakescope
