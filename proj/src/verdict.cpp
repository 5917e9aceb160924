#include "fakescope/verdict.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>

#include "fakescope/resources.hpp"

namespace fakescope {

RejectionPatterns RejectionPatterns::from_text(std::string_view text) {
  RejectionPatterns out;
  std::istringstream lines{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.patterns_.emplace_back(line.substr(first),
                                 std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::Config,
                  "rejection pattern line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

RejectionPatterns RejectionPatterns::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

bool RejectionPatterns::matches(std::string_view text) const {
  for (const auto& re : patterns_) {
    if (std::regex_search(text.begin(), text.end(), re)) return true;
  }
  return false;
}

const RejectionPatterns& default_rejection_patterns() {
  static const RejectionPatterns patterns =
      RejectionPatterns::from_text(embedded_resource("rejection_patterns.txt").value_or(""));
  return patterns;
}

namespace {

bool is_ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

constexpr std::array<std::string_view, 9> kTrailingUtf8 = {
    "“", "”", "‘", "’", "…", "—", "–", "«", "»"};

std::string_view strip_trailing(std::string_view s) {
  for (;;) {
    if (s.empty()) return s;
    const unsigned char c = static_cast<unsigned char>(s.back());
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      s.remove_suffix(1);
      continue;
    }
    bool stripped = false;
    for (auto seq : kTrailingUtf8) {
      if (s.ends_with(seq)) {
        s.remove_suffix(seq.size());
        stripped = true;
        break;
      }
    }
    if (!stripped) return s;
  }
}

struct Token {
  std::size_t begin;
  std::size_t end;
  std::string word;  // lowercase
};

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_ascii_alpha(s[i])) {
      ++i;
      continue;
    }
    Token t{i, i, {}};
    while (i < s.size() && is_ascii_alpha(s[i])) {
      t.word += static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
      ++i;
    }
    t.end = i;
    tokens.push_back(std::move(t));
  }
  return tokens;
}

std::optional<Label> verdict_label(std::string_view word) {
  if (word == "real") return Label::Real;
  if (word == "fake" || word == "generated") return Label::Generated;
  return std::nullopt;
}

std::string_view gap_between(std::string_view s, const Token& a, const Token& b) {
  std::string_view gap = s.substr(a.end, b.begin - a.end);
  auto junk = [](char c) { return c == ' ' || c == '"' || c == '\'' || c == '*' || c == '_'; };
  while (!gap.empty() && junk(gap.front())) gap.remove_prefix(1);
  while (!gap.empty() && junk(gap.back())) gap.remove_suffix(1);
  return gap;
}

// Index of the first token of a verdict word's compound ("AI-generated" starts at "ai").
std::size_t compound_start(std::string_view s, const std::vector<Token>& t, std::size_t i) {
  if (i > 0 && t[i - 1].word == "ai" && gap_between(s, t[i - 1], t[i]) == "-") return i - 1;
  return i;
}

// Index of the verdict word at or after j, skipping an "ai-" prefix.
std::optional<std::size_t> verdict_at(std::string_view s, const std::vector<Token>& t,
                                      std::size_t j) {
  if (j >= t.size()) return std::nullopt;
  if (t[j].word == "ai" && j + 1 < t.size() && gap_between(s, t[j], t[j + 1]) == "-") ++j;
  if (verdict_label(t[j].word)) return j;
  return std::nullopt;
}

// True when the verdict word at i is one side of "X or Y" / "X/Y".
bool in_alternative(std::string_view s, const std::vector<Token>& t, std::size_t i) {
  const std::size_t start = compound_start(s, t, i);
  if (start > 0) {
    const std::size_t p = start - 1;
    if (t[p].word == "or" && p > 0 && verdict_label(t[p - 1].word)) return true;
    if (verdict_label(t[p].word) && gap_between(s, t[p], t[start]) == "/") return true;
  }
  if (i + 1 < t.size()) {
    const std::size_t n = i + 1;
    if (t[n].word == "or" && verdict_at(s, t, n + 1)) return true;
    if (gap_between(s, t[i], t[n]) == "/" && verdict_at(s, t, n)) return true;
  }
  return false;
}

}  // namespace

Verdict parse_verdict(std::string_view text, WordingVariant /*wording*/,
                      const RejectionPatterns& rejections) {
  const std::string_view stripped = strip_trailing(text);
  const std::vector<Token> tokens = tokenize(stripped);

  if (!tokens.empty() && tokens.back().end == stripped.size()) {
    const std::size_t last = tokens.size() - 1;
    if (auto label = verdict_label(tokens[last].word);
        label && !in_alternative(stripped, tokens, last)) {
      return Verdict::decided(*label, tokens[last].word);
    }
  }
  if (rejections.matches(text)) return Verdict::rejected();
  for (std::size_t i = tokens.size(); i-- > 0;) {
    if (auto label = verdict_label(tokens[i].word); label && !in_alternative(stripped, tokens, i)) {
      return Verdict::decided(*label, tokens[i].word);
    }
  }
  return Verdict::unparsable();
}

}  // namespace fakescope
