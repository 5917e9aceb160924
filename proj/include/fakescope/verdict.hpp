#pragma once

#include <filesystem>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "fakescope/core.hpp"

namespace fakescope {

/// Case-insensitive refusal phrases, one ECMAScript regex per line ('#' starts a
/// comment line).
class RejectionPatterns {
 public:
  static RejectionPatterns from_text(std::string_view text);
  static RejectionPatterns from_file(const std::filesystem::path& path);

  bool matches(std::string_view text) const;
  std::size_t size() const { return patterns_.size(); }

 private:
  std::vector<std::regex> patterns_;
};

/// The bundled pattern list (data/rejection_patterns.txt).
const RejectionPatterns& default_rejection_patterns();

/// Parses a model reply into a Verdict. Total; never throws.
///
/// Order: (1) the terminal word after stripping trailing whitespace, punctuation,
/// quotes and markdown emphasis; (2) refusal patterns; (3) the last occurrence of
/// a verdict word anywhere; (4) Unparsable. "real" decides Real; "fake" and
/// "generated" both decide Generated whatever the wording, so replies that echo
/// the other variant still parse. Words inside an alternative such as
/// "real or fake" or "real/generated" never decide.
Verdict parse_verdict(std::string_view text, WordingVariant wording,
                      const RejectionPatterns& rejections = default_rejection_patterns());

}  // namespace fakescope
