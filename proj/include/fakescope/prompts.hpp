#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "fakescope/core.hpp"

namespace fakescope {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

/// Replaces every {name} with vars[name]; unknown placeholders are left as-is.
/// When the template puts an article right before a placeholder ("a {class}")
/// and the value already starts with one ("a red bus", "an apple"), the
/// template's article is dropped so the result reads "a red bus".
std::string render_template(std::string_view tmpl, const TemplateVars& vars);

/// Prompt templates and canned texts, keyed by data path without extension,
/// e.g. "prompts/p0_verdict" or "canned/p1_defects".
class PromptCatalog {
 public:
  /// The templates compiled into the library.
  static PromptCatalog bundled();

  /// Bundled templates overlaid with any *.txt files found under dir using the
  /// same layout (dir/prompts/..., dir/canned/...).
  static PromptCatalog with_overrides(const std::filesystem::path& dir);

  /// Throws Config when missing.
  const std::string& get(std::string_view key) const;
  std::string render(std::string_view key, const TemplateVars& vars) const;

  /// The P0 verdict prompt for a wording variant.
  std::string verdict_prompt(WordingVariant wording) const;

  const std::string& version() const { return version_; }
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::string version_;
};

}  // namespace fakescope
