#include "fakescope/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fakescope/resources.hpp"

namespace fakescope {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool starts_with_article(std::string_view value) {
  const std::string head = lower(value.substr(0, 4));
  return head.starts_with("a ") || head.starts_with("an ") || head.starts_with("the ");
}

// Length of a trailing " a " / " an " article (including its trailing space)
// at the end of out, or 0.
std::size_t trailing_article(const std::string& out) {
  for (std::string_view article : {"a ", "an "}) {
    if (out.size() < article.size()) continue;
    const std::size_t start = out.size() - article.size();
    if (lower(std::string_view(out).substr(start)) != article) continue;
    if (start == 0 || !std::isalpha(static_cast<unsigned char>(out[start - 1]))) {
      return article.size();
    }
  }
  return 0;
}

std::string strip_one_trailing_newline(std::string s) {
  if (s.ends_with("\r\n")) {
    s.resize(s.size() - 2);
  } else if (s.ends_with('\n')) {
    s.pop_back();
  }
  return s;
}

}  // namespace

std::string render_template(std::string_view tmpl, const TemplateVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto name = tmpl.substr(i + 1, close - i - 1);
        const auto it = vars.find(name);
        if (it != vars.end()) {
          if (starts_with_article(it->second)) out.resize(out.size() - trailing_article(out));
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

PromptCatalog PromptCatalog::bundled() {
  PromptCatalog catalog;
  for (const auto& name : embedded_resource_names()) {
    if (!name.ends_with(".txt")) continue;
    if (!name.starts_with("prompts/") && !name.starts_with("canned/")) continue;
    catalog.entries_[name.substr(0, name.size() - 4)] =
        strip_one_trailing_newline(std::string(*embedded_resource(name)));
  }
  catalog.version_ = strip_one_trailing_newline(
      std::string(embedded_resource("prompts/VERSION").value_or("unversioned")));
  return catalog;
}

PromptCatalog PromptCatalog::with_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::Config, "prompt directory '" + dir.string() + "' does not exist");
  }
  PromptCatalog catalog = bundled();
  bool overridden = false;
  for (const char* sub : {"prompts", "canned"}) {
    const auto subdir = dir / sub;
    if (!std::filesystem::is_directory(subdir)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(subdir)) {
      if (entry.path().extension() != ".txt") continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      catalog.entries_[std::string(sub) + "/" + entry.path().stem().string()] =
          strip_one_trailing_newline(buf.str());
      overridden = true;
    }
  }
  if (overridden) catalog.version_ += "+local";
  return catalog;
}

const std::string& PromptCatalog::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw Error(ErrorCode::Config, "prompt catalog has no entry '" + std::string(key) + "'");
  }
  return it->second;
}

std::string PromptCatalog::render(std::string_view key, const TemplateVars& vars) const {
  return render_template(get(key), vars);
}

std::string PromptCatalog::verdict_prompt(WordingVariant wording) const {
  return render("prompts/p0_verdict", {{"verdict", std::string(verdict_word(wording))}});
}

}  // namespace fakescope
