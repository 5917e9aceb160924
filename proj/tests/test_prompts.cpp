#include <doctest.h>

#include "fakescope/prompts.hpp"
#include "support.hpp"

using namespace fakescope;
using fakescope::testing::error_code_of;

TEST_CASE("render_template substitutes known placeholders and keeps unknown ones") {
  CHECK(render_template("is it real or {verdict}?", {{"verdict", "fake"}}) == "is it real or fake?");
  CHECK(render_template("{a}{b}{a}", {{"a", "1"}, {"b", "2"}}) == "121");
  CHECK(render_template("keep {missing} and {", {}) == "keep {missing} and {");
  CHECK(render_template("", {{"x", "y"}}).empty());
}

TEST_CASE("render_template drops a duplicated article before a subject") {
  const TemplateVars bus{{"class", "a red bus"}};
  const TemplateVars apple{{"class", "an apple"}};
  const TemplateVars bare{{"class", "daisies"}};
  CHECK(render_template("This image shows a {class}.", bus) == "This image shows a red bus.");
  CHECK(render_template("This image shows a {class}.", apple) == "This image shows an apple.");
  CHECK(render_template("This image shows an {class}.", bus) == "This image shows a red bus.");
  CHECK(render_template("This image shows a {class}.", bare) == "This image shows a daisies.");
  CHECK(render_template("If an image shows {class}, ok", bus) == "If an image shows a red bus, ok");
  // "a" must be a standalone word to count as an article.
  CHECK(render_template("Visa {class}", bus) == "Visa a red bus");
}

TEST_CASE("bundled catalog has every template the strategies use") {
  const PromptCatalog catalog = PromptCatalog::bundled();
  for (const char* key :
       {"prompts/system", "prompts/p0_verdict", "prompts/p1_defects_query",
        "prompts/p1_real_features_query", "prompts/p1_final", "prompts/p2_roi_intro",
        "prompts/p2_roi_verdict", "prompts/p3_common_sense", "prompts/identify_subject",
        "prompts/p5_components", "prompts/p5_verify", "prompts/p6_stereotypes",
        "prompts/p6_analysis", "prompts/summarize", "prompts/fusion", "canned/p1_defects",
        "canned/p1_real_features"}) {
    INFO(key);
    CHECK_FALSE(catalog.get(key).empty());
  }
  CHECK_FALSE(catalog.version().empty());
  CHECK(error_code_of([&] { catalog.get("prompts/nope"); }) == ErrorCode::Config);
}

TEST_CASE("verdict prompt wordings differ only in the verdict word") {
  const PromptCatalog catalog = PromptCatalog::bundled();
  const std::string fake = catalog.verdict_prompt(WordingVariant::Fake);
  const std::string generated = catalog.verdict_prompt(WordingVariant::Generated);
  CHECK(fake != generated);
  std::string replaced = fake;
  for (std::size_t pos = 0; (pos = replaced.find("fake", pos)) != std::string::npos;) {
    replaced.replace(pos, 4, "generated");
    pos += 9;
  }
  CHECK(replaced == generated);
  CHECK(fake.find("{verdict}") == std::string::npos);
  CHECK(generated.ends_with("\"generated\"."));
}

TEST_CASE("prompt overrides replace single entries and mark the version") {
  fakescope::testing::TempDir dir;
  fakescope::testing::write_text(dir / "prompts/p0_verdict.txt", "Real or {verdict}?\n");
  const PromptCatalog bundled = PromptCatalog::bundled();
  const PromptCatalog local = PromptCatalog::with_overrides(dir.path());
  CHECK(local.get("prompts/p0_verdict") == "Real or {verdict}?");
  CHECK(local.verdict_prompt(WordingVariant::Fake) == "Real or fake?");
  CHECK(local.get("prompts/system") == bundled.get("prompts/system"));
  CHECK(local.version() == bundled.version() + "+local");
  CHECK(error_code_of([&] { PromptCatalog::with_overrides(dir / "absent"); }) == ErrorCode::Config);
}
