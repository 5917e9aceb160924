#include "fakescope/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

#include "fakescope/resources.hpp"

namespace fakescope {

namespace {

Exemplar bundled_exemplar(const std::string& stem, Label label) {
  const auto png = embedded_resource("exemplars/" + stem + ".png");
  const auto text = embedded_resource("exemplars/" + stem + ".txt");
  if (!png || !text) throw Error(ErrorCode::Config, "bundled exemplar '" + stem + "' missing");
  ImageRecord record;
  record.id = "exemplar-" + stem;
  record.source = ImageBytes(png->begin(), png->end());
  record.truth = label;
  return {std::move(record), std::string(*text)};
}

ImageRef ref(const ImageRecord& image) { return {image.id, std::nullopt}; }

// Sends `text` (with images) as the next User turn and appends the reply.
Session ask(Session session, std::string text, std::vector<ImageRef> images, const QueryTag& tag,
            const StrategyContext& ctx, const ImageCatalog& catalog) {
  session = std::move(session).append(QueryTurn::user(std::move(text), std::move(images)));
  Completion reply = ctx.backend.complete(session, tag, catalog);
  return std::move(session).append(
      QueryTurn::assistant(std::move(reply.text), false, reply.stats.latency_seconds));
}

Session start_verdict_session(const StrategyContext& ctx) {
  return Session{}.append(QueryTurn::system(ctx.system_prompt()));
}

ImageCatalog catalog_of(const ImageRecord& image) { return {{image.id, image}}; }

PromptOutcome finish(StrategyId id, const ImageRecord& image, const StrategyContext& ctx,
                     std::vector<Session> transcript) {
  const Verdict verdict = ctx.parse(transcript.back().last_assistant_text());
  return make_outcome(id, image.id, verdict, std::move(transcript));
}


}  // namespace

Exemplar bundled_real_exemplar() { return bundled_exemplar("real", Label::Real); }
Exemplar bundled_fake_exemplar() { return bundled_exemplar("fake", Label::Generated); }

void StrategyConfig::validate() const {
  for (const auto* ex : {&fewshot_real, &fewshot_fake}) {
    if (*ex && (*ex)->annotation.empty()) {
      throw Error(ErrorCode::Config, "few-shot exemplar '" + (*ex)->image.id + "' has no annotation");
    }
  }
  if (fewshot_real && fewshot_fake && fewshot_real->image.id == fewshot_fake->image.id) {
    throw Error(ErrorCode::Config, "few-shot exemplars must have distinct ids");
  }
  if (roi_crops < 1) throw Error(ErrorCode::Config, "roi_crops must be >= 1");
}

std::string StrategyContext::system_prompt() const {
  return config.system_prompt.empty() ? prompts.get("prompts/system") : config.system_prompt;
}

std::string trim_subject_reply(std::string_view reply) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    const std::size_t nl = std::min(reply.find('\n', pos), reply.size());
    std::string_view line = reply.substr(pos, nl - pos);
    pos = nl + 1;
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
    // List markers: "- ", "* ", "1. ", "1) ".
    if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && line[1] == ' ') {
      line.remove_prefix(2);
    } else {
      std::size_t digits = 0;
      while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
        ++digits;
      }
      if (digits > 0 && digits + 1 < line.size() && (line[digits] == '.' || line[digits] == ')') &&
          line[digits + 1] == ' ') {
        line.remove_prefix(digits + 2);
      }
    }
    auto wrapper = [](char c) { return c == '"' || c == '\'' || c == '*' || c == '`' || c == '_'; };
    while (!line.empty() && wrapper(line.front())) line.remove_prefix(1);
    while (!line.empty() && (wrapper(line.back()) || line.back() == '.')) line.remove_suffix(1);
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    while (!line.empty() && is_space(line.back())) line.remove_suffix(1);
    if (!line.empty()) return std::string(line);
  }
  return {};
}

std::optional<SubjectRecord> SubjectCache::lookup(const std::string& image_id) const {
  std::shared_future<SubjectRecord> future;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(image_id);
    if (it == entries_.end()) return std::nullopt;
    future = it->second;
  }
  if (future.wait_for(std::chrono::seconds(0)) != std::future_status::ready) return std::nullopt;
  try {
    return future.get();
  } catch (...) {
    return std::nullopt;
  }
}

PromptOutcome run_p0(const ImageRecord& image, const StrategyContext& ctx) {
  Session s = ask(start_verdict_session(ctx), ctx.verdict_prompt(), {ref(image)},
                  {image.id, "P0", 1}, ctx, catalog_of(image));
  return finish(StrategyId::P0, image, ctx, {std::move(s)});
}

PromptOutcome run_p1(const ImageRecord& image, const StrategyContext& ctx) {
  const ImageCatalog catalog = catalog_of(image);
  const std::string final_prompt =
      ctx.prompts.render("prompts/p1_final", {{"verdict_prompt", ctx.verdict_prompt()}});
  Session s = start_verdict_session(ctx);
  int step = 1;
  if (ctx.config.use_cached_assistant) {
    s = std::move(s)
            .append(QueryTurn::user(ctx.prompts.get("prompts/p1_defects_query")))
            .append(QueryTurn::assistant(ctx.prompts.get("canned/p1_defects"), true))
            .append(QueryTurn::user(ctx.prompts.get("prompts/p1_real_features_query")))
            .append(QueryTurn::assistant(ctx.prompts.get("canned/p1_real_features"), true));
  } else {
    s = ask(std::move(s), ctx.prompts.get("prompts/p1_defects_query"), {}, {image.id, "P1", step++},
            ctx, catalog);
    s = ask(std::move(s), ctx.prompts.get("prompts/p1_real_features_query"), {},
            {image.id, "P1", step++}, ctx, catalog);
  }
  s = ask(std::move(s), final_prompt, {ref(image)}, {image.id, "P1", step}, ctx, catalog);
  return finish(StrategyId::P1, image, ctx, {std::move(s)});
}

PromptOutcome run_p2(const ImageRecord& image, const StrategyContext& ctx,
                     SaliencyProvider& saliency, const RoiSettings& roi) {
  const ImageCatalog catalog = catalog_of(image);
  std::vector<std::string> flags;
  std::vector<ImageRef> crops;
  try {
    const Heatmap heatmap = compute_saliency(image, saliency);
    const auto boxes = heatmap_to_boxes(heatmap, roi.threshold);
    if (boxes.empty()) flags.emplace_back("roi_fallback");
    const auto regions =
        top_k_regions(boxes, roi.k, {heatmap.source_width, heatmap.source_height});
    const std::size_t send = std::min<std::size_t>(regions.size(), ctx.config.roi_crops);
    for (std::size_t i = 0; i < send; ++i) crops.push_back({image.id, regions[i]});
  } catch (const Error& e) {
    flags.emplace_back("roi_fallback");
    flags.push_back(std::string("roi_error: ") + e.what());
    crops = {ref(image)};
  }

  Session s = ask(start_verdict_session(ctx), ctx.prompts.get("prompts/p2_roi_intro"),
                  {ref(image)}, {image.id, "P2", 1}, ctx, catalog);
  const std::string verdict_prompt = ctx.prompts.render(
      "prompts/p2_roi_verdict", {{"verdict", std::string(verdict_word(ctx.config.wording))}});
  s = ask(std::move(s), verdict_prompt, std::move(crops), {image.id, "P2", 2}, ctx, catalog);
  PromptOutcome out = finish(StrategyId::P2, image, ctx, {std::move(s)});
  out.flags = std::move(flags);
  return out;
}

PromptOutcome run_p3(const ImageRecord& image, const StrategyContext& ctx) {
  const std::string prompt =
      ctx.prompts.get("prompts/p3_common_sense") + "\n\n" + ctx.verdict_prompt();
  Session s = ask(start_verdict_session(ctx), prompt, {ref(image)}, {image.id, "P3", 1}, ctx,
                  catalog_of(image));
  return finish(StrategyId::P3, image, ctx, {std::move(s)});
}

PromptOutcome run_p4(const ImageRecord& image, const StrategyContext& ctx) {
  const auto& real = ctx.config.fewshot_real;
  const auto& fake = ctx.config.fewshot_fake;
  if (!real || !fake) {
    throw Error(ErrorCode::MissingExemplars,
                std::string("P4 needs both exemplars; missing ") + (!real ? "real" : "fake"));
  }
  if (real->image.id == image.id || fake->image.id == image.id) {
    throw Error(ErrorCode::Config, "exemplar id collides with target image '" + image.id + "'");
  }
  ImageCatalog catalog = catalog_of(image);
  catalog.emplace(real->image.id, real->image);
  catalog.emplace(fake->image.id, fake->image);
  const std::string prompt = ctx.verdict_prompt();
  Session s = start_verdict_session(ctx)
                  .append(QueryTurn::user(prompt, {ref(real->image)}))
                  .append(QueryTurn::assistant(real->annotation, true))
                  .append(QueryTurn::user(prompt, {ref(fake->image)}))
                  .append(QueryTurn::assistant(fake->annotation, true));
  s = ask(std::move(s), prompt, {ref(image)}, {image.id, "P4", 1}, ctx, catalog);
  return finish(StrategyId::P4, image, ctx, {std::move(s)});
}

PromptOutcome run_p4_zero_shot(const ImageRecord& image, const StrategyContext& ctx) {
  Session s = ask(start_verdict_session(ctx), ctx.verdict_prompt(), {ref(image)},
                  {image.id, "P4", 1}, ctx, catalog_of(image));
  PromptOutcome out = finish(StrategyId::P4, image, ctx, {std::move(s)});
  out.flags.emplace_back("zero_shot");
  return out;
}

SubjectClass identify_subject(const ImageRecord& image, const StrategyContext& ctx,
                              SubjectCache& cache) {
  return cache
      .get_or_compute(image.id,
                      [&] {
                        Session s = ask(Session{}, ctx.prompts.get("prompts/identify_subject"),
                                        {ref(image)}, {image.id, "Identify", 1}, ctx,
                                        catalog_of(image));
                        SubjectRecord record;
                        record.subject.phrase = trim_subject_reply(s.last_assistant_text());
                        if (record.subject.phrase.empty()) {
                          throw Error(ErrorCode::EmptySubject,
                                      "blank subject reply for '" + image.id + "'");
                        }
                        record.latency_seconds = s.back().latency_seconds.value_or(0.0);
                        record.transcript = std::move(s);
                        return record;
                      })
      .subject;
}

PromptOutcome run_p5(const ImageRecord& image, const SubjectClass& subject,
                     const StrategyContext& ctx) {
  const ImageCatalog catalog = catalog_of(image);
  Session s = ask(start_verdict_session(ctx),
                  ctx.prompts.render("prompts/p5_components", {{"class", subject.phrase}}),
                  {ref(image)}, {image.id, "P5", 1}, ctx, catalog);
  s = ask(std::move(s),
          ctx.prompts.render("prompts/p5_verify", {{"verdict_prompt", ctx.verdict_prompt()}}), {},
          {image.id, "P5", 2}, ctx, catalog);
  return finish(StrategyId::P5, image, ctx, {std::move(s)});
}

PromptOutcome run_p6(const ImageRecord& image, const SubjectClass& subject,
                     const StrategyContext& ctx) {
  const ImageCatalog catalog = catalog_of(image);
  Session stereotypes =
      ask(Session{}, ctx.prompts.render("prompts/p6_stereotypes", {{"class", subject.phrase}}), {},
          {image.id, "P6", 1}, ctx, catalog);
  const std::string analysis = ctx.prompts.render(
      "prompts/p6_analysis", {{"class", subject.phrase},
                              {"stereotypes", stereotypes.last_assistant_text()},
                              {"verdict_prompt", ctx.verdict_prompt()}});
  Session verdict = ask(start_verdict_session(ctx), analysis, {ref(image)}, {image.id, "P6", 2},
                        ctx, catalog);
  return finish(StrategyId::P6, image, ctx, {std::move(stereotypes), std::move(verdict)});
}

namespace {

PromptOutcome guarded(StrategyId id, const std::string& image_id,
                      const std::function<PromptOutcome()>& run) {
  try {
    return run();
  } catch (const std::exception& e) {
    return failed_outcome(id, image_id, e.what());
  }
}

}  // namespace

std::vector<PromptOutcome> run_all(const ImageRecord& image, const StrategyContext& ctx,
                                   SaliencyProvider& saliency, const RoiSettings& roi,
                                   bool parallel, SubjectCache& subjects) {
  using Task = std::function<PromptOutcome()>;
  const Task independent[4] = {
      [&] { return run_p1(image, ctx); },
      [&] { return run_p2(image, ctx, saliency, roi); },
      [&] { return run_p3(image, ctx); },
      [&] { return run_p4(image, ctx); },
  };
  auto content_based = [&](StrategyId id) -> Task {
    return [&, id] {
      const SubjectClass subject = identify_subject(image, ctx, subjects);
      return id == StrategyId::P5 ? run_p5(image, subject, ctx) : run_p6(image, subject, ctx);
    };
  };

  std::vector<PromptOutcome> outcomes;
  outcomes.reserve(6);
  if (!parallel) {
    for (int i = 0; i < 4; ++i) outcomes.push_back(guarded(kEnsemble[i], image.id, independent[i]));
    outcomes.push_back(guarded(StrategyId::P5, image.id, content_based(StrategyId::P5)));
    outcomes.push_back(guarded(StrategyId::P6, image.id, content_based(StrategyId::P6)));
    return outcomes;
  }

  std::vector<std::future<PromptOutcome>> futures;
  for (int i = 0; i < 4; ++i) {
    futures.push_back(std::async(std::launch::async, guarded, kEnsemble[i], std::cref(image.id),
                                 std::cref(independent[i])));
  }
  const Task p5 = content_based(StrategyId::P5);
  const Task p6 = content_based(StrategyId::P6);
  futures.push_back(
      std::async(std::launch::async, guarded, StrategyId::P5, std::cref(image.id), std::cref(p5)));
  futures.push_back(
      std::async(std::launch::async, guarded, StrategyId::P6, std::cref(image.id), std::cref(p6)));
  for (auto& f : futures) outcomes.push_back(f.get());
  return outcomes;
}

}  // namespace fakescope
