#pragma once

#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fakescope/backend.hpp"
#include "fakescope/core.hpp"
#include "fakescope/prompts.hpp"
#include "fakescope/roi.hpp"
#include "fakescope/verdict.hpp"

namespace fakescope {

/// A labeled few-shot image with its human-written response.
struct Exemplar {
  ImageRecord image;
  std::string annotation;
};

/// The two placeholder exemplars shipped in data/exemplars/.
Exemplar bundled_real_exemplar();
Exemplar bundled_fake_exemplar();

struct StrategyConfig {
  WordingVariant wording = WordingVariant::Generated;
  std::string system_prompt;  // empty: the catalog's system prompt
  bool use_cached_assistant = true;
  std::optional<Exemplar> fewshot_real;
  std::optional<Exemplar> fewshot_fake;
  int roi_crops = 1;  // crops sent with P2's verdict query, at most RoiSettings::k

  /// Throws Config when an annotation is empty or roi_crops < 1.
  void validate() const;
};

/// Everything a strategy runner needs besides the image.
struct StrategyContext {
  Backend& backend;
  const StrategyConfig& config;
  const PromptCatalog& prompts;
  const RejectionPatterns& rejections = default_rejection_patterns();

  std::string system_prompt() const;
  std::string verdict_prompt() const { return prompts.verdict_prompt(config.wording); }
  Verdict parse(std::string_view reply) const {
    return parse_verdict(reply, config.wording, rejections);
  }
};

/// The main subject as a short noun phrase. Non-empty, single line.
struct SubjectClass {
  std::string phrase;

  friend bool operator==(const SubjectClass&, const SubjectClass&) = default;
};

/// First non-empty line of a reply with list markers, wrapping quotes or
/// emphasis and a trailing period removed. Empty when the reply is blank.
std::string trim_subject_reply(std::string_view reply);

struct SubjectRecord {
  SubjectClass subject;
  Session transcript;
  double latency_seconds = 0.0;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

/// Per-image memo of object identification, shared by P5 and P6. Concurrent
/// callers for the same id wait on a single backend call.
class SubjectCache {
 public:
  template <typename Fn>
  SubjectRecord get_or_compute(const std::string& image_id, Fn&& compute);

  std::optional<SubjectRecord> lookup(const std::string& image_id) const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<SubjectRecord>> entries_;
};

PromptOutcome run_p0(const ImageRecord& image, const StrategyContext& ctx);
PromptOutcome run_p1(const ImageRecord& image, const StrategyContext& ctx);
PromptOutcome run_p2(const ImageRecord& image, const StrategyContext& ctx,
                     SaliencyProvider& saliency, const RoiSettings& roi);
PromptOutcome run_p3(const ImageRecord& image, const StrategyContext& ctx);

/// Throws MissingExemplars unless both exemplars are configured.
PromptOutcome run_p4(const ImageRecord& image, const StrategyContext& ctx);

/// P4 with both exemplars removed: the zero-shot control of an exemplar sweep.
PromptOutcome run_p4_zero_shot(const ImageRecord& image, const StrategyContext& ctx);

/// Throws EmptySubject when the reply is blank.
SubjectClass identify_subject(const ImageRecord& image, const StrategyContext& ctx,
                              SubjectCache& cache);

PromptOutcome run_p5(const ImageRecord& image, const SubjectClass& subject,
                     const StrategyContext& ctx);
PromptOutcome run_p6(const ImageRecord& image, const SubjectClass& subject,
                     const StrategyContext& ctx);

/// P1..P6 in strategy order. A strategy that throws becomes an Unparsable
/// outcome carrying the error; siblings are unaffected. With parallel set, P1-P4
/// and the identification step start at once and P5/P6 start as soon as the
/// subject is known.
std::vector<PromptOutcome> run_all(const ImageRecord& image, const StrategyContext& ctx,
                                   SaliencyProvider& saliency, const RoiSettings& roi,
                                   bool parallel, SubjectCache& subjects);

template <typename Fn>
SubjectRecord SubjectCache::get_or_compute(const std::string& image_id, Fn&& compute) {
  std::promise<SubjectRecord> promise;
  std::shared_future<SubjectRecord> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(image_id);
    if (it == entries_.end()) {
      future = promise.get_future().share();
      entries_.emplace(image_id, future);
      owner = true;
    } else {
      future = it->second;
    }
  }
  if (owner) {
    try {
      promise.set_value(compute());
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

}  // namespace fakescope
