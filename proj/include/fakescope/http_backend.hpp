#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "fakescope/backend.hpp"

namespace fakescope {

struct HttpResponse {
  int status = 0;  // 0 when the request never produced a response
  std::string body;
  std::string transport_error;
};

/// POSTs a JSON body to a fixed endpoint.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& body, const std::string& bearer_token,
                                 double timeout_seconds) = 0;
};

/// cpp-httplib transport; supports http:// and https:// URLs.
std::unique_ptr<Transport> make_http_transport(const std::string& endpoint_url);

/// OpenAI-compatible chat-completions request body for a session.
nlohmann::json build_chat_request(const BackendConfig& config, const Session& session,
                                  const ImageCatalog& images);

/// Extracts choices[0].message.content and usage. Throws MalformedResponse.
Completion parse_chat_response(const std::string& body);

/// Exponential backoff with jitter: min(max, initial * 2^attempt) scaled by a
/// uniform factor in [0.5, 1].
double backoff_delay(const BackendConfig& config, int attempt, std::mt19937_64& rng);

/// Live adapter for OpenAI-compatible endpoints.
///
/// Timeouts, 429 and 5xx are retried up to max_retries times; 401/403 raise
/// AuthError immediately. The API key is read from the configured environment
/// variable on every request; an empty variable name sends no credentials.
class ChatCompletionsBackend : public Backend {
 public:
  using Sleeper = std::function<void(double seconds)>;

  explicit ChatCompletionsBackend(BackendConfig config);
  ChatCompletionsBackend(BackendConfig config, std::unique_ptr<Transport> transport,
                         Sleeper sleeper, std::uint64_t jitter_seed = 0x5eed);

  const BackendConfig& config() const { return config_; }

 protected:
  Completion do_complete(const Session& session, const QueryTag& tag,
                         const ImageCatalog& images) override;

 private:
  BackendConfig config_;
  std::unique_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

}  // namespace fakescope
