#include "fakescope/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "fakescope/image.hpp"

namespace fakescope {

using json = nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::Config, "endpoint url '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public Transport {
 public:
  explicit HttplibTransport(const std::string& endpoint_url) : url_(split_url(endpoint_url)) {}

  HttpResponse post_json(const std::string& body, const std::string& bearer_token,
                         double timeout_seconds) override {
    httplib::Client client(url_.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = client.Post(url_.path, headers, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.transport_error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  SplitUrl url_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const std::string& endpoint_url) {
  return std::make_unique<HttplibTransport>(endpoint_url);
}

json build_chat_request(const BackendConfig& config, const Session& session,
                        const ImageCatalog& images) {
  json messages = json::array();
  for (const auto& turn : session.turns()) {
    json message{{"role", to_string(turn.role)}};
    if (turn.images.empty()) {
      message["content"] = turn.text;
    } else {
      json parts = json::array();
      if (!turn.text.empty()) parts.push_back({{"type", "text"}, {"text", turn.text}});
      for (const auto& ref : turn.images) {
        const auto it = images.find(ref.image_id);
        if (it == images.end()) {
          throw Error(ErrorCode::Precondition, "unresolvable image '" + ref.image_id + "'");
        }
        const ImagePart part = encode_image(it->second, ref.crop, config.max_image_dimension);
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", part.data_url()}}}});
      }
      message["content"] = std::move(parts);
    }
    messages.push_back(std::move(message));
  }
  return json{{"model", config.model_name},
              {"messages", std::move(messages)},
              {"max_tokens", config.max_output_tokens},
              {"temperature", config.temperature}};
}

Completion parse_chat_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("invalid JSON: ") + e.what());
  }
  Completion c;
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      c.text = content.get<std::string>();
    } else if (content.is_array()) {
      // Some servers return content parts even for plain text.
      for (const auto& part : content) {
        if (part.value("type", "") == "text") c.text += part.value("text", "");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResponse, std::string("no assistant content: ") + e.what());
  }
  if (c.text.empty()) throw Error(ErrorCode::MalformedResponse, "empty assistant content");
  if (doc.contains("usage") && doc["usage"].is_object()) {
    const auto& usage = doc["usage"];
    if (usage.contains("prompt_tokens")) c.stats.prompt_tokens = usage["prompt_tokens"].get<int>();
    if (usage.contains("completion_tokens")) {
      c.stats.completion_tokens = usage["completion_tokens"].get<int>();
    }
  }
  return c;
}

double backoff_delay(const BackendConfig& config, int attempt, std::mt19937_64& rng) {
  double base = config.backoff_initial_seconds;
  for (int i = 0; i < attempt && base < config.backoff_max_seconds; ++i) base *= 2.0;
  base = std::min(base, config.backoff_max_seconds);
  std::uniform_real_distribution<double> jitter(0.5, 1.0);
  return base * jitter(rng);
}

ChatCompletionsBackend::ChatCompletionsBackend(BackendConfig config)
    : ChatCompletionsBackend(config, make_http_transport(config.endpoint_url),
                             [](double s) {
                               std::this_thread::sleep_for(std::chrono::duration<double>(s));
                             }) {}

ChatCompletionsBackend::ChatCompletionsBackend(BackendConfig config,
                                               std::unique_ptr<Transport> transport,
                                               Sleeper sleeper, std::uint64_t jitter_seed)
    : Backend(config.max_concurrent_requests),
      config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      rng_(jitter_seed) {
  config_.validate();
}

Completion ChatCompletionsBackend::do_complete(const Session& session, const QueryTag&,
                                               const ImageCatalog& images) {
  std::string token;
  if (!config_.api_key_env_var.empty()) {
    const char* value = std::getenv(config_.api_key_env_var.c_str());
    if (value == nullptr || *value == '\0') {
      throw Error(ErrorCode::Auth, "environment variable " + config_.api_key_env_var + " is unset");
    }
    token = value;
  }
  const std::string body = build_chat_request(config_, session, images).dump();

  const auto start = std::chrono::steady_clock::now();
  std::string last_failure;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      double delay = 0.0;
      {
        std::lock_guard lock(rng_mutex_);
        delay = backoff_delay(config_, attempt - 1, rng_);
      }
      sleeper_(delay);
    }
    const HttpResponse res = transport_->post_json(body, token, config_.request_timeout_seconds);
    if (res.status == 0) {
      last_failure = "transport: " + res.transport_error;
      continue;
    }
    if (res.status == 401 || res.status == 403) {
      throw Error(ErrorCode::Auth, "HTTP " + std::to_string(res.status) + ": " + res.body);
    }
    if (res.status == 408 || res.status == 429 || res.status >= 500) {
      last_failure = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw Error(ErrorCode::Network, "HTTP " + std::to_string(res.status) + " (not retried): " +
                                          res.body.substr(0, 500));
    }
    Completion c = parse_chat_response(res.body);
    c.stats.latency_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return c;
  }
  throw Error(ErrorCode::Network, "giving up after " + std::to_string(config_.max_retries + 1) +
                                      " attempts; last failure: " + last_failure);
}

}  // namespace fakescope
