#include <cstdlib>

#include "aes/error.hpp"
#include "aes/rationale.hpp"
#include "httplib.h"
#include "json.hpp"

namespace aes {

using nlohmann::json;

HttpChatProvider::HttpChatProvider(HttpProviderConfig config) : config_(std::move(config)) {}

std::string HttpChatProvider::request_body(const ChatRequest& request) {
  const json body{{"model", request.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
                  {"temperature", request.temperature}};
  return body.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string HttpChatProvider::extract_content(std::string_view response_body) {
  json j;
  try {
    j = json::parse(response_body);
  } catch (const json::exception& e) {
    throw ProviderError(std::string("provider returned invalid JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw ProviderError("assistant content is not a string");
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw ProviderError("provider response lacks choices[0].message.content");
  }
}

std::string HttpChatProvider::complete(const ChatRequest& request) {
  // Split "scheme://host[:port]/path".
  const auto& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ProviderError("endpoint lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ProviderError("environment variable " + config_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  httplib::Client client(origin);
  if (!client.is_valid()) throw ProviderError("unsupported endpoint: " + url);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(std::chrono::seconds(60));

  const auto res = client.Post(path, headers, request_body(request), "application/json");
  if (!res) throw ProviderError("request to " + url + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " +
                        res->body.substr(0, 500));
  }
  return extract_content(res->body);
}

}  // namespace aes
