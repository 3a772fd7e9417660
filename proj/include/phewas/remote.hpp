#pragma once

// HTTP backends: the agent opinion wire protocol and a remote embedding
// service. Both retry transient failures and surface TransportError with
// the attempt count. An optional bearer token is read from the
// PHEWAS_REMOTE_TOKEN environment variable (or a config file upstream),
// never from command-line flags.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "phewas/agent.hpp"
#include "phewas/errors.hpp"
#include "phewas/memory.hpp"

namespace phewas::remote {

using Json = nlohmann::ordered_json;

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ValidationError("remote: endpoint must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.base = url;
    out.path = "/";
  } else {
    out.base = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

inline httplib::Headers auth_headers() {
  httplib::Headers headers;
  if (const char* token = std::getenv("PHEWAS_REMOTE_TOKEN"))
    headers.emplace("Authorization", std::string("Bearer ") + token);
  return headers;
}

// POST a JSON body; retry on connection errors and 5xx, up to 1 + retries
// attempts with a short linear backoff.
inline Json post_json(const std::string& endpoint, const Json& body,
                      double timeout_s, int retries) {
  const ParsedUrl url = parse_url(endpoint);
  const int max_attempts = 1 + std::max(0, retries);
  std::string last_error = "unknown";
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    httplib::Client client(url.base);
    const auto sec = static_cast<time_t>(timeout_s);
    const auto usec = static_cast<time_t>((timeout_s - sec) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    auto res = client.Post(url.path, auth_headers(), body.dump(),
                           "application/json");
    if (res) {
      if (res->status >= 200 && res->status < 300) {
        try {
          return Json::parse(res->body);
        } catch (const std::exception& e) {
          throw TransportError(
              "remote: invalid JSON from " + endpoint + ": " + e.what(),
              attempt);
        }
      }
      if (res->status < 500)
        throw TransportError("remote: " + endpoint + " returned status " +
                                 std::to_string(res->status),
                             attempt);
      last_error = "status " + std::to_string(res->status);
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < max_attempts)
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
  }
  throw TransportError(
      "remote: " + endpoint + " failed after " +
          std::to_string(max_attempts) + " attempts: " + last_error,
      max_attempts);
}

// Agent opinion transport matching agent::RemoteTransport.
inline agent::RemoteTransport make_http_transport() {
  return [](const agent::RemoteConfig& config, const Json& request) {
    return post_json(config.endpoint, request, config.timeout_s,
                     config.retries);
  };
}

// Remote embeddings: POST {"texts": [...]}, expect {"vectors": [[...]]}.
inline std::vector<std::vector<double>> embed_remote(
    const memory::EmbeddingSpec& spec, const std::vector<std::string>& texts,
    double timeout_s = 30.0, int retries = 2) {
  if (spec.mode != memory::EmbeddingMode::Remote)
    throw ValidationError("embed_remote: spec is not in Remote mode");
  if (spec.remote_endpoint.empty())
    throw ValidationError("embed_remote: no endpoint configured");
  if (texts.empty()) throw ValidationError("embed_remote: no texts");
  const Json response = post_json(spec.remote_endpoint, Json{{"texts", texts}},
                                  timeout_s, retries);
  if (!response.is_object() || !response.contains("vectors") ||
      !response["vectors"].is_array())
    throw TransportError("embed_remote: response missing vectors array");
  std::vector<std::vector<double>> out;
  for (const auto& v : response["vectors"]) {
    auto vec = v.get<std::vector<double>>();
    if (vec.size() != spec.dimension)
      throw TransportError("embed_remote: vector dimension mismatch");
    out.push_back(std::move(vec));
  }
  if (out.size() != texts.size())
    throw TransportError("embed_remote: vector count mismatch");
  return out;
}

// Convenience wrapper dispatching on the embedding mode.
inline std::vector<double> embed(const memory::EmbeddingSpec& spec,
                                 const std::string& case_text,
                                 const std::vector<std::string>& phenotype_ids) {
  if (spec.mode == memory::EmbeddingMode::Deterministic)
    return memory::embed_deterministic(spec, case_text, phenotype_ids);
  std::string joined = case_text;
  for (const auto& id : phenotype_ids) joined += " " + id;
  return embed_remote(spec, {joined}).front();
}

}  // namespace phewas::remote
