#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "perfalign/error.hpp"
#include "perfalign/pipeline.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that
// collides with Eigen parameter names.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace perfalign {

using nlohmann::json;

FixtureProvider::FixtureProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("provider fixture not found: " + path.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      responses_[j.at("prompt").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("fixture record: ") + e.what(), n);
    }
  }
}

std::string FixtureProvider::complete(const GenerationRequest& request) {
  auto it = responses_.find(request.prompt);
  if (it == responses_.end()) {
    throw Error("no recorded response for request " + sha256_hex(request.prompt).substr(0, 12));
  }
  return it->second;
}

HttpProvider::HttpProvider(std::string endpoint, std::string model, std::string api_key)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), api_key_(std::move(api_key)) {}

std::string HttpProvider::complete(const GenerationRequest& request) {
  // endpoint = scheme://host[:port]/path
  const auto scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("synth.endpoint must be an http(s) URL");
  const auto path_start = endpoint_.find('/', scheme_end + 3);
  const std::string origin = endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const json body{{"model", model_}, {"prompt", request.prompt}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw Error("provider request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("provider returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("provider reply: ") + e.what());
  }
}

std::unique_ptr<SynthProvider> make_provider(const SynthConfig& cfg) {
  if (!cfg.fixture.empty()) return std::make_unique<FixtureProvider>(cfg.fixture);
  if (cfg.endpoint.empty()) throw ConfigError("config field 'synth.endpoint': required without synth.fixture");
  const char* key = std::getenv(cfg.credentials_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("provider credentials missing: set the " + cfg.credentials_env + " environment variable");
  }
  return std::make_unique<HttpProvider>(cfg.endpoint, cfg.model, key);
}

}  // namespace perfalign
