#include "http_client.hpp"

#include "ehrq/errors.hpp"
#include "httplib.h"

namespace ehrq::detail {

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const std::string& api_key,
                         int max_retries, int timeout_seconds) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw BackendError("invalid backend url: " + url, 0);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds);
    client.set_read_timeout(timeout_seconds);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    std::string last_error;
    const int attempts = std::max(1, max_retries + 1);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError("backend " + url + " replied HTTP " + std::to_string(res->status), attempt);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("backend " + url + " replied with invalid JSON: " + e.what(), attempt);
        }
    }
    throw BackendError("backend " + url + " unreachable after " + std::to_string(attempts) + " attempts: " + last_error,
                       attempts);
}

}  // namespace ehrq::detail
