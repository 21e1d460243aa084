#pragma once

#include <string>

#include "json.hpp"

namespace ehrq::detail {

/// POSTs a JSON body and parses the JSON reply, retrying transport failures
/// and 5xx replies. Throws BackendError carrying the attempt count.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, const std::string& api_key,
                         int max_retries, int timeout_seconds = 60);

}  // namespace ehrq::detail
