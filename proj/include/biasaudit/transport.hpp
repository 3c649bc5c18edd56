#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace biasaudit::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

/// status == 0 means the request never produced an HTTP response (DNS,
/// connect, timeout); `error` then carries the reason.
struct Response {
  int status = 0;
  std::string body;
  std::string error;
};

/// Minimal blocking HTTP interface. Backends take it by shared_ptr so tests
/// can inject a scripted or call-counting implementation.
class Transport {
public:
  virtual ~Transport() = default;
  virtual Response post(const std::string& url, const Headers& headers, const std::string& body) = 0;
  virtual Response get(const std::string& url) = 0;
};

/// cpp-httplib backed transport (http and https).
std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(60));

/// Joins an endpoint base URL and a path, collapsing duplicate slashes.
std::string join_url(std::string_view base, std::string_view path);

}  // namespace biasaudit::http
