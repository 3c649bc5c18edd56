#include "biasaudit/transport.hpp"

#include <httplib.h>

#include "biasaudit/error.hpp"

namespace biasaudit::http {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::InvalidArgument, "URL without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport final : public Transport {
public:
  explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  Response post(const std::string& url, const Headers& headers, const std::string& body) override {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    configure(client);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    return convert(client.Post(parts.path, h, body, "application/json"));
  }

  Response get(const std::string& url) override {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    configure(client);
    return convert(client.Get(parts.path));
  }

private:
  void configure(httplib::Client& client) const {
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_).count());
    client.set_read_timeout(timeout_.count());
    client.set_write_timeout(timeout_.count());
  }

  static Response convert(const httplib::Result& res) {
    Response out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

  std::chrono::seconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout) {
  return std::make_shared<HttplibTransport>(timeout);
}

std::string join_url(std::string_view base, std::string_view path) {
  std::string out(base);
  while (!out.empty() && out.back() == '/') out.pop_back();
  if (!path.empty() && path.front() != '/') out += '/';
  out += path;
  return out;
}

}  // namespace biasaudit::http
