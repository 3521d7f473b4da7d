#pragma once

#include "abscribe/service.hpp"

#include <iosfwd>
#include <memory>
#include <string>

namespace abscribe {

struct HttpOptions {
    // Value of Access-Control-Allow-Origin.
    std::string cors_origin = "*";
    // One JSON line per request to `log` when set.
    std::ostream* log = nullptr;
};

// HTTP/JSON surface under /api/v1 over a Service. Inserts stream as
// text/event-stream with token, done and error events.
class HttpApi {
public:
    explicit HttpApi(Service& service, HttpOptions options = {});
    ~HttpApi();
    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    bool bind(const std::string& host, int port);
    // Returns the chosen port, or -1.
    int bind_to_any_port(const std::string& host);

    // Blocks until stop().
    bool listen_after_bind();

    // Serves on a background thread.
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 8787;
};

// "host:port", ":port" or "host". Throws InvalidRequest.
BindAddress parse_bind_address(const std::string& text);

}  // namespace abscribe
