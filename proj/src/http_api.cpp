#include "abscribe/http_api.hpp"

#include "abscribe/error.hpp"
#include "abscribe/sse.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <ostream>
#include <thread>

namespace abscribe {
namespace {

using json = nlohmann::json;
using httplib::Request;
using httplib::Response;

constexpr const char* kJson = "application/json";

void send_json(Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(Response& res, ErrorCode code, const std::string& message) {
    send_json(res, {{"code", code_name(code)}, {"message", message}}, http_status(code));
}

json body_of(const Request& req) {
    if (req.body.empty()) return json::object();
    try {
        json parsed = json::parse(req.body);
        if (!parsed.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
        return parsed;
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("malformed JSON body: ") + e.what());
    }
}

std::string required_string(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || !it->is_string()) {
        throw Error(ErrorCode::InvalidRequest, std::string("field \"") + key + "\" must be a string");
    }
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) {
        throw Error(ErrorCode::InvalidRequest, std::string("field \"") + key + "\" must be a string");
    }
    return it->get<std::string>();
}

std::size_t required_index(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw Error(ErrorCode::InvalidRequest,
                    std::string("field \"") + key + "\" must be a non-negative integer");
    }
    return it->get<std::size_t>();
}

bool optional_bool(const json& body, const char* key, bool fallback) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) return fallback;
    if (!it->is_boolean()) {
        throw Error(ErrorCode::InvalidRequest, std::string("field \"") + key + "\" must be a boolean");
    }
    return it->get<bool>();
}

// "assignment=comp:var,comp:var"
Assignment parse_assignment(const Request& req) {
    Assignment out;
    if (!req.has_param("assignment")) return out;
    const std::string raw = req.get_param_value("assignment");
    std::size_t start = 0;
    while (start <= raw.size()) {
        const auto comma = raw.find(',', start);
        const std::string item = raw.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) {
            const auto colon = item.find(':');
            if (colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
                throw Error(ErrorCode::InvalidRequest, "assignment entries must be component:variation");
            }
            out[item.substr(0, colon)] = item.substr(colon + 1);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

json button_json(const PromptButton& b) { return to_json(b); }

// Events produced on the streaming thread, consumed by the HTTP writer.
struct EventQueue {
    std::mutex mutex;
    std::condition_variable ready;
    std::deque<std::string> events;
    bool closed = false;

    void push(std::string event, bool close = false) {
        {
            std::lock_guard lock(mutex);
            events.push_back(std::move(event));
            closed = closed || close;
        }
        ready.notify_all();
    }
};

llm::InsertSink queue_sink(const std::shared_ptr<EventQueue>& queue) {
    llm::InsertSink sink;
    sink.on_token = [queue](std::string_view token) {
        queue->push(sse::format("token", json{{"text", token}}.dump()));
    };
    sink.on_finish = [queue](const llm::InsertSnapshot& snap) {
        if (snap.state == llm::InsertState::Complete) {
            queue->push(sse::format("done", json{{"insert_id", snap.id}, {"full_text", snap.accumulated_text}}.dump()),
                        true);
        } else {
            queue->push(sse::format("error", json{{"insert_id", snap.id}, {"reason", snap.failure_reason}}.dump()),
                        true);
        }
    };
    return sink;
}

void stream_session(Response& res, const std::shared_ptr<llm::InsertSession>& session,
                    const std::shared_ptr<EventQueue>& queue) {
    res.set_header("X-Insert-Id", session->id());
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [session, queue](std::size_t, httplib::DataSink& sink) {
            std::unique_lock lock(queue->mutex);
            queue->ready.wait_for(lock, std::chrono::milliseconds(50),
                                  [&] { return !queue->events.empty() || queue->closed; });
            while (!queue->events.empty()) {
                std::string event = std::move(queue->events.front());
                queue->events.pop_front();
                lock.unlock();
                if (!sink.write(event.data(), event.size())) {
                    session->cancel();
                    return false;
                }
                lock.lock();
            }
            if (queue->closed) {
                sink.done();
                return true;
            }
            lock.unlock();
            if (session->snapshot().state == llm::InsertState::Cancelled) {
                sink.done();
                return true;
            }
            return true;
        },
        // A client that goes away mid-stream cancels the insert.
        [session](bool success) {
            if (!success) session->cancel();
        });
}

}  // namespace

struct HttpApi::Impl {
    Service& service;
    HttpOptions options;
    httplib::Server server;
    std::thread thread;

    Impl(Service& s, HttpOptions o) : service(s), options(std::move(o)) {}

    template <typename Handler>
    void route(const char* method, const std::string& pattern, Handler handler) {
        auto wrapped = [this, handler](const Request& req, Response& res) {
            try {
                handler(req, res);
            } catch (const Error& e) {
                send_error(res, e.code(), e.what());
            } catch (const std::exception& e) {
                send_json(res, {{"code", "internal_error"}, {"message", e.what()}}, 500);
            }
        };
        const std::string full = "/api/v1" + pattern;
        const std::string m = method;
        if (m == "GET") server.Get(full, wrapped);
        else if (m == "POST") server.Post(full, wrapped);
        else if (m == "PATCH") server.Patch(full, wrapped);
        else if (m == "DELETE") server.Delete(full, wrapped);
    }

    void install();
};

void HttpApi::Impl::install() {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Expose-Headers", "X-Insert-Id"}});
    server.Options(R"(/api/v1/.*)", [](const Request&, Response& res) { res.status = 204; });
    server.set_error_handler([](const Request&, Response& res) {
        if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
        send_json(res, {{"code", "not_found"}, {"message", "no such route"}}, res.status);
        return httplib::Server::HandlerResponse::Handled;
    });
    if (options.log) {
        server.set_logger([this](const Request& req, const Response& res) {
            json line = {{"method", req.method}, {"path", req.path}, {"status", res.status}};
            static std::mutex log_mutex;
            std::lock_guard lock(log_mutex);
            *options.log << line.dump() << '\n';
        });
    }

    Service& svc = service;
    const std::string doc = "/documents/([^/]+)";
    const std::string comp = doc + "/components/([^/]+)";
    const std::string var = comp + "/variations/([^/]+)";

    route("GET", "/health", [](const Request&, Response& res) { send_json(res, {{"status", "ok"}}); });

    route("GET", "/documents", [&svc](const Request&, Response& res) {
        json out = json::array();
        for (const auto& info : svc.list_documents()) out.push_back(to_json(info));
        send_json(res, out);
    });
    route("POST", "/documents", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const auto title = optional_string(body, "title").value_or("Untitled");
        send_json(res, to_json(svc.create_document(title, optional_string(body, "text"))), 201);
    });
    route("GET", doc, [&svc](const Request& req, Response& res) {
        send_json(res, to_json(svc.get_document(req.matches[1])));
    });
    route("PATCH", doc, [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        svc.rename_document(req.matches[1], required_string(body, "title"));
        send_json(res, to_json(svc.get_document(req.matches[1])));
    });
    route("DELETE", doc, [&svc](const Request& req, Response& res) {
        svc.delete_document(req.matches[1]);
        res.status = 204;
    });
    route("GET", doc + "/flatten", [&svc](const Request& req, Response& res) {
        res.set_content(svc.flatten(req.matches[1], parse_assignment(req)), "text/plain; charset=utf-8");
    });
    route("GET", doc + "/components", [&svc](const Request& req, Response& res) {
        json out = json::array();
        for (const auto& c : svc.list_components(req.matches[1])) out.push_back(to_json(c));
        send_json(res, out);
    });
    route("POST", doc + "/components", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const Span span{required_string(body, "block_id"), required_index(body, "start"), required_index(body, "end")};
        const auto created = svc.create_component(req.matches[1], span);
        send_json(res, {{"component_id", created.component_id}, {"variation_id", created.variation_id}}, 201);
    });
    route("POST", comp + "/dissolve", [&svc](const Request& req, Response& res) {
        svc.dissolve_component(req.matches[1], req.matches[2]);
        send_json(res, json::object());
    });
    route("POST", comp + "/variations", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const auto id = svc.add_variation(req.matches[1], req.matches[2], required_string(body, "text"),
                                          optional_bool(body, "select", false));
        send_json(res, {{"variation_id", id}}, 201);
    });
    route("PATCH", var, [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const auto text = optional_string(body, "text");
        const bool select = optional_bool(body, "selected", false);
        if (!text && !select) {
            throw Error(ErrorCode::InvalidRequest, "PATCH needs \"text\" or \"selected\": true");
        }
        if (text) svc.edit_variation(req.matches[1], req.matches[2], req.matches[3], *text);
        if (select) svc.select_variation(req.matches[1], req.matches[2], req.matches[3]);
        send_json(res, json::object());
    });
    route("DELETE", var, [&svc](const Request& req, Response& res) {
        svc.delete_variation(req.matches[1], req.matches[2], req.matches[3]);
        res.status = 204;
    });
    route("POST", var + "/clone", [&svc](const Request& req, Response& res) {
        send_json(res, {{"variation_id", svc.clone_variation(req.matches[1], req.matches[2], req.matches[3])}}, 201);
    });
    route("POST", comp + "/apply", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const auto out = svc.apply_button(req.matches[1], req.matches[2], required_string(body, "button_id"));
        send_json(res, {{"variation_id", out.variation_id}, {"text", out.text}}, 201);
    });
    route("POST", comp + "/adhoc", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const auto out = svc.adhoc_variation(req.matches[1], req.matches[2], required_string(body, "prompt_text"));
        send_json(res, {{"button", button_json(out.button)}, {"variation_id", out.variation_id}, {"text", out.text}},
                  201);
    });

    route("POST", doc + "/blocks", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        std::size_t index = 0;
        if (body.contains("index")) {
            index = required_index(body, "index");
        } else {
            index = svc.get_document(req.matches[1]).blocks.size();
        }
        const auto id = svc.insert_block(req.matches[1], index, optional_string(body, "text").value_or(""));
        send_json(res, {{"block_id", id}}, 201);
    });
    route("DELETE", doc + "/blocks/([^/]+)", [&svc](const Request& req, Response& res) {
        svc.delete_block(req.matches[1], req.matches[2]);
        res.status = 204;
    });
    route("POST", doc + "/blocks/([^/]+)/text", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        svc.insert_text(req.matches[1], req.matches[2], required_index(body, "offset"), required_string(body, "text"));
        send_json(res, json::object());
    });
    route("POST", doc + "/blocks/([^/]+)/delete-range", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        svc.delete_range(req.matches[1],
                         Span{req.matches[2], required_index(body, "start"), required_index(body, "end")});
        send_json(res, json::object());
    });

    route("POST", doc + "/inserts", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        auto queue = std::make_shared<EventQueue>();
        auto session = svc.start_insert(req.matches[1], required_string(body, "block_id"),
                                        required_index(body, "offset"), required_string(body, "prompt_text"),
                                        queue_sink(queue));
        stream_session(res, session, queue);
    });
    route("GET", "/inserts/([^/]+)", [&svc](const Request& req, Response& res) {
        const auto info = svc.pending_insert(req.matches[1]);
        json out = {{"insert_id", info.insert_id},
                    {"document_id", info.document_id},
                    {"block_id", info.block_id},
                    {"offset", info.offset},
                    {"prompt_text", info.snapshot.prompt_text},
                    {"accumulated_text", info.snapshot.accumulated_text},
                    {"state", llm::state_name(info.snapshot.state)}};
        if (!info.snapshot.failure_reason.empty()) out["reason"] = info.snapshot.failure_reason;
        send_json(res, out);
    });
    route("POST", "/inserts/([^/]+)/resolve", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        const std::string action = required_string(body, "action");
        if (action == "accept") {
            const auto r = svc.resolve_insert(req.matches[1], InsertAction::Accept);
            send_json(res, {{"inserted_text", r.inserted_text}});
        } else if (action == "discard") {
            svc.resolve_insert(req.matches[1], InsertAction::Discard);
            send_json(res, json::object());
        } else if (action == "revise") {
            auto queue = std::make_shared<EventQueue>();
            const auto r = svc.resolve_insert(req.matches[1], InsertAction::Revise,
                                              required_string(body, "prompt_text"), queue_sink(queue));
            stream_session(res, r.revised, queue);
        } else {
            throw Error(ErrorCode::InvalidRequest, "action must be accept, discard or revise");
        }
    });
    route("DELETE", "/inserts/([^/]+)", [&svc](const Request& req, Response& res) {
        svc.resolve_insert(req.matches[1], InsertAction::Discard);
        res.status = 204;
    });

    route("GET", "/buttons", [&svc](const Request&, Response& res) {
        json out = json::array();
        for (const auto& b : svc.list_buttons()) out.push_back(button_json(b));
        send_json(res, out);
    });
    route("POST", "/buttons", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        send_json(res, button_json(svc.create_button(required_string(body, "prompt_text"), optional_string(body, "label"))),
                  201);
    });
    route("GET", "/buttons/([^/]+)", [&svc](const Request& req, Response& res) {
        for (const auto& b : svc.list_buttons()) {
            if (b.id == req.matches[1]) return send_json(res, button_json(b));
        }
        throw Error(ErrorCode::UnknownButton, "unknown button " + std::string(req.matches[1]));
    });
    route("PATCH", "/buttons/([^/]+)", [&svc](const Request& req, Response& res) {
        const json body = body_of(req);
        send_json(res, button_json(svc.edit_button(req.matches[1], optional_string(body, "prompt_text"),
                                                   optional_string(body, "label"),
                                                   optional_bool(body, "regenerate_label", false))));
    });
    route("DELETE", "/buttons/([^/]+)", [&svc](const Request& req, Response& res) {
        svc.delete_button(req.matches[1]);
        res.status = 204;
    });
}

HttpApi::HttpApi(Service& service, HttpOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    impl_->install();
}

HttpApi::~HttpApi() { stop(); }

bool HttpApi::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

int HttpApi::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpApi::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpApi::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpApi::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

BindAddress parse_bind_address(const std::string& text) {
    BindAddress out;
    const auto colon = text.rfind(':');
    std::string host = colon == std::string::npos ? text : text.substr(0, colon);
    if (!host.empty()) out.host = host;
    if (colon != std::string::npos) {
        const std::string port = text.substr(colon + 1);
        try {
            std::size_t used = 0;
            out.port = std::stoi(port, &used);
            if (used != port.size() || out.port < 0 || out.port > 65535) throw std::out_of_range("port");
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidRequest, "invalid port in bind address \"" + text + "\"");
        }
    }
    return out;
}

}  // namespace abscribe
