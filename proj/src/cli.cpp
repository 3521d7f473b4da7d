#include "abscribe/cli.hpp"

#include "abscribe/backends.hpp"
#include "abscribe/error.hpp"
#include "abscribe/http_api.hpp"
#include "abscribe/service.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <pthread.h>

namespace abscribe {
namespace {

using json = nlohmann::json;

struct Options {
    std::string workspace;
    std::string backend;
    bool json_output = false;

    std::string doc_id;
    std::string block_id;
    std::string comp_id;
    std::string var_id;
    std::string button_id;
    std::string title = "Untitled";
    std::string text;
    std::string prompt;
    std::string label;
    std::string file;
    std::string output;
    std::vector<std::string> assignments;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t offset = 0;
    std::size_t index = 0;
    bool has_index = false;
    bool select = false;
    bool accept = false;
    bool regenerate_label = false;
    std::string bind = "127.0.0.1:8787";
    std::string cors_origin = "*";
};

using Action = std::function<json(Service&, std::ostream&)>;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string resolve_document(const Service& service, const std::string& requested) {
    if (!requested.empty()) return requested;
    const auto docs = service.list_documents();
    if (docs.size() == 1) return docs.front().id;
    throw Error(ErrorCode::InvalidRequest,
                docs.empty() ? "the workspace has no documents" : "several documents; pass --doc");
}

Assignment parse_assignments(const std::vector<std::string>& items) {
    Assignment out;
    for (const auto& item : items) {
        const auto colon = item.find(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
            throw Error(ErrorCode::InvalidRequest, "--assign expects component:variation, got \"" + item + "\"");
        }
        out[item.substr(0, colon)] = item.substr(colon + 1);
    }
    return out;
}

std::optional<std::string> non_empty(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return s;
}

void print_error(std::ostream& err, bool as_json, std::string_view code, const std::string& message) {
    if (as_json) {
        err << json{{"code", code}, {"message", message}}.dump() << '\n';
    } else {
        err << "error: " << code << ": " << message << '\n';
    }
}

// Human-readable rendering of a command result.
void print_human(std::ostream& out, const json& result) {
    if (result.contains("text") && result.size() == 1) {
        out << result["text"].get<std::string>() << '\n';
        return;
    }
    for (const auto& [key, value] : result.items()) {
        if (value.is_string()) {
            out << key << ": " << value.get<std::string>() << '\n';
        } else {
            out << key << ": " << value.dump(2) << '\n';
        }
    }
}

int serve(const Options& opts, Service& service, std::ostream& out) {
    const BindAddress address = parse_bind_address(opts.bind);
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    HttpApi api(service, HttpOptions{opts.cors_origin, &std::cerr});
    if (!api.bind(address.host, address.port)) {
        throw Error(ErrorCode::IoError, "cannot bind " + address.host + ":" + std::to_string(address.port));
    }
    api.start();
    out << "listening on http://" << address.host << ":" << address.port << "/api/v1" << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    api.stop();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
    return 0;
}

ServiceOptions service_options(const Options& opts) {
    ServiceOptions so;
    so.workspace_path = resolve_workspace_path(opts.workspace);
    so.model = llm::ModelConfig::from_env();
    if (!opts.backend.empty()) {
        const auto kind = llm::parse_backend_kind(opts.backend);
        if (!kind) throw Error(ErrorCode::InvalidConfig, "--llm-backend must be real or mock");
        so.model.backend = *kind;
    }
    if (const char* seed = std::getenv("ABSCRIBE_DETERMINISTIC_SEED"); seed && *seed) {
        try {
            so.deterministic_seed = std::stoull(seed);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "ABSCRIBE_DETERMINISTIC_SEED must be an integer");
        }
    }
    if (const char* fixed = std::getenv("ABSCRIBE_FIXED_TIME"); fixed && *fixed) {
        const auto ts = parse_rfc3339(fixed);
        if (!ts) throw Error(ErrorCode::InvalidConfig, "ABSCRIBE_FIXED_TIME must be an RFC 3339 timestamp");
        ids::set_fixed_clock(*ts);
    }
    return so;
}

void add_doc_option(CLI::App* cmd, Options& o) {
    cmd->add_option("--doc", o.doc_id, "Document id (optional when the workspace has one document)");
}

void add_comp_options(CLI::App* cmd, Options& o) {
    add_doc_option(cmd, o);
    cmd->add_option("--comp", o.comp_id, "Component id")->required();
}

void add_var_options(CLI::App* cmd, Options& o) {
    add_comp_options(cmd, o);
    cmd->add_option("--var", o.var_id, "Variation id")->required();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    Action action;
    bool serve_requested = false;

    CLI::App app{"abscribe: documents with in-place text variations and reusable prompt buttons"};
    app.require_subcommand(1);
    app.add_option("--workspace", o.workspace, "Workspace file (default: $ABSCRIBE_WORKSPACE or ./workspace.abscribe.json)");
    app.add_option("--llm-backend", o.backend, "real or mock")->check(CLI::IsMember({"real", "mock"}));
    app.add_flag("--json", o.json_output, "Print one JSON object per command");

    // doc
    auto* doc = app.add_subcommand("doc", "Documents")->require_subcommand(1);
    auto* doc_new = doc->add_subcommand("new", "Create an empty document");
    doc_new->add_option("--title", o.title);
    doc_new->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto d = s.create_document(o.title);
            return json{{"document_id", d.id}, {"block_id", d.blocks.front().id}};
        };
    });
    auto* doc_import = doc->add_subcommand("import", "Import a UTF-8 text file, one block per line");
    doc_import->add_option("file", o.file)->required();
    doc_import->add_option("--title", o.title);
    doc_import->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto d = s.create_document(o.title, read_text_file(o.file));
            json blocks = json::array();
            for (const auto& b : d.blocks) blocks.push_back(b.id);
            return json{{"document_id", d.id}, {"block_ids", blocks}};
        };
    });
    auto* doc_export = doc->add_subcommand("export", "Write the flattened text, ending in one newline");
    add_doc_option(doc_export, o);
    doc_export->add_option("-o,--output", o.output, "Destination file (default: stdout)");
    doc_export->callback([&] {
        action = [&](Service& s, std::ostream& os) -> json {
            const std::string text = s.flatten(resolve_document(s, o.doc_id)) + "\n";
            if (o.output.empty()) {
                os << text;
                return nullptr;
            }
            write_atomically(text, o.output);
            return json{{"path", o.output}, {"bytes", text.size()}};
        };
    });
    auto* doc_flatten = doc->add_subcommand("flatten", "Print the flattened text");
    add_doc_option(doc_flatten, o);
    doc_flatten->add_option("--assign", o.assignments, "component:variation (repeatable)");
    doc_flatten->callback([&] {
        action = [&](Service& s, std::ostream&) {
            return json{{"text", s.flatten(resolve_document(s, o.doc_id), parse_assignments(o.assignments))}};
        };
    });
    auto* doc_list = doc->add_subcommand("list", "List documents");
    doc_list->callback([&] {
        action = [&](Service& s, std::ostream&) {
            json docs = json::array();
            for (const auto& info : s.list_documents()) docs.push_back(to_json(info));
            return json{{"documents", docs}};
        };
    });
    auto* doc_show = doc->add_subcommand("show", "Print a document as JSON");
    add_doc_option(doc_show, o);
    doc_show->callback([&] {
        action = [&](Service& s, std::ostream&) { return json{{"document", to_json(s.get_document(resolve_document(s, o.doc_id)))}}; };
    });
    auto* doc_rename = doc->add_subcommand("rename", "Change a document's title");
    add_doc_option(doc_rename, o);
    doc_rename->add_option("--title", o.title)->required();
    doc_rename->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.rename_document(resolve_document(s, o.doc_id), o.title);
            return json::object();
        };
    });
    auto* doc_delete = doc->add_subcommand("delete", "Delete a document");
    doc_delete->add_option("--doc", o.doc_id)->required();
    doc_delete->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.delete_document(o.doc_id);
            return json::object();
        };
    });

    // block / text
    auto* block = app.add_subcommand("block", "Blocks")->require_subcommand(1);
    auto* block_add = block->add_subcommand("add", "Insert a block");
    add_doc_option(block_add, o);
    block_add->add_option("--index", o.index, "Position (default: end)")->each([&](const std::string&) { o.has_index = true; });
    block_add->add_option("--text", o.text);
    block_add->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto id = resolve_document(s, o.doc_id);
            const std::size_t index = o.has_index ? o.index : s.get_document(id).blocks.size();
            return json{{"block_id", s.insert_block(id, index, o.text)}};
        };
    });
    auto* block_delete = block->add_subcommand("delete", "Delete a block without components");
    add_doc_option(block_delete, o);
    block_delete->add_option("--block", o.block_id)->required();
    block_delete->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.delete_block(resolve_document(s, o.doc_id), o.block_id);
            return json::object();
        };
    });
    auto* text_cmd = app.add_subcommand("text", "Plain text editing")->require_subcommand(1);
    auto* text_insert = text_cmd->add_subcommand("insert", "Insert plain text at an offset");
    add_doc_option(text_insert, o);
    text_insert->add_option("--block", o.block_id)->required();
    text_insert->add_option("--offset", o.offset)->required();
    text_insert->add_option("--text", o.text)->required();
    text_insert->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.insert_text(resolve_document(s, o.doc_id), o.block_id, o.offset, o.text);
            return json::object();
        };
    });
    auto* text_delete = text_cmd->add_subcommand("delete", "Delete a plain range");
    add_doc_option(text_delete, o);
    text_delete->add_option("--block", o.block_id)->required();
    text_delete->add_option("--start", o.start)->required();
    text_delete->add_option("--end", o.end)->required();
    text_delete->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.delete_range(resolve_document(s, o.doc_id), Span{o.block_id, o.start, o.end});
            return json::object();
        };
    });

    // comp
    auto* comp = app.add_subcommand("comp", "Variation components")->require_subcommand(1);
    auto* comp_create = comp->add_subcommand("create", "Turn a plain span into a component");
    add_doc_option(comp_create, o);
    comp_create->add_option("--block", o.block_id)->required();
    comp_create->add_option("--start", o.start)->required();
    comp_create->add_option("--end", o.end)->required();
    comp_create->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto c = s.create_component(resolve_document(s, o.doc_id), Span{o.block_id, o.start, o.end});
            return json{{"component_id", c.component_id}, {"variation_id", c.variation_id}};
        };
    });
    auto* comp_list = comp->add_subcommand("list", "List components and their variations");
    add_doc_option(comp_list, o);
    comp_list->callback([&] {
        action = [&](Service& s, std::ostream&) {
            json comps = json::array();
            for (const auto& c : s.list_components(resolve_document(s, o.doc_id))) comps.push_back(to_json(c));
            return json{{"components", comps}};
        };
    });
    auto* comp_dissolve = comp->add_subcommand("dissolve", "Replace a component by its selected text");
    add_comp_options(comp_dissolve, o);
    comp_dissolve->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.dissolve_component(resolve_document(s, o.doc_id), o.comp_id);
            return json::object();
        };
    });

    // var
    auto* var = app.add_subcommand("var", "Variations")->require_subcommand(1);
    auto* var_add = var->add_subcommand("add", "Add a human-written variation");
    add_comp_options(var_add, o);
    var_add->add_option("--text", o.text)->required();
    var_add->add_flag("--select", o.select, "Select the new variation");
    var_add->callback([&] {
        action = [&](Service& s, std::ostream&) {
            return json{{"variation_id", s.add_variation(resolve_document(s, o.doc_id), o.comp_id, o.text, o.select)}};
        };
    });
    auto* var_select = var->add_subcommand("select", "Select a variation");
    add_var_options(var_select, o);
    var_select->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.select_variation(resolve_document(s, o.doc_id), o.comp_id, o.var_id);
            return json::object();
        };
    });
    auto* var_delete = var->add_subcommand("delete", "Delete a variation");
    add_var_options(var_delete, o);
    var_delete->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.delete_variation(resolve_document(s, o.doc_id), o.comp_id, o.var_id);
            return json::object();
        };
    });
    auto* var_edit = var->add_subcommand("edit", "Replace a variation's text");
    add_var_options(var_edit, o);
    var_edit->add_option("--text", o.text)->required();
    var_edit->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.edit_variation(resolve_document(s, o.doc_id), o.comp_id, o.var_id, o.text);
            return json::object();
        };
    });
    auto* var_clone = var->add_subcommand("clone", "Duplicate a variation and select the copy");
    add_var_options(var_clone, o);
    var_clone->callback([&] {
        action = [&](Service& s, std::ostream&) {
            return json{{"variation_id", s.clone_variation(resolve_document(s, o.doc_id), o.comp_id, o.var_id)}};
        };
    });

    // btn
    auto* btn = app.add_subcommand("btn", "Prompt buttons")->require_subcommand(1);
    auto* btn_new = btn->add_subcommand("new", "Create a button from a prompt");
    btn_new->add_option("--prompt", o.prompt)->required();
    btn_new->add_option("--label", o.label, "Explicit label (default: generated)");
    btn_new->callback([&] {
        action = [&](Service& s, std::ostream&) {
            return json{{"button", to_json(s.create_button(o.prompt, non_empty(o.label)))}};
        };
    });
    auto* btn_list = btn->add_subcommand("list", "List buttons");
    btn_list->callback([&] {
        action = [&](Service& s, std::ostream&) {
            json buttons = json::array();
            for (const auto& b : s.list_buttons()) buttons.push_back(to_json(b));
            return json{{"buttons", buttons}};
        };
    });
    auto* btn_edit = btn->add_subcommand("edit", "Change a button's prompt or label");
    btn_edit->add_option("--button", o.button_id)->required();
    btn_edit->add_option("--prompt", o.prompt);
    btn_edit->add_option("--label", o.label);
    btn_edit->add_flag("--regenerate-label", o.regenerate_label);
    btn_edit->callback([&] {
        action = [&](Service& s, std::ostream&) {
            return json{{"button", to_json(s.edit_button(o.button_id, non_empty(o.prompt), non_empty(o.label),
                                                         o.regenerate_label))}};
        };
    });
    auto* btn_delete = btn->add_subcommand("delete", "Delete a button");
    btn_delete->add_option("--button", o.button_id)->required();
    btn_delete->callback([&] {
        action = [&](Service& s, std::ostream&) {
            s.delete_button(o.button_id);
            return json::object();
        };
    });
    auto* btn_apply = btn->add_subcommand("apply", "Generate a variation with a button");
    add_comp_options(btn_apply, o);
    btn_apply->add_option("--button", o.button_id)->required();
    btn_apply->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto r = s.apply_button(resolve_document(s, o.doc_id), o.comp_id, o.button_id);
            return json{{"variation_id", r.variation_id}, {"text", r.text}};
        };
    });
    auto* btn_adhoc = btn->add_subcommand("adhoc", "Generate a variation from a new prompt and keep it as a button");
    add_comp_options(btn_adhoc, o);
    btn_adhoc->add_option("--prompt", o.prompt)->required();
    btn_adhoc->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto r = s.adhoc_variation(resolve_document(s, o.doc_id), o.comp_id, o.prompt);
            return json{{"button", to_json(r.button)}, {"variation_id", r.variation_id}, {"text", r.text}};
        };
    });

    // insert
    auto* insert = app.add_subcommand("insert", "Generate text at an insertion point");
    add_doc_option(insert, o);
    insert->add_option("--block", o.block_id)->required();
    insert->add_option("--offset", o.offset)->required();
    insert->add_option("--prompt", o.prompt)->required();
    insert->add_flag("--accept", o.accept, "Splice the generated text into the document");
    insert->callback([&] {
        action = [&](Service& s, std::ostream&) {
            const auto session = s.start_insert(resolve_document(s, o.doc_id), o.block_id, o.offset, o.prompt);
            const auto snap = session->wait();
            if (snap.state == llm::InsertState::Failed) {
                s.resolve_insert(session->id(), InsertAction::Discard);
                throw Error(ErrorCode::BackendError, snap.failure_reason);
            }
            s.resolve_insert(session->id(), o.accept ? InsertAction::Accept : InsertAction::Discard);
            return json{{"insert_id", snap.id}, {"text", snap.accumulated_text}, {"accepted", o.accept}};
        };
    });

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    serve_cmd->add_option("--bind", o.bind, "host:port");
    serve_cmd->add_option("--cors-origin", o.cors_origin, "Allowed browser origin");
    serve_cmd->callback([&] { serve_requested = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        Service service(service_options(o));
        if (serve_requested) return serve(o, service, out);
        std::ostringstream text_out;
        const json result = action(service, text_out);
        if (result.is_null()) {
            out << text_out.str();
        } else if (o.json_output) {
            out << result.dump() << '\n';
        } else {
            print_human(out, result);
        }
        return 0;
    } catch (const Error& e) {
        print_error(err, o.json_output, e.name(), e.what());
        return is_backend_error(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        print_error(err, o.json_output, "internal_error", e.what());
        return 1;
    }
}

}  // namespace abscribe
