#include "abscribe/service.hpp"

#include "abscribe/backends.hpp"
#include "abscribe/error.hpp"
#include "abscribe/text.hpp"

#include <fstream>
#include <iterator>
#include <utility>

namespace abscribe {
namespace {

using json = nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DocumentInfo info_of(const Document& doc) {
    return {doc.id, doc.title, doc.created_at, doc.updated_at, doc.blocks.size(), component_count(doc)};
}

std::string checked_prompt(const std::string& prompt_text) {
    if (text::is_blank(prompt_text)) throw Error(ErrorCode::EmptyPrompt, "prompt is empty");
    return std::string(text::trim(prompt_text));
}

}  // namespace

json to_json(const ComponentSummary& summary) {
    json vars = json::array();
    for (const auto& v : summary.variations) {
        vars.push_back({{"id", v.id}, {"text", v.text}, {"selected", v.selected}, {"origin", to_json(v.origin)}});
    }
    return {{"component_id", summary.component_id},
            {"block_id", summary.block_id},
            {"variations", std::move(vars)}};
}

json to_json(const DocumentInfo& info) {
    return {{"id", info.id},
            {"title", info.title},
            {"created_at", to_rfc3339(info.created_at)},
            {"updated_at", to_rfc3339(info.updated_at)},
            {"block_count", info.block_count},
            {"component_count", info.component_count}};
}

Service::Service(ServiceOptions options) : options_(std::move(options)) {
    if (!options_.backend) options_.backend = llm::make_backend(options_.model);
    gateway_ = std::make_unique<llm::Gateway>(options_.backend, options_.model);
    persisted_hash_ = fnv1a("");
    if (!options_.workspace_path.empty()) {
        if (options_.lock_workspace) file_lock_ = std::make_unique<WorkspaceLock>(options_.workspace_path);
        if (std::filesystem::exists(options_.workspace_path)) {
            const std::string bytes = read_file(options_.workspace_path);
            workspace_ = deserialize(bytes);
            persisted_hash_ = fnv1a(bytes);
        }
    }
}

Service::~Service() {
    std::map<std::string, PendingInsert, std::less<>> inserts;
    {
        std::lock_guard lock(inserts_mutex_);
        inserts.swap(inserts_);
    }
    for (auto& [id, pending] : inserts) pending.session->cancel();
    inserts.clear();
    gateway_.reset();
}

std::shared_ptr<std::mutex> Service::document_guard(const std::string& doc_id) {
    std::lock_guard lock(guards_mutex_);
    auto& guard = guards_[doc_id];
    if (!guard) guard = std::make_shared<std::mutex>();
    return guard;
}

const Document& Service::document_locked(const std::string& doc_id) const {
    for (const auto& doc : workspace_.documents) {
        if (doc.id == doc_id) return doc;
    }
    throw Error(ErrorCode::UnknownDocument, "unknown document " + doc_id);
}

Document& Service::document_locked(const std::string& doc_id) {
    for (auto& doc : workspace_.documents) {
        if (doc.id == doc_id) return doc;
    }
    throw Error(ErrorCode::UnknownDocument, "unknown document " + doc_id);
}

void Service::reseed_locked(const json& operation) const {
    if (!options_.deterministic_seed) return;
    std::uint64_t h = fnv1a(std::to_string(*options_.deterministic_seed));
    h = fnv1a(std::to_string(persisted_hash_), h);
    h = fnv1a(operation.dump(), h);
    ids::reseed(h);
}

void Service::persist_locked() {
    if (options_.workspace_path.empty() && !options_.deterministic_seed) return;
    const std::string bytes = serialize(workspace_);
    if (!options_.workspace_path.empty()) write_atomically(bytes, options_.workspace_path);
    persisted_hash_ = fnv1a(bytes);
}

void Service::notify_locked(const std::string& doc_id, json operation, json result) {
    ++sequence_;
    if (!options_.commit_observer) return;
    options_.commit_observer(CommitRecord{sequence_, doc_id, std::move(operation), std::move(result)});
}

json Service::mutate_document(const std::string& doc_id, json operation,
                              const std::function<json(Document&)>& edit,
                              const std::function<json(PromptRegistry&)>& registry_edit) {
    const auto guard = document_guard(doc_id);
    std::lock_guard doc_lock(*guard);

    Document copy;
    {
        std::lock_guard lock(state_mutex_);
        copy = document_locked(doc_id);
        reseed_locked(operation);
    }
    json result = edit(copy);

    std::lock_guard lock(state_mutex_);
    Document& live = document_locked(doc_id);
    std::optional<PromptRegistry> previous_registry;
    if (registry_edit) {
        previous_registry = workspace_.buttons;
        try {
            json extra = registry_edit(workspace_.buttons);
            if (extra.is_object()) result.update(extra);
        } catch (...) {
            workspace_.buttons = std::move(*previous_registry);
            throw;
        }
    }
    Document previous = std::exchange(live, std::move(copy));
    try {
        persist_locked();
    } catch (...) {
        live = std::move(previous);
        if (previous_registry) workspace_.buttons = std::move(*previous_registry);
        throw;
    }
    notify_locked(doc_id, std::move(operation), result);
    return result;
}

json Service::mutate_workspace(json operation, const std::function<json(Workspace&)>& edit) {
    std::lock_guard lock(state_mutex_);
    reseed_locked(operation);
    Workspace previous = workspace_;
    json result;
    try {
        result = edit(workspace_);
        persist_locked();
    } catch (...) {
        workspace_ = std::move(previous);
        throw;
    }
    std::string doc_id = operation.value("document_id", std::string{});
    if (doc_id.empty() && result.is_object()) doc_id = result.value("document_id", std::string{});
    notify_locked(doc_id, std::move(operation), result);
    return result;
}

std::vector<DocumentInfo> Service::list_documents() const {
    std::lock_guard lock(state_mutex_);
    std::vector<DocumentInfo> out;
    for (const auto& doc : workspace_.documents) out.push_back(info_of(doc));
    return out;
}

Document Service::get_document(const std::string& doc_id) const {
    std::lock_guard lock(state_mutex_);
    return document_locked(doc_id);
}

Document Service::create_document(const std::string& title, const std::optional<std::string>& text) {
    json op = {{"op", "create_document"}, {"title", title}};
    if (text) op["text"] = *text;
    const json result = mutate_workspace(op, [&](Workspace& ws) {
        if (!text::is_valid_utf8(title)) throw Error(ErrorCode::InvalidText, "title is not valid UTF-8");
        Document doc = import_plain_text(title, text.value_or(""));
        json r = {{"document_id", doc.id}};
        ws.documents.push_back(std::move(doc));
        return r;
    });
    return get_document(result["document_id"].get<std::string>());
}

void Service::rename_document(const std::string& doc_id, const std::string& title) {
    mutate_document(doc_id, {{"op", "rename_document"}, {"document_id", doc_id}, {"title", title}},
                    [&](Document& d) {
                        set_title(d, title);
                        return json::object();
                    });
}

void Service::delete_document(const std::string& doc_id) {
    const auto guard = document_guard(doc_id);
    std::lock_guard doc_lock(*guard);
    mutate_workspace({{"op", "delete_document"}, {"document_id", doc_id}}, [&](Workspace& ws) {
        document_locked(doc_id);
        std::erase_if(ws.documents, [&](const Document& d) { return d.id == doc_id; });
        return json::object();
    });
}

std::string Service::flatten(const std::string& doc_id, const Assignment& assignment) const {
    std::lock_guard lock(state_mutex_);
    return abscribe::flatten(document_locked(doc_id), assignment);
}

std::vector<ComponentSummary> Service::list_components(const std::string& doc_id) const {
    std::lock_guard lock(state_mutex_);
    return abscribe::list_components(document_locked(doc_id));
}

CreatedComponent Service::create_component(const std::string& doc_id, const Span& span) {
    const json r = mutate_document(
        doc_id,
        {{"op", "create_component"}, {"document_id", doc_id}, {"block_id", span.block_id},
         {"start", span.start}, {"end", span.end}},
        [&](Document& d) {
            const auto created = abscribe::create_component(d, span);
            return json{{"component_id", created.component_id}, {"variation_id", created.variation_id}};
        });
    return {r["component_id"].get<std::string>(), r["variation_id"].get<std::string>()};
}

void Service::dissolve_component(const std::string& doc_id, const std::string& comp_id) {
    mutate_document(doc_id, {{"op", "dissolve_component"}, {"document_id", doc_id}, {"component_id", comp_id}},
                    [&](Document& d) {
                        abscribe::dissolve_component(d, comp_id);
                        return json::object();
                    });
}

std::string Service::add_variation(const std::string& doc_id, const std::string& comp_id,
                                   const std::string& text, bool select) {
    const json r = mutate_document(
        doc_id,
        {{"op", "add_variation"}, {"document_id", doc_id}, {"component_id", comp_id}, {"text", text},
         {"select", select}},
        [&](Document& d) {
            const auto id = abscribe::add_variation(d, comp_id, text);
            if (select) abscribe::select_variation(d, comp_id, id);
            return json{{"variation_id", id}};
        });
    return r["variation_id"].get<std::string>();
}

void Service::select_variation(const std::string& doc_id, const std::string& comp_id,
                               const std::string& var_id) {
    mutate_document(doc_id,
                    {{"op", "select_variation"}, {"document_id", doc_id}, {"component_id", comp_id},
                     {"variation_id", var_id}},
                    [&](Document& d) {
                        abscribe::select_variation(d, comp_id, var_id);
                        return json::object();
                    });
}

void Service::delete_variation(const std::string& doc_id, const std::string& comp_id,
                               const std::string& var_id) {
    mutate_document(doc_id,
                    {{"op", "delete_variation"}, {"document_id", doc_id}, {"component_id", comp_id},
                     {"variation_id", var_id}},
                    [&](Document& d) {
                        abscribe::delete_variation(d, comp_id, var_id);
                        return json::object();
                    });
}

void Service::edit_variation(const std::string& doc_id, const std::string& comp_id,
                             const std::string& var_id, const std::string& text) {
    mutate_document(doc_id,
                    {{"op", "edit_variation"}, {"document_id", doc_id}, {"component_id", comp_id},
                     {"variation_id", var_id}, {"text", text}},
                    [&](Document& d) {
                        abscribe::edit_variation_text(d, comp_id, var_id, text);
                        return json::object();
                    });
}

std::string Service::clone_variation(const std::string& doc_id, const std::string& comp_id,
                                     const std::string& var_id) {
    const json r = mutate_document(doc_id,
                                   {{"op", "clone_variation"}, {"document_id", doc_id},
                                    {"component_id", comp_id}, {"variation_id", var_id}},
                                   [&](Document& d) {
                                       return json{{"variation_id", abscribe::clone_variation(d, comp_id, var_id)}};
                                   });
    return r["variation_id"].get<std::string>();
}

std::string Service::insert_block(const std::string& doc_id, std::size_t index, const std::string& text) {
    const json r = mutate_document(
        doc_id, {{"op", "insert_block"}, {"document_id", doc_id}, {"index", index}, {"text", text}},
        [&](Document& d) { return json{{"block_id", abscribe::insert_block(d, index, text)}}; });
    return r["block_id"].get<std::string>();
}

void Service::delete_block(const std::string& doc_id, const std::string& block_id) {
    mutate_document(doc_id, {{"op", "delete_block"}, {"document_id", doc_id}, {"block_id", block_id}},
                    [&](Document& d) {
                        abscribe::delete_block(d, block_id);
                        return json::object();
                    });
}

void Service::insert_text(const std::string& doc_id, const std::string& block_id, std::size_t offset,
                          const std::string& text) {
    mutate_document(doc_id,
                    {{"op", "insert_text"}, {"document_id", doc_id}, {"block_id", block_id},
                     {"offset", offset}, {"text", text}},
                    [&](Document& d) {
                        abscribe::insert_plain_text(d, block_id, offset, text);
                        return json::object();
                    });
}

void Service::delete_range(const std::string& doc_id, const Span& span) {
    mutate_document(doc_id,
                    {{"op", "delete_range"}, {"document_id", doc_id}, {"block_id", span.block_id},
                     {"start", span.start}, {"end", span.end}},
                    [&](Document& d) {
                        abscribe::delete_plain_range(d, span);
                        return json::object();
                    });
}

std::vector<PromptButton> Service::list_buttons() const {
    std::lock_guard lock(state_mutex_);
    return workspace_.buttons.list();
}

PromptButton Service::create_button(const std::string& prompt_text, const std::optional<std::string>& label) {
    const std::string prompt = checked_prompt(prompt_text);
    std::optional<std::string> chosen;
    if (label) {
        chosen = checked_label(*label);
    } else {
        try {
            chosen = gateway_->generate_label(prompt);
        } catch (const std::exception&) {
        }
    }
    json op = {{"op", "create_button"}, {"prompt_text", prompt}};
    if (chosen) op["label"] = *chosen;
    const json r = mutate_workspace(op, [&](Workspace& ws) {
        const auto& b = ws.buttons.create(prompt, [&](std::string_view) -> std::string {
            if (!chosen) throw Error(ErrorCode::EmptyCompletion, "no generated label");
            return *chosen;
        });
        return json{{"button_id", b.id}};
    });
    std::lock_guard lock(state_mutex_);
    return workspace_.buttons.get(r["button_id"].get<std::string>());
}

PromptButton Service::edit_button(const std::string& button_id, const std::optional<std::string>& prompt_text,
                                  const std::optional<std::string>& label, bool regenerate_label) {
    std::optional<std::string> new_label = label;
    if (regenerate_label && !label) {
        std::string basis;
        if (prompt_text) {
            basis = checked_prompt(*prompt_text);
        } else {
            std::lock_guard lock(state_mutex_);
            basis = workspace_.buttons.get(button_id).prompt_text;
        }
        new_label = gateway_->generate_label(basis);
    }
    json op = {{"op", "edit_button"}, {"button_id", button_id}};
    if (prompt_text) op["prompt_text"] = *prompt_text;
    if (new_label) op["label"] = *new_label;
    mutate_workspace(op, [&](Workspace& ws) {
        ws.buttons.edit(button_id, prompt_text, new_label);
        return json::object();
    });
    std::lock_guard lock(state_mutex_);
    return workspace_.buttons.get(button_id);
}

void Service::delete_button(const std::string& button_id) {
    mutate_workspace({{"op", "delete_button"}, {"button_id", button_id}}, [&](Workspace& ws) {
        ws.buttons.remove(button_id);
        return json::object();
    });
}

GeneratedVariation Service::apply_button(const std::string& doc_id, const std::string& comp_id,
                                         const std::string& button_id) {
    llm::GenerationRequest request;
    std::string source_id;
    {
        std::lock_guard lock(state_mutex_);
        const Document& doc = document_locked(doc_id);
        const auto* comp = find_component(doc, comp_id);
        if (!comp) throw Error(ErrorCode::UnknownComponent, "unknown component " + comp_id);
        const PromptButton& button = workspace_.buttons.get(button_id);
        const auto split = split_at_component(doc, comp_id);
        auto window = llm::bound_context(split.before, split.after);
        request.instruction = button.prompt_text;
        request.target_text = comp->selected().text;
        request.context_before = std::move(window.before);
        request.context_after = std::move(window.after);
        source_id = comp->selected_id;
    }
    const std::string text = gateway_->generate_variation(request);

    const json r = mutate_document(
        doc_id,
        {{"op", "apply_button"}, {"document_id", doc_id}, {"component_id", comp_id},
         {"button_id", button_id}, {"source_variation_id", source_id}, {"text", text}},
        [&](Document& d) {
            const auto id = abscribe::add_variation(d, comp_id, text, ButtonOrigin{button_id, source_id});
            abscribe::select_variation(d, comp_id, id);
            return json{{"variation_id", id}};
        },
        [&](PromptRegistry& registry) {
            registry.record_use(button_id);
            return json::object();
        });
    return {r["variation_id"].get<std::string>(), text};
}

AdhocResult Service::adhoc_variation(const std::string& doc_id, const std::string& comp_id,
                                     const std::string& prompt_text) {
    const std::string prompt = checked_prompt(prompt_text);
    llm::GenerationRequest request;
    std::string source_id;
    {
        std::lock_guard lock(state_mutex_);
        const Document& doc = document_locked(doc_id);
        const auto* comp = find_component(doc, comp_id);
        if (!comp) throw Error(ErrorCode::UnknownComponent, "unknown component " + comp_id);
        const auto split = split_at_component(doc, comp_id);
        auto window = llm::bound_context(split.before, split.after);
        request.instruction = prompt;
        request.target_text = comp->selected().text;
        request.context_before = std::move(window.before);
        request.context_after = std::move(window.after);
        source_id = comp->selected_id;
    }
    std::optional<std::string> label;
    try {
        label = gateway_->generate_label(prompt);
    } catch (const std::exception&) {
    }
    const std::string text = gateway_->generate_variation(request);

    json op = {{"op", "adhoc_variation"}, {"document_id", doc_id}, {"component_id", comp_id},
               {"prompt_text", prompt}, {"source_variation_id", source_id}, {"text", text}};
    if (label) op["label"] = *label;
    const json r = mutate_document(
        doc_id, op,
        [&](Document& d) {
            const auto id = abscribe::add_variation(d, comp_id, text, AdhocOrigin{prompt, source_id});
            abscribe::select_variation(d, comp_id, id);
            return json{{"variation_id", id}};
        },
        [&](PromptRegistry& registry) {
            const auto& b = registry.create(prompt, [&](std::string_view) -> std::string {
                if (!label) throw Error(ErrorCode::EmptyCompletion, "no generated label");
                return *label;
            });
            const std::string id = b.id;
            registry.record_use(id);
            return json{{"button_id", id}};
        });
    std::lock_guard lock(state_mutex_);
    return {workspace_.buttons.get(r["button_id"].get<std::string>()), r["variation_id"].get<std::string>(), text};
}

std::shared_ptr<llm::InsertSession> Service::start_insert(const std::string& doc_id, const std::string& block_id,
                                                          std::size_t offset, const std::string& prompt_text,
                                                          llm::InsertSink sink) {
    const std::string prompt = checked_prompt(prompt_text);
    llm::ContextWindow window;
    {
        std::lock_guard lock(state_mutex_);
        const Document& doc = document_locked(doc_id);
        const auto split = split_at_anchor(doc, block_id, offset);
        window = llm::bound_context(split.before, split.after);
    }
    auto session = gateway_->start_insert(window.before, window.after, prompt, std::move(sink));
    std::lock_guard lock(inserts_mutex_);
    inserts_[session->id()] = PendingInsert{doc_id, block_id, offset, session};
    return session;
}

InsertResolution Service::resolve_insert(const std::string& insert_id, InsertAction action,
                                         const std::optional<std::string>& new_prompt, llm::InsertSink sink) {
    PendingInsert pending;
    {
        std::lock_guard lock(inserts_mutex_);
        const auto it = inserts_.find(insert_id);
        if (it == inserts_.end()) throw Error(ErrorCode::UnknownInsert, "unknown insert " + insert_id);
        pending = it->second;
    }
    const auto forget = [&] {
        {
            std::lock_guard lock(inserts_mutex_);
            inserts_.erase(insert_id);
        }
        gateway_->forget_insert(insert_id);
    };

    InsertResolution resolution;
    resolution.action = action;
    switch (action) {
        case InsertAction::Discard:
            pending.session->cancel();
            forget();
            return resolution;
        case InsertAction::Revise: {
            if (!new_prompt) throw Error(ErrorCode::EmptyPrompt, "revise needs a new prompt");
            checked_prompt(*new_prompt);
            pending.session->cancel();
            {
                std::lock_guard lock(state_mutex_);
                const Document& doc = document_locked(pending.document_id);
                const Block* block = find_block(doc, pending.block_id);
                if (!block || !is_plain_position(*block, pending.offset)) {
                    throw Error(ErrorCode::AnchorLost, "the insertion point no longer exists");
                }
            }
            forget();
            resolution.revised =
                start_insert(pending.document_id, pending.block_id, pending.offset, *new_prompt, std::move(sink));
            return resolution;
        }
        case InsertAction::Accept: {
            const auto snap = pending.session->snapshot();
            if (snap.state != llm::InsertState::Complete) {
                throw Error(ErrorCode::InsertNotReady,
                            "insert is " + std::string(llm::state_name(snap.state)) + ", not complete");
            }
            mutate_document(pending.document_id,
                            {{"op", "accept_insert"}, {"document_id", pending.document_id},
                             {"block_id", pending.block_id}, {"offset", pending.offset},
                             {"text", snap.accumulated_text}},
                            [&](Document& d) {
                                const Block* block = find_block(d, pending.block_id);
                                if (!block || !is_plain_position(*block, pending.offset)) {
                                    throw Error(ErrorCode::AnchorLost, "the insertion point no longer exists");
                                }
                                insert_plain_text(d, pending.block_id, pending.offset, snap.accumulated_text);
                                return json::object();
                            });
            forget();
            resolution.inserted_text = snap.accumulated_text;
            return resolution;
        }
    }
    return resolution;
}

PendingInsertInfo Service::pending_insert(const std::string& insert_id) const {
    std::lock_guard lock(inserts_mutex_);
    const auto it = inserts_.find(insert_id);
    if (it == inserts_.end()) throw Error(ErrorCode::UnknownInsert, "unknown insert " + insert_id);
    return {insert_id, it->second.document_id, it->second.block_id, it->second.offset,
            it->second.session->snapshot()};
}

Workspace Service::snapshot() const {
    std::lock_guard lock(state_mutex_);
    return workspace_;
}

}  // namespace abscribe
