#pragma once

#include "abscribe/document.hpp"
#include "abscribe/llm_gateway.hpp"
#include "abscribe/persistence.hpp"
#include "abscribe/prompt_registry.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace abscribe {

// One committed mutation, in commit order.
struct CommitRecord {
    std::uint64_t sequence = 0;
    std::string document_id;  // empty for registry-only operations
    nlohmann::json operation;  // {"op": ..., plus arguments}
    nlohmann::json result;     // ids created by the operation
};

struct ServiceOptions {
    // Empty keeps the workspace in memory only.
    std::filesystem::path workspace_path;
    std::shared_ptr<llm::TextBackend> backend;
    llm::ModelConfig model;
    // Derives ids from the seed, the persisted bytes and the operation, so
    // two replays of the same script write identical files.
    std::optional<std::uint64_t> deterministic_seed;
    bool lock_workspace = true;
    // Called under the state lock after each successful commit.
    std::function<void(const CommitRecord&)> commit_observer;
};

struct GeneratedVariation {
    std::string variation_id;
    std::string text;
};

struct AdhocResult {
    PromptButton button;
    std::string variation_id;
    std::string text;
};

struct DocumentInfo {
    std::string id;
    std::string title;
    Timestamp created_at;
    Timestamp updated_at;
    std::size_t block_count = 0;
    std::size_t component_count = 0;
};

struct PendingInsertInfo {
    std::string insert_id;
    std::string document_id;
    std::string block_id;
    std::size_t offset = 0;
    llm::InsertSnapshot snapshot;
};

enum class InsertAction { Accept, Discard, Revise };

struct InsertResolution {
    InsertAction action = InsertAction::Accept;
    std::string inserted_text;                     // accept
    std::shared_ptr<llm::InsertSession> revised;   // revise
};

// Orchestrates documents, buttons, LLM calls and persistence for one
// workspace. Every successful mutation is written through to disk before
// the call returns. Mutations on one document are serialized by a
// per-document guard; LLM calls run outside it and are applied afterwards.
class Service {
public:
    explicit Service(ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // documents
    std::vector<DocumentInfo> list_documents() const;
    Document get_document(const std::string& doc_id) const;
    Document create_document(const std::string& title, const std::optional<std::string>& text = {});
    void rename_document(const std::string& doc_id, const std::string& title);
    void delete_document(const std::string& doc_id);
    std::string flatten(const std::string& doc_id, const Assignment& assignment = {}) const;
    std::vector<ComponentSummary> list_components(const std::string& doc_id) const;

    // components and variations
    CreatedComponent create_component(const std::string& doc_id, const Span& span);
    void dissolve_component(const std::string& doc_id, const std::string& comp_id);
    std::string add_variation(const std::string& doc_id, const std::string& comp_id,
                              const std::string& text, bool select = false);
    void select_variation(const std::string& doc_id, const std::string& comp_id,
                          const std::string& var_id);
    void delete_variation(const std::string& doc_id, const std::string& comp_id,
                          const std::string& var_id);
    void edit_variation(const std::string& doc_id, const std::string& comp_id,
                        const std::string& var_id, const std::string& text);
    std::string clone_variation(const std::string& doc_id, const std::string& comp_id,
                                const std::string& var_id);

    // plain editing
    std::string insert_block(const std::string& doc_id, std::size_t index, const std::string& text);
    void delete_block(const std::string& doc_id, const std::string& block_id);
    void insert_text(const std::string& doc_id, const std::string& block_id, std::size_t offset,
                     const std::string& text);
    void delete_range(const std::string& doc_id, const Span& span);

    // buttons
    std::vector<PromptButton> list_buttons() const;
    PromptButton create_button(const std::string& prompt_text,
                               const std::optional<std::string>& label = {});
    PromptButton edit_button(const std::string& button_id, const std::optional<std::string>& prompt_text,
                             const std::optional<std::string>& label, bool regenerate_label = false);
    void delete_button(const std::string& button_id);

    // LLM-composed operations; on any failure nothing changes.
    GeneratedVariation apply_button(const std::string& doc_id, const std::string& comp_id,
                                    const std::string& button_id);
    AdhocResult adhoc_variation(const std::string& doc_id, const std::string& comp_id,
                                const std::string& prompt_text);

    // AI insert
    std::shared_ptr<llm::InsertSession> start_insert(const std::string& doc_id,
                                                     const std::string& block_id, std::size_t offset,
                                                     const std::string& prompt_text,
                                                     llm::InsertSink sink = {});
    InsertResolution resolve_insert(const std::string& insert_id, InsertAction action,
                                    const std::optional<std::string>& new_prompt = {},
                                    llm::InsertSink sink = {});
    PendingInsertInfo pending_insert(const std::string& insert_id) const;

    Workspace snapshot() const;
    const std::filesystem::path& workspace_path() const { return options_.workspace_path; }

private:
    struct PendingInsert {
        std::string document_id;
        std::string block_id;
        std::size_t offset = 0;
        std::shared_ptr<llm::InsertSession> session;
    };

    std::shared_ptr<std::mutex> document_guard(const std::string& doc_id);
    const Document& document_locked(const std::string& doc_id) const;
    Document& document_locked(const std::string& doc_id);

    // Runs `edit` on a copy of the document under its guard, then installs
    // the copy (and `registry_edit`, applied to the live registry) and
    // persists under the state lock. Returns the operation's result json.
    nlohmann::json mutate_document(const std::string& doc_id, nlohmann::json operation,
                                   const std::function<nlohmann::json(Document&)>& edit,
                                   const std::function<nlohmann::json(PromptRegistry&)>& registry_edit = {});
    nlohmann::json mutate_workspace(nlohmann::json operation,
                                    const std::function<nlohmann::json(Workspace&)>& edit);

    void reseed_locked(const nlohmann::json& operation) const;
    void persist_locked();
    void notify_locked(const std::string& doc_id, nlohmann::json operation, nlohmann::json result);

    ServiceOptions options_;
    std::unique_ptr<WorkspaceLock> file_lock_;
    std::unique_ptr<llm::Gateway> gateway_;

    mutable std::mutex state_mutex_;
    Workspace workspace_;
    std::uint64_t persisted_hash_ = 0;
    std::uint64_t sequence_ = 0;

    std::mutex guards_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>, std::less<>> guards_;

    mutable std::mutex inserts_mutex_;
    std::map<std::string, PendingInsert, std::less<>> inserts_;
};

nlohmann::json to_json(const ComponentSummary& summary);
nlohmann::json to_json(const DocumentInfo& info);

}  // namespace abscribe
