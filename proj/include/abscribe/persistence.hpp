#pragma once

#include "abscribe/document.hpp"
#include "abscribe/prompt_registry.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace abscribe {

inline constexpr int kWorkspaceFormatVersion = 1;
inline constexpr std::string_view kDefaultWorkspacePath = "workspace.abscribe.json";

struct Workspace {
    int format_version = kWorkspaceFormatVersion;
    std::vector<Document> documents;
    PromptRegistry buttons;

    bool operator==(const Workspace&) const = default;
};

// Cross-reference and invariant problems across the whole workspace.
std::vector<std::string> validate(const Workspace& workspace);

nlohmann::json to_json(const Origin& origin);
nlohmann::json to_json(const Document& doc);
nlohmann::json to_json(const PromptButton& button);
nlohmann::json to_json(const Workspace& workspace);

// Structural decoding; throws ParseError naming the offending JSON path.
Document document_from_json(const nlohmann::json& j);
PromptButton button_from_json(const nlohmann::json& j);

// Decodes and checks version (UnsupportedVersion) and invariants
// (IntegrityError). Nothing is repaired.
Workspace workspace_from_json(const nlohmann::json& j);

// Serialized bytes exactly as save() writes them.
std::string serialize(const Workspace& workspace);
Workspace deserialize(std::string_view bytes);

struct SaveHooks {
    // Runs after the temp file is written and before the rename.
    std::function<void()> before_rename;
};

// Atomically replaces `path` with `bytes` (temp file, fsync, rename).
void write_atomically(std::string_view bytes, const std::filesystem::path& path,
                      const SaveHooks& hooks = {});

// Writes a temp file beside `path`, flushes it and renames it over `path`.
// On failure the destination is untouched and the temp file is removed.
void save(const Workspace& workspace, const std::filesystem::path& path,
          const SaveHooks& hooks = {});

Workspace load(const std::filesystem::path& path);

// Advisory exclusive lock on "<path>.lock", held for the object's lifetime.
// Throws WorkspaceLocked when another process holds it.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const std::filesystem::path& workspace_path);
    ~WorkspaceLock();
    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    int fd_ = -1;
};

// --workspace flag, then ABSCRIBE_WORKSPACE, then the default path.
std::filesystem::path resolve_workspace_path(const std::string& flag_value);

}  // namespace abscribe
