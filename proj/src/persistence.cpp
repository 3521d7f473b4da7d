#include "abscribe/persistence.hpp"

#include "abscribe/error.hpp"
#include "abscribe/text.hpp"

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <iterator>
#include <set>
#include <sys/file.h>
#include <unistd.h>

namespace abscribe {
namespace {

using json = nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, const std::string& what) {
    throw Error(ErrorCode::ParseError, "at " + (path.empty() ? std::string("/") : path) + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) parse_fail(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) parse_fail(path, std::string("missing field \"") + key + "\"");
    return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& path) {
    const json& v = field(obj, key, path);
    if (!v.is_string()) parse_fail(path + "/" + key, "expected a string");
    return v.get<std::string>();
}

Timestamp time_field(const json& obj, const char* key, const std::string& path) {
    const auto raw = string_field(obj, key, path);
    const auto ts = parse_rfc3339(raw);
    if (!ts) parse_fail(path + "/" + key, "not an RFC 3339 timestamp: " + raw);
    return *ts;
}

const json& array_field(const json& obj, const char* key, const std::string& path) {
    const json& v = field(obj, key, path);
    if (!v.is_array()) parse_fail(path + "/" + key, "expected an array");
    return v;
}

Origin origin_from_json(const json& j, const std::string& path) {
    const auto kind = string_field(j, "kind", path);
    if (kind == "human") return HumanOrigin{};
    if (kind == "llm_button") {
        return ButtonOrigin{string_field(j, "button_id", path),
                            string_field(j, "source_variation_id", path)};
    }
    if (kind == "llm_adhoc") {
        return AdhocOrigin{string_field(j, "prompt_text", path),
                           string_field(j, "source_variation_id", path)};
    }
    if (kind == "clone") return CloneOrigin{string_field(j, "source_variation_id", path)};
    parse_fail(path + "/kind", "unknown origin kind \"" + kind + "\"");
}

Variation variation_from_json(const json& j, const std::string& path) {
    return Variation{string_field(j, "id", path), string_field(j, "text", path),
                     origin_from_json(field(j, "origin", path), path + "/origin"),
                     time_field(j, "created_at", path)};
}

Run run_from_json(const json& j, const std::string& path) {
    const auto type = string_field(j, "type", path);
    if (type == "text") return PlainText{string_field(j, "text", path)};
    if (type != "component") parse_fail(path + "/type", "unknown run type \"" + type + "\"");
    const std::string cpath = path + "/component";
    const json& c = field(j, "component", path);
    VariationComponent comp;
    comp.id = string_field(c, "id", cpath);
    comp.selected_id = string_field(c, "selected_id", cpath);
    const json& vars = array_field(c, "variations", cpath);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        comp.variations.push_back(variation_from_json(vars[i], cpath + "/variations/" + std::to_string(i)));
    }
    return comp;
}

void check_utf8(const Workspace& ws, std::vector<std::string>& problems) {
    for (const auto& doc : ws.documents) {
        if (!text::is_valid_utf8(doc.title)) problems.push_back("document " + doc.id + " title is not UTF-8");
    }
}

void write_all(int fd, std::string_view bytes, const std::filesystem::path& tmp) {
    while (!bytes.empty()) {
        const ssize_t n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::IoError, "write to " + tmp.string() + " failed: " + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::string temp_name_suffix() {
    return ".tmp." + std::to_string(::getpid()) + "." + ids::new_id().substr(0, 8);
}

}  // namespace

json to_json(const Origin& origin) {
    return std::visit(
        [](const auto& o) -> json {
            using T = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<T, HumanOrigin>) {
                return {{"kind", "human"}};
            } else if constexpr (std::is_same_v<T, ButtonOrigin>) {
                return {{"kind", "llm_button"},
                        {"button_id", o.button_id},
                        {"source_variation_id", o.source_variation_id}};
            } else if constexpr (std::is_same_v<T, AdhocOrigin>) {
                return {{"kind", "llm_adhoc"},
                        {"prompt_text", o.prompt_text},
                        {"source_variation_id", o.source_variation_id}};
            } else {
                return {{"kind", "clone"}, {"source_variation_id", o.source_variation_id}};
            }
        },
        origin);
}

json to_json(const Document& doc) {
    json blocks = json::array();
    for (const auto& block : doc.blocks) {
        json runs = json::array();
        for (const auto& run : block.runs) {
            if (const auto* plain = std::get_if<PlainText>(&run)) {
                runs.push_back({{"type", "text"}, {"text", plain->text}});
                continue;
            }
            const auto& comp = std::get<VariationComponent>(run);
            json vars = json::array();
            for (const auto& v : comp.variations) {
                vars.push_back({{"id", v.id},
                                {"text", v.text},
                                {"origin", to_json(v.origin)},
                                {"created_at", to_rfc3339(v.created_at)}});
            }
            runs.push_back({{"type", "component"},
                            {"component",
                             {{"id", comp.id}, {"selected_id", comp.selected_id}, {"variations", std::move(vars)}}}});
        }
        blocks.push_back({{"id", block.id}, {"runs", std::move(runs)}});
    }
    return {{"id", doc.id},
            {"title", doc.title},
            {"created_at", to_rfc3339(doc.created_at)},
            {"updated_at", to_rfc3339(doc.updated_at)},
            {"blocks", std::move(blocks)}};
}

json to_json(const PromptButton& button) {
    return {{"id", button.id},
            {"label", button.label},
            {"prompt_text", button.prompt_text},
            {"created_at", to_rfc3339(button.created_at)},
            {"use_count", button.use_count}};
}

json to_json(const Workspace& workspace) {
    json docs = json::array();
    for (const auto& d : workspace.documents) docs.push_back(to_json(d));
    json buttons = json::array();
    for (const auto& b : workspace.buttons.list()) buttons.push_back(to_json(b));
    return {{"format_version", workspace.format_version},
            {"documents", std::move(docs)},
            {"buttons", std::move(buttons)}};
}

Document document_from_json(const json& j) {
    const std::string path;
    Document doc;
    doc.id = string_field(j, "id", path);
    doc.title = string_field(j, "title", path);
    doc.created_at = time_field(j, "created_at", path);
    doc.updated_at = time_field(j, "updated_at", path);
    const json& blocks = array_field(j, "blocks", path);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string bpath = "/blocks/" + std::to_string(b);
        Block block;
        block.id = string_field(blocks[b], "id", bpath);
        const json& runs = array_field(blocks[b], "runs", bpath);
        for (std::size_t r = 0; r < runs.size(); ++r) {
            block.runs.push_back(run_from_json(runs[r], bpath + "/runs/" + std::to_string(r)));
        }
        doc.blocks.push_back(std::move(block));
    }
    return doc;
}

PromptButton button_from_json(const json& j) {
    PromptButton b;
    b.id = string_field(j, "id", "");
    b.label = string_field(j, "label", "");
    b.prompt_text = string_field(j, "prompt_text", "");
    b.created_at = time_field(j, "created_at", "");
    const json& uses = field(j, "use_count", "");
    if (!uses.is_number_unsigned() && !(uses.is_number_integer() && uses.get<std::int64_t>() >= 0)) {
        parse_fail("/use_count", "expected a non-negative integer");
    }
    b.use_count = uses.get<std::uint64_t>();
    return b;
}

Workspace workspace_from_json(const json& j) {
    const json& version = field(j, "format_version", "");
    if (!version.is_number_integer()) parse_fail("/format_version", "expected an integer");
    const auto found = version.get<std::int64_t>();
    if (found != kWorkspaceFormatVersion) {
        throw Error(ErrorCode::UnsupportedVersion,
                    "unsupported workspace format version " + std::to_string(found));
    }
    Workspace ws;
    const json& docs = array_field(j, "documents", "");
    for (std::size_t i = 0; i < docs.size(); ++i) {
        try {
            ws.documents.push_back(document_from_json(docs[i]));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ParseError) throw;
            throw Error(ErrorCode::ParseError, "in /documents/" + std::to_string(i) + " " + e.what());
        }
    }
    std::vector<PromptButton> buttons;
    const json& btns = array_field(j, "buttons", "");
    for (std::size_t i = 0; i < btns.size(); ++i) {
        try {
            buttons.push_back(button_from_json(btns[i]));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ParseError) throw;
            throw Error(ErrorCode::ParseError, "in /buttons/" + std::to_string(i) + " " + e.what());
        }
    }
    ws.buttons = PromptRegistry(std::move(buttons));

    const auto problems = validate(ws);
    if (!problems.empty()) {
        std::string message = problems.front();
        if (problems.size() > 1) message += " (and " + std::to_string(problems.size() - 1) + " more)";
        throw Error(ErrorCode::IntegrityError, message);
    }
    return ws;
}

std::vector<std::string> validate(const Workspace& workspace) {
    std::vector<std::string> problems;
    if (workspace.format_version != kWorkspaceFormatVersion) {
        problems.push_back("unsupported format version " + std::to_string(workspace.format_version));
    }
    std::set<std::string, std::less<>> doc_ids;
    for (const auto& doc : workspace.documents) {
        if (!doc_ids.insert(doc.id).second) problems.push_back("duplicate document id " + doc.id);
        for (auto& p : validate(doc)) problems.push_back("document " + doc.id + ": " + p);
    }
    for (auto& p : validate(workspace.buttons)) problems.push_back(std::move(p));
    check_utf8(workspace, problems);
    return problems;
}

std::string serialize(const Workspace& workspace) {
    try {
        return to_json(workspace).dump(2) + "\n";
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IntegrityError, std::string("workspace cannot be encoded: ") + e.what());
    }
}

Workspace deserialize(std::string_view bytes) {
    json parsed;
    try {
        parsed = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::ParseError, "at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    return workspace_from_json(parsed);
}

void save(const Workspace& workspace, const std::filesystem::path& path, const SaveHooks& hooks) {
    write_atomically(serialize(workspace), path, hooks);
}

void write_atomically(std::string_view bytes, const std::filesystem::path& path,
                      const SaveHooks& hooks) {
    const std::filesystem::path tmp = path.string() + temp_name_suffix();
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::IoError, "cannot create " + tmp.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, bytes, tmp);
        if (::fsync(fd) != 0) {
            throw Error(ErrorCode::IoError, "fsync of " + tmp.string() + " failed: " + std::strerror(errno));
        }
        if (::close(fd) != 0) {
            throw Error(ErrorCode::IoError, "close of " + tmp.string() + " failed: " + std::strerror(errno));
        }
    } catch (...) {
        ::close(fd);
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw;
    }
    try {
        if (hooks.before_rename) hooks.before_rename();
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
    } catch (...) {
        std::error_code ignored;
        std::filesystem::remove(tmp, ignored);
        throw;
    }
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

Workspace load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::IoError, "cannot read " + path.string());
    return deserialize(bytes);
}

WorkspaceLock::WorkspaceLock(const std::filesystem::path& workspace_path) {
    const std::string lock_path = workspace_path.string() + ".lock";
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw Error(ErrorCode::IoError, "cannot open lock file " + lock_path + ": " + std::strerror(errno));
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        const int err = errno;
        ::close(fd_);
        fd_ = -1;
        if (err == EWOULDBLOCK) {
            throw Error(ErrorCode::WorkspaceLocked, "workspace " + workspace_path.string() +
                                                        " is in use by another process");
        }
        throw Error(ErrorCode::IoError, "cannot lock " + lock_path + ": " + std::strerror(err));
    }
}

WorkspaceLock::~WorkspaceLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

std::filesystem::path resolve_workspace_path(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("ABSCRIBE_WORKSPACE"); env && *env) return env;
    return std::filesystem::path(kDefaultWorkspacePath);
}

}  // namespace abscribe
