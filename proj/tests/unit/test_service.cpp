#include <doctest.h>

#include "abscribe/backends.hpp"
#include "abscribe/error.hpp"
#include "abscribe/service.hpp"

#include <filesystem>
#include <fstream>

using namespace abscribe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("abscribe-svc-" + ids::new_id());
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidRequest;
}

ServiceOptions options_for(const fs::path& path, std::shared_ptr<llm::TextBackend> backend = nullptr) {
    ServiceOptions o;
    o.workspace_path = path;
    o.backend = backend ? std::move(backend) : std::make_shared<llm::MockBackend>();
    return o;
}

// Fails every call while `failing` is set.
class SwitchableBackend : public llm::TextBackend {
public:
    std::atomic<bool> failing{false};
    std::string complete(const llm::CompletionCall& call) override {
        if (failing) throw Error(ErrorCode::BackendError, "switched off");
        return inner_.complete(call);
    }
    void stream(const llm::CompletionCall& call, const llm::ChunkCallback& cb) override {
        if (failing) throw Error(ErrorCode::BackendError, "switched off");
        inner_.stream(call, cb);
    }

private:
    llm::MockBackend inner_;
};

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("every mutation is written through") {
        TempDir dir;
        const auto path = dir.path / "w.json";
        Service svc(options_for(path));
        const auto doc = svc.create_document("Letter", std::string("Dear Prof. Bardley,\nThanks"));
        CHECK(load(path) == svc.snapshot());
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 5, 18});
        CHECK(load(path) == svc.snapshot());
        svc.add_variation(doc.id, c.component_id, "Dr. B", true);
        const auto reloaded = load(path);
        CHECK(reloaded == svc.snapshot());
        CHECK(flatten(reloaded.documents[0]) == svc.flatten(doc.id));
        CHECK(svc.flatten(doc.id) == "Dear Dr. B,\nThanks");
    }

    TEST_CASE("a second service on the same file is locked out") {
        TempDir dir;
        const auto path = dir.path / "w.json";
        Service first(options_for(path));
        CHECK(code_of([&] { Service second(options_for(path)); }) == ErrorCode::WorkspaceLocked);
    }

    TEST_CASE("a reopened service sees the saved state") {
        TempDir dir;
        const auto path = dir.path / "w.json";
        std::string id;
        {
            Service svc(options_for(path));
            id = svc.create_document("T", std::string("abc")).id;
            svc.create_button("make it shorter");
        }
        Service svc(options_for(path));
        CHECK(svc.flatten(id) == "abc");
        CHECK(svc.list_buttons().size() == 1);
    }

    TEST_CASE("documents CRUD") {
        Service svc(options_for({}));
        const auto a = svc.create_document("A");
        svc.create_document("B", std::string("x\ny"));
        CHECK(svc.list_documents().size() == 2);
        svc.rename_document(a.id, "A2");
        CHECK(svc.get_document(a.id).title == "A2");
        svc.delete_document(a.id);
        CHECK(svc.list_documents().size() == 1);
        CHECK(code_of([&] { svc.get_document(a.id); }) == ErrorCode::UnknownDocument);
        CHECK(code_of([&] { svc.rename_document(a.id, "x"); }) == ErrorCode::UnknownDocument);
        CHECK(svc.list_documents()[0].block_count == 2);
    }

    TEST_CASE("apply_button generates, selects and counts") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hello there, Professor Bardley!"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 31});
        const auto button = svc.create_button("make it shorter");
        CHECK(button.label == "Make It Shorter");
        const auto r = svc.apply_button(doc.id, c.component_id, button.id);
        CHECK(r.text == "MOCK[make it shorter]{Hello there, Professor Bardley!}");
        const auto comps = svc.list_components(doc.id);
        REQUIRE(comps[0].variations.size() == 2);
        CHECK(comps[0].variations[1].selected);
        const auto& origin = std::get<ButtonOrigin>(comps[0].variations[1].origin);
        CHECK(origin.button_id == button.id);
        CHECK(origin.source_variation_id == c.variation_id);
        CHECK(svc.list_buttons()[0].use_count == 1);
        CHECK(code_of([&] { svc.apply_button(doc.id, c.component_id, "nope"); }) == ErrorCode::UnknownButton);
        CHECK(code_of([&] { svc.apply_button(doc.id, "nope", button.id); }) == ErrorCode::UnknownComponent);
    }

    TEST_CASE("stacking rewrites the selected variation") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("original"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 8});
        const auto b = svc.create_button("p");
        const auto first = svc.apply_button(doc.id, c.component_id, b.id);
        const auto second = svc.apply_button(doc.id, c.component_id, b.id);
        CHECK(second.text == "MOCK[p]{MOCK[p]{original}}");
        const auto comps = svc.list_components(doc.id);
        CHECK(std::get<ButtonOrigin>(comps[0].variations[2].origin).source_variation_id == first.variation_id);
        CHECK(svc.list_buttons()[0].use_count == 2);
    }

    TEST_CASE("adhoc_variation mints a labelled button") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hi there"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 2});
        const auto r = svc.adhoc_variation(doc.id, c.component_id, "  make it formal  ");
        CHECK(r.text == "MOCK[make it formal]{Hi}");
        CHECK(r.button.label == "Make It Formal");
        CHECK(r.button.prompt_text == "make it formal");
        CHECK(r.button.use_count == 1);
        const auto comps = svc.list_components(doc.id);
        const auto& origin = std::get<AdhocOrigin>(comps[0].variations[1].origin);
        CHECK(origin.prompt_text == "make it formal");
        CHECK(origin.source_variation_id == c.variation_id);
        CHECK(svc.flatten(doc.id) == "MOCK[make it formal]{Hi} there");
        // identical prompts are not merged
        svc.adhoc_variation(doc.id, c.component_id, "make it formal");
        CHECK(svc.list_buttons().size() == 2);
        CHECK(code_of([&] { svc.adhoc_variation(doc.id, c.component_id, " "); }) == ErrorCode::EmptyPrompt);
    }

    TEST_CASE("failed generation changes nothing") {
        TempDir dir;
        const auto path = dir.path / "w.json";
        auto backend = std::make_shared<SwitchableBackend>();
        Service svc(options_for(path, backend));
        const auto doc = svc.create_document("T", std::string("Hi there"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 2});
        const auto b = svc.create_button("shorter");
        const auto before = read(path);
        backend->failing = true;
        CHECK(code_of([&] { svc.apply_button(doc.id, c.component_id, b.id); }) == ErrorCode::BackendError);
        CHECK(code_of([&] { svc.adhoc_variation(doc.id, c.component_id, "new idea"); }) == ErrorCode::BackendError);
        CHECK(read(path) == before);
        CHECK(svc.list_buttons().size() == 1);
        CHECK(svc.list_buttons()[0].use_count == 0);
        CHECK(svc.list_components(doc.id)[0].variations.size() == 1);
        // button creation survives a failed label call
        const auto fallback = svc.create_button("increase the formality of the tone significantly");
        CHECK(fallback.label == "increase the formality of the");
    }

    TEST_CASE("button editing") {
        Service svc(options_for({}));
        const auto b = svc.create_button("make it shorter", std::string("Short"));
        CHECK(b.label == "Short");
        auto edited = svc.edit_button(b.id, std::string("be concise now"), std::nullopt);
        CHECK(edited.label == "Short");
        edited = svc.edit_button(b.id, std::nullopt, std::nullopt, true);
        CHECK(edited.label == "Be Concise Now");
        CHECK(code_of([&] { svc.edit_button(b.id, std::nullopt, std::string(33, 'x')); }) == ErrorCode::LabelTooLong);
        CHECK(code_of([&] { svc.create_button("x", std::string("")); }) == ErrorCode::EmptyLabel);
        svc.delete_button(b.id);
        CHECK(svc.list_buttons().empty());
        CHECK(code_of([&] { svc.delete_button(b.id); }) == ErrorCode::UnknownButton);
    }

    TEST_CASE("deleted buttons leave provenance behind") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("abc"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 3});
        const auto b = svc.create_button("p");
        svc.apply_button(doc.id, c.component_id, b.id);
        svc.delete_button(b.id);
        const auto comps = svc.list_components(doc.id);
        CHECK(std::get<ButtonOrigin>(comps[0].variations[1].origin).button_id == b.id);
        CHECK(validate(svc.snapshot()).empty());
    }

    TEST_CASE("insert accept splices the text") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hello"));
        auto session = svc.start_insert(doc.id, doc.blocks[0].id, 5, "write a greeting");
        session->wait();
        const auto info = svc.pending_insert(session->id());
        CHECK(info.snapshot.state == llm::InsertState::Complete);
        CHECK(info.offset == 5);
        const auto r = svc.resolve_insert(session->id(), InsertAction::Accept);
        CHECK(r.inserted_text == "MOCK-INSERT[write a greeting]");
        CHECK(svc.flatten(doc.id) == "HelloMOCK-INSERT[write a greeting]");
        CHECK(code_of([&] { svc.pending_insert(session->id()); }) == ErrorCode::UnknownInsert);
    }

    TEST_CASE("insert discard leaves the document alone") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hello"));
        auto session = svc.start_insert(doc.id, doc.blocks[0].id, 0, "x");
        session->wait();
        svc.resolve_insert(session->id(), InsertAction::Discard);
        CHECK(svc.flatten(doc.id) == "Hello");
    }

    TEST_CASE("insert revise restarts at the same anchor") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hello"));
        auto session = svc.start_insert(doc.id, doc.blocks[0].id, 5, "first");
        session->wait();
        auto revised = svc.resolve_insert(session->id(), InsertAction::Revise, std::string("second")).revised;
        REQUIRE(revised);
        revised->wait();
        CHECK(code_of([&] { svc.pending_insert(session->id()); }) == ErrorCode::UnknownInsert);
        svc.resolve_insert(revised->id(), InsertAction::Accept);
        CHECK(svc.flatten(doc.id) == "HelloMOCK-INSERT[second]");
    }

    TEST_CASE("insert errors") {
        llm::MockOptions slow;
        slow.chunk_delay = std::chrono::milliseconds(30);
        Service svc(options_for({}, std::make_shared<llm::MockBackend>(slow)));
        const auto doc = svc.create_document("T", std::string("Hello world"));
        const auto bid = doc.blocks[0].id;
        CHECK(code_of([&] { svc.start_insert(doc.id, bid, 99, "x"); }) == ErrorCode::OutOfBounds);
        CHECK(code_of([&] { svc.start_insert(doc.id, "nope", 0, "x"); }) == ErrorCode::UnknownBlock);
        CHECK(code_of([&] { svc.start_insert(doc.id, bid, 0, ""); }) == ErrorCode::EmptyPrompt);
        CHECK(code_of([&] { svc.resolve_insert("nope", InsertAction::Accept); }) == ErrorCode::UnknownInsert);

        auto session = svc.start_insert(doc.id, bid, 11, "a long prompt text");
        CHECK(code_of([&] { svc.resolve_insert(session->id(), InsertAction::Accept); }) == ErrorCode::InsertNotReady);
        session->wait();
        // the anchor disappears under a new component
        svc.create_component(doc.id, Span{bid, 6, 11});
        svc.delete_range(doc.id, Span{bid, 0, 6});
        CHECK(code_of([&] { svc.resolve_insert(session->id(), InsertAction::Accept); }) == ErrorCode::AnchorLost);
        CHECK(svc.flatten(doc.id) == "world");
    }

    TEST_CASE("an offset inside a component cannot anchor an insert") {
        Service svc(options_for({}));
        const auto doc = svc.create_document("T", std::string("Hello world"));
        svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 5});
        CHECK(code_of([&] { svc.start_insert(doc.id, doc.blocks[0].id, 2, "x"); }) ==
              ErrorCode::SpanCrossesComponent);
    }

    TEST_CASE("commit observer sees each mutation once, in order") {
        std::vector<CommitRecord> commits;
        ServiceOptions o = options_for({});
        o.commit_observer = [&](const CommitRecord& r) { commits.push_back(r); };
        Service svc(o);
        const auto doc = svc.create_document("T", std::string("abc"));
        const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 1});
        CHECK_THROWS(svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 1}));
        svc.add_variation(doc.id, c.component_id, "x");
        REQUIRE(commits.size() == 3);
        CHECK(commits[0].operation["op"] == "create_document");
        CHECK(commits[0].document_id == doc.id);
        CHECK(commits[1].result["component_id"] == c.component_id);
        CHECK(commits[2].sequence == 3);
    }

    TEST_CASE("deterministic mode reproduces files byte for byte") {
        TempDir dir;
        ids::set_fixed_clock(Timestamp{1700000000000});
        auto run = [&](const fs::path& path) {
            ServiceOptions o = options_for(path);
            o.deterministic_seed = 17;
            Service svc(o);
            const auto doc = svc.create_document("T", std::string("Hello world"));
            const auto c = svc.create_component(doc.id, Span{doc.blocks[0].id, 0, 5});
            svc.adhoc_variation(doc.id, c.component_id, "make it formal");
            svc.clone_variation(doc.id, c.component_id, c.variation_id);
        };
        run(dir.path / "a.json");
        run(dir.path / "b.json");
        ids::set_fixed_clock(std::nullopt);
        CHECK(read(dir.path / "a.json") == read(dir.path / "b.json"));
    }
}
