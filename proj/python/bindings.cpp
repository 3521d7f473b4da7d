#include "abscribe/backends.hpp"
#include "abscribe/cli.hpp"
#include "abscribe/error.hpp"
#include "abscribe/persistence.hpp"
#include "abscribe/service.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using json = nlohmann::json;
using namespace abscribe;

namespace {

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

// Python-facing wrapper; results are plain dicts and lists.
class PyService {
public:
    PyService(const std::optional<std::string>& workspace_path, const std::string& backend,
              std::optional<std::uint64_t> deterministic_seed) {
        ServiceOptions o;
        if (workspace_path) o.workspace_path = *workspace_path;
        o.model = llm::ModelConfig::from_env();
        const auto kind = llm::parse_backend_kind(backend);
        if (!kind) throw Error(ErrorCode::InvalidConfig, "backend must be 'real' or 'mock'");
        o.model.backend = *kind;
        o.deterministic_seed = deterministic_seed;
        service_ = std::make_unique<Service>(std::move(o));
    }

    Service& svc() {
        if (!service_) throw Error(ErrorCode::InvalidRequest, "service is closed");
        return *service_;
    }
    void close() { service_.reset(); }

    py::object create_document(const std::string& title, const std::optional<std::string>& text) {
        return to_python(to_json(svc().create_document(title, text)));
    }
    py::object get_document(const std::string& doc_id) { return to_python(to_json(svc().get_document(doc_id))); }
    py::object list_documents() {
        json out = json::array();
        for (const auto& info : svc().list_documents()) out.push_back(to_json(info));
        return to_python(out);
    }
    py::object list_components(const std::string& doc_id) {
        json out = json::array();
        for (const auto& c : svc().list_components(doc_id)) out.push_back(to_json(c));
        return to_python(out);
    }
    py::object create_component(const std::string& doc_id, const std::string& block_id, std::size_t start,
                                std::size_t end) {
        const auto c = svc().create_component(doc_id, Span{block_id, start, end});
        return to_python({{"component_id", c.component_id}, {"variation_id", c.variation_id}});
    }
    py::object list_buttons() {
        json out = json::array();
        for (const auto& b : svc().list_buttons()) out.push_back(to_json(b));
        return to_python(out);
    }
    py::object create_button(const std::string& prompt_text, const std::optional<std::string>& label) {
        PromptButton b;
        {
            py::gil_scoped_release release;
            b = svc().create_button(prompt_text, label);
        }
        return to_python(to_json(b));
    }
    py::object edit_button(const std::string& button_id, const std::optional<std::string>& prompt_text,
                           const std::optional<std::string>& label, bool regenerate_label) {
        PromptButton b;
        {
            py::gil_scoped_release release;
            b = svc().edit_button(button_id, prompt_text, label, regenerate_label);
        }
        return to_python(to_json(b));
    }
    py::object apply_button(const std::string& doc_id, const std::string& comp_id, const std::string& button_id) {
        GeneratedVariation r;
        {
            py::gil_scoped_release release;
            r = svc().apply_button(doc_id, comp_id, button_id);
        }
        return to_python({{"variation_id", r.variation_id}, {"text", r.text}});
    }
    py::object adhoc_variation(const std::string& doc_id, const std::string& comp_id, const std::string& prompt) {
        std::optional<AdhocResult> r;
        {
            py::gil_scoped_release release;
            r = svc().adhoc_variation(doc_id, comp_id, prompt);
        }
        return to_python({{"button", to_json(r->button)}, {"variation_id", r->variation_id}, {"text", r->text}});
    }

    // Runs an insert to completion; accepts it when asked, otherwise discards.
    py::object insert(const std::string& doc_id, const std::string& block_id, std::size_t offset,
                      const std::string& prompt, bool accept) {
        json out;
        {
            py::gil_scoped_release release;
            std::vector<std::string> tokens;
            std::mutex tokens_mutex;
            llm::InsertSink sink;
            sink.on_token = [&](std::string_view t) {
                std::lock_guard lock(tokens_mutex);
                tokens.emplace_back(t);
            };
            auto session = svc().start_insert(doc_id, block_id, offset, prompt, std::move(sink));
            const auto snap = session->wait();
            if (snap.state != llm::InsertState::Complete) {
                svc().resolve_insert(session->id(), InsertAction::Discard);
                throw Error(ErrorCode::BackendError, snap.failure_reason);
            }
            svc().resolve_insert(session->id(), accept ? InsertAction::Accept : InsertAction::Discard);
            std::lock_guard lock(tokens_mutex);
            out = {{"insert_id", snap.id}, {"text", snap.accumulated_text}, {"tokens", tokens}, {"accepted", accept}};
        }
        return to_python(out);
    }

    py::object snapshot() { return to_python(to_json(svc().snapshot())); }

private:
    std::unique_ptr<Service> service_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Documents with in-place text variations and reusable prompt buttons";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object cls = py::module_::import("abscribe").attr("AbscribeError");
            py::object instance = cls(std::string(e.name()), std::string(e.what()));
            PyErr_SetObject(cls.ptr(), instance.ptr());
        }
    });

    py::class_<PyService>(m, "Service")
        .def(py::init<const std::optional<std::string>&, const std::string&, std::optional<std::uint64_t>>(),
             py::arg("workspace_path") = py::none(), py::arg("backend") = "mock",
             py::arg("deterministic_seed") = py::none())
        .def("close", &PyService::close)
        .def("__enter__", [](PyService& s) -> PyService& { return s; }, py::return_value_policy::reference)
        .def("__exit__", [](PyService& s, py::args) { s.close(); })
        .def("create_document", &PyService::create_document, py::arg("title") = "Untitled",
             py::arg("text") = py::none())
        .def("get_document", &PyService::get_document)
        .def("list_documents", &PyService::list_documents)
        .def("rename_document", [](PyService& s, const std::string& d, const std::string& t) {
            s.svc().rename_document(d, t);
        })
        .def("delete_document", [](PyService& s, const std::string& d) { s.svc().delete_document(d); })
        .def(
            "flatten",
            [](PyService& s, const std::string& d, const std::optional<std::map<std::string, std::string>>& a) {
                Assignment assignment;
                if (a) assignment.insert(a->begin(), a->end());
                return s.svc().flatten(d, assignment);
            },
            py::arg("document_id"), py::arg("assignment") = py::none())
        .def("list_components", &PyService::list_components)
        .def("create_component", &PyService::create_component, py::arg("document_id"), py::arg("block_id"),
             py::arg("start"), py::arg("end"))
        .def("dissolve_component",
             [](PyService& s, const std::string& d, const std::string& c) { s.svc().dissolve_component(d, c); })
        .def(
            "add_variation",
            [](PyService& s, const std::string& d, const std::string& c, const std::string& text, bool select) {
                return s.svc().add_variation(d, c, text, select);
            },
            py::arg("document_id"), py::arg("component_id"), py::arg("text"), py::arg("select") = false)
        .def("select_variation", [](PyService& s, const std::string& d, const std::string& c,
                                    const std::string& v) { s.svc().select_variation(d, c, v); })
        .def("delete_variation", [](PyService& s, const std::string& d, const std::string& c,
                                    const std::string& v) { s.svc().delete_variation(d, c, v); })
        .def("edit_variation", [](PyService& s, const std::string& d, const std::string& c, const std::string& v,
                                  const std::string& text) { s.svc().edit_variation(d, c, v, text); })
        .def("clone_variation", [](PyService& s, const std::string& d, const std::string& c,
                                   const std::string& v) { return s.svc().clone_variation(d, c, v); })
        .def("insert_block", [](PyService& s, const std::string& d, std::size_t index,
                                const std::string& text) { return s.svc().insert_block(d, index, text); })
        .def("delete_block", [](PyService& s, const std::string& d, const std::string& b) { s.svc().delete_block(d, b); })
        .def("insert_text", [](PyService& s, const std::string& d, const std::string& b, std::size_t offset,
                               const std::string& text) { s.svc().insert_text(d, b, offset, text); })
        .def("delete_range", [](PyService& s, const std::string& d, const std::string& b, std::size_t start,
                                std::size_t end) { s.svc().delete_range(d, Span{b, start, end}); })
        .def("list_buttons", &PyService::list_buttons)
        .def("create_button", &PyService::create_button, py::arg("prompt_text"), py::arg("label") = py::none())
        .def("edit_button", &PyService::edit_button, py::arg("button_id"), py::arg("prompt_text") = py::none(),
             py::arg("label") = py::none(), py::arg("regenerate_label") = false)
        .def("delete_button", [](PyService& s, const std::string& b) { s.svc().delete_button(b); })
        .def("apply_button", &PyService::apply_button)
        .def("adhoc_variation", &PyService::adhoc_variation)
        .def("insert", &PyService::insert, py::arg("document_id"), py::arg("block_id"), py::arg("offset"),
             py::arg("prompt_text"), py::arg("accept") = true)
        .def("snapshot", &PyService::snapshot);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> full = {"abscribe"};
            full.insert(full.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : full) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line interface in-process; returns (exit_code, stdout, stderr).");

    m.def("load_workspace", [](const std::string& path) { return to_python(to_json(load(path))); });
}
