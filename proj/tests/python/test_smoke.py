import json

import pytest

import abscribe


def test_variations_and_flatten(tmp_path):
    path = tmp_path / "w.json"
    with abscribe.Service(str(path)) as svc:
        doc = svc.create_document("Letter", "Dear Prof. Bardley,\nThanks")
        block = doc["blocks"][0]["id"]
        comp = svc.create_component(doc["id"], block, 5, 18)
        vid = svc.add_variation(doc["id"], comp["component_id"], "Dr. B", select=True)
        assert svc.flatten(doc["id"]) == "Dear Dr. B,\nThanks"
        original = {comp["component_id"]: comp["variation_id"]}
        assert svc.flatten(doc["id"], original) == "Dear Prof. Bardley,\nThanks"
        listing = svc.list_components(doc["id"])
        assert [v["id"] for v in listing[0]["variations"]] == [comp["variation_id"], vid]
        snapshot = svc.snapshot()
    assert abscribe.load_workspace(str(path)) == snapshot
    assert json.loads(path.read_text())["format_version"] == 1


def test_buttons_stack_with_mock_backend():
    svc = abscribe.Service()
    doc = svc.create_document("T", "original")
    comp = svc.create_component(doc["id"], doc["blocks"][0]["id"], 0, 8)
    button = svc.create_button("p")
    svc.apply_button(doc["id"], comp["component_id"], button["id"])
    second = svc.apply_button(doc["id"], comp["component_id"], button["id"])
    assert second["text"] == "MOCK[p]{MOCK[p]{original}}"
    assert svc.list_buttons()[0]["use_count"] == 2
    adhoc = svc.adhoc_variation(doc["id"], comp["component_id"], "make it formal")
    assert adhoc["button"]["label"] == "Make It Formal"


def test_insert_streams_tokens():
    svc = abscribe.Service()
    doc = svc.create_document("T", "Hello")
    result = svc.insert(doc["id"], doc["blocks"][0]["id"], 5, "write a greeting")
    assert len(result["tokens"]) == 8
    assert "".join(result["tokens"]) == "MOCK-INSERT[write a greeting]"
    assert svc.flatten(doc["id"]) == "HelloMOCK-INSERT[write a greeting]"


def test_errors_carry_codes():
    svc = abscribe.Service()
    doc = svc.create_document("T", "Hello")
    with pytest.raises(abscribe.AbscribeError) as info:
        svc.create_component(doc["id"], doc["blocks"][0]["id"], 3, 3)
    assert info.value.code == "empty_span"
    with pytest.raises(abscribe.AbscribeError) as info:
        svc.get_document("missing")
    assert info.value.code == "unknown_document"


def test_cli_in_process(tmp_path):
    workspace = str(tmp_path / "w.json")
    code, out, _ = abscribe.run_cli(["--workspace", workspace, "--json", "doc", "new", "--title", "T"])
    assert code == 0
    assert "document_id" in json.loads(out)
    code, _, err = abscribe.run_cli(["--workspace", workspace, "--json", "doc", "show", "--doc", "nope"])
    assert code == 1
    assert json.loads(err)["code"] == "unknown_document"
