import json
import os

import pytest

from logrisk.cli import main
from logrisk.report import (
    EstimateSettings,
    config_from_json,
    build_report,
    render_heatmap,
    render_report,
    validate_report,
)
from logrisk.errors import ConfigError, OutputError


def write_config(tmp_path, doc):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return str(path)


def base_config(demo_xes_path, demo_csv_path, demo_mapping_path, out):
    return {
        "inputs": [
            {"path": os.path.abspath(demo_xes_path)},
            {"path": os.path.abspath(demo_csv_path),
             "mapping": os.path.abspath(demo_mapping_path)},
        ],
        "analyses": {
            "case_uniqueness": {"combos": [["sex"], ["sex", "age"]]},
            "trace_uniqueness": {
                "projections": ["A", "E"],
                "knowledge": ["m=1", "m=4"],
                "runs": 2,
            },
        },
        "seed": 7,
        "output_dir": out,
    }


@pytest.fixture
def config_doc(demo_xes_path, demo_csv_path, demo_mapping_path, tmp_path):
    return base_config(demo_xes_path, demo_csv_path, demo_mapping_path,
                       str(tmp_path / "out"))


def test_report_end_to_end(config_doc, tmp_path):
    code = main(["report", "--config", write_config(tmp_path, config_doc)])
    assert code == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["schema_version"] == "1"
    assert doc["exit_code"] == 0
    assert [entry["name"] for entry in doc["logs"]] == ["demo.xes", "demo.csv"]
    for entry in doc["logs"]:
        rows = entry["case_uniqueness"]["rows"]
        assert rows[0]["formatted"] == "0.333"
        assert rows[1]["formatted"] == "1.000"
        # ids are opt-in and absent by default
        assert "unique_case_ids" not in rows[0]
    heat = (tmp_path / "out" / "heatmap.csv").read_text()
    assert heat.splitlines()[0] == "log,projection,m=1,m=4"


def test_heatmap_cells_equal_report_values(config_doc, tmp_path):
    main(["report", "--config", write_config(tmp_path, config_doc)])
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    lines = (tmp_path / "out" / "heatmap.csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        fields = line.split(",")
        log_name, label = fields[0], fields[1]
        entry = next(e for e in doc["logs"] if e["name"] == log_name)
        cells = entry["trace_uniqueness"]["cells"][label]
        for k_label, value in zip(header[2:], fields[2:]):
            assert cells[k_label].get("formatted", "NA") == value


def test_report_byte_determinism_across_threads(config_doc, tmp_path, monkeypatch):
    path = write_config(tmp_path, config_doc)
    bodies = []
    for threads in ("1", "8"):
        monkeypatch.setenv("LOGRISK_THREADS", threads)
        main(["report", "--config", path])
        bodies.append((tmp_path / "out" / "report.json").read_bytes()
                      + (tmp_path / "out" / "heatmap.csv").read_bytes())
    assert bodies[0] == bodies[1]


def test_report_pseudonymizes_names_and_paths(config_doc, tmp_path):
    config_doc["pseudonymize"] = True
    main(["report", "--config", write_config(tmp_path, config_doc)])
    raw = (tmp_path / "out" / "report.json").read_text()
    doc = json.loads(raw)
    names = {entry["name"] for entry in doc["logs"]}
    assert names == {"log-1", "log-2"}
    assert "demo.xes" not in raw and "fixtures" not in raw


def test_report_unique_ids_opt_in(config_doc, tmp_path):
    config_doc["list_unique_cases"] = True
    main(["report", "--config", write_config(tmp_path, config_doc)])
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    rows = doc["logs"][0]["case_uniqueness"]["rows"]
    assert rows[0]["unique_case_ids"] == ["10"]
    assert sorted(rows[1]["unique_case_ids"]) == ["10", "11", "12"]


def test_report_population_section(config_doc, tmp_path):
    config_doc["analyses"]["case_uniqueness"]["estimate"] = {
        "model": "independence", "sampling_fraction": 0.01,
    }
    main(["report", "--config", write_config(tmp_path, config_doc)])
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    pop = doc["logs"][0]["case_uniqueness"]["population"]
    assert pop[0]["population_size"] == 300
    assert 0.0 <= pop[0]["pop_uniqueness"] <= 1.0


def test_report_per_log_errors_do_not_kill_the_run(config_doc, tmp_path):
    config_doc["inputs"].append({"path": str(tmp_path / "ghost.xes")})
    code = main(["report", "--config", write_config(tmp_path, config_doc)])
    assert code == 2
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["exit_code"] == 2
    good, good2, bad = doc["logs"]
    assert "error" not in good and "error" not in good2
    assert bad["error"]["kind"] == "data"
    # healthy inputs still analyzed in the same run
    assert good["case_uniqueness"]["rows"]


def test_report_rejects_denylisted_combo(config_doc, tmp_path):
    config_doc["analyses"]["case_uniqueness"]["denylist"] = ["age"]
    code = main(["report", "--config", write_config(tmp_path, config_doc)])
    assert code == 3


def test_config_errors_exit_3(tmp_path):
    assert main(["report", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["report", "--config", str(bad)]) == 3
    empty = write_config(tmp_path, {"inputs": [], "analyses": {}})
    assert main(["report", "--config", empty]) == 3


def test_relative_paths_resolve_against_config_dir(
        demo_xes_path, tmp_path):
    doc = {
        "inputs": [{"path": "demo.xes"}],
        "analyses": {"case_uniqueness": {"combos": [["sex"]]}},
        "output_dir": "out",
    }
    import shutil

    shutil.copy(demo_xes_path, tmp_path / "demo.xes")
    code = main(["report", "--config", write_config(tmp_path, doc)])
    assert code == 0
    assert (tmp_path / "out" / "report.json").exists()


def test_no_trace_analysis_means_no_heatmap(demo_xes_path, tmp_path):
    doc = {
        "inputs": [{"path": os.path.abspath(demo_xes_path)}],
        "analyses": {"case_uniqueness": {"combos": [["sex"]]}},
        "output_dir": str(tmp_path / "out"),
    }
    assert main(["report", "--config", write_config(tmp_path, doc)]) == 0
    assert not (tmp_path / "out" / "heatmap.csv").exists()


def test_case_section_without_case_attributes_errors(tmp_path, demo_xes_path):
    # strip case attributes by projecting them away first
    from logrisk.ingest import parse_xes
    from logrisk.projection import ProjectionSpec, transform_log, write_xes

    log = parse_xes(demo_xes_path)
    bare = transform_log(log, ProjectionSpec(include_activities=True,
                                             include_timestamps=True))
    path = tmp_path / "bare.xes"
    write_xes(bare, str(path))
    doc = {
        "inputs": [{"path": str(path)}],
        "analyses": {"case_uniqueness": {"combos": [["sex"]]}},
        "output_dir": str(tmp_path / "out"),
    }
    code = main(["report", "--config", write_config(tmp_path, doc)])
    assert code == 3
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert "no case attributes" in report["logs"][0]["error"]["message"]


def test_inspect_cli(demo_xes_path, capsys):
    assert main(["inspect", demo_xes_path]) == 0
    out = capsys.readouterr().out
    assert out.startswith("#cases 3, #activities 3")
    doc = json.loads(out.split("\n", 1)[1])
    assert doc["summary"]["cases"] == 3
    assert doc["validation"]["ok"] is True


def test_inspect_missing_file_exit_2(tmp_path, capsys):
    assert main(["inspect", str(tmp_path / "gone.xes")]) == 2


def test_case_uniqueness_cli_json(demo_xes_path, tmp_path, capsys):
    combos = tmp_path / "combos.json"
    combos.write_text(json.dumps({"combos": [["sex"]]}))
    assert main(["case-uniqueness", demo_xes_path,
                 "--combos", str(combos)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"][0]["formatted"] == "0.333"


def test_trace_uniqueness_cli_writes_outputs(demo_xes_path, tmp_path, capsys):
    out = tmp_path / "tu"
    assert main(["trace-uniqueness", demo_xes_path,
                 "--projections", "A,E", "--knowledge", "m=1,m=2",
                 "--runs", "2", "--out", str(out)]) == 0
    section = json.loads((out / "trace_uniqueness.json").read_text())
    heat = (out / "heatmap.csv").read_text()
    assert heat.splitlines()[0] == "projection,m=1,m=2"
    assert section["cells"]["A"]["m=1"]["formatted"] == "1.000"


def test_transform_cli_round_trip(demo_xes_path, tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "projection": {"preset": "A", "timestamp_resolution": "day"},
    }))
    out = tmp_path / "minimized"
    assert main(["transform", demo_xes_path, "--spec", str(spec),
                 "--out", str(out)]) == 0
    from logrisk.ingest import parse_xes

    minimized = parse_xes(str(out / "transformed.xes"))
    assert minimized.case_attribute_names() == []
    delta = json.loads((out / "transform.json").read_text())
    assert delta["timestamps"] == "day"
    assert sorted(delta["dropped_case_attributes"]) == ["age", "sex"]


def test_render_report_is_canonical(config_doc):
    config = config_from_json(config_doc)
    doc = build_report(config)
    text = render_report(doc)
    assert text.endswith("\n")
    assert json.loads(text) == doc
    assert render_report(doc) == text


def test_validate_report_rejects_broken_doc(config_doc):
    config = config_from_json(config_doc)
    doc = build_report(config)
    doc["exit_code"] = 7
    with pytest.raises(OutputError):
        validate_report(doc)


def test_estimate_settings_exclusive_sizing():
    with pytest.raises(ConfigError):
        EstimateSettings(model="independence", population_size=100,
                         sampling_fraction=0.1)
    with pytest.raises(ConfigError):
        EstimateSettings(model="independence")
    settings = EstimateSettings(model="independence", sampling_fraction=0.1)
    assert settings.size_for(50) == 500
