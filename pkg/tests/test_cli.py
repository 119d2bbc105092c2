import json

from slide_attn.cli import main


def test_demo_prints_fig2_structure(capsys):
    assert main(["demo"]) == 0
    out = capsys.readouterr().out
    rows = [l for l in out.splitlines() if l.strip().startswith("row ") and "(u=" in l]
    assert len(rows) == 9
    assert "row 0 (u=-1,v=-1): 0 0 0 1" in out
    assert "query (0,0) window = 0 0 0 0 1 2 0 3 4" in out
    assert "match: False" not in out


def test_verify_quick_exit_code(capsys):
    assert main(["verify", "--quick"]) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_bench_flags_override_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sizes": [[5, 5, 4]], "window_sizes": [3], "heads": 4, "repeats": 3, "seed": 9}))
    out = tmp_path / "r.json"
    code = main(["bench", "--config", str(cfg), "--k", "1,3", "--heads", "2", "--impls", "im2col,dwconv_fused",
                 "--out", str(out), "--format", "json"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["config"]["seed"] == 9
    assert report["config"]["heads"] == 2
    assert [(c["impl"], c["k"]) for c in report["cells"]] == [
        ("im2col", 1), ("dwconv_fused", 1), ("im2col", 3), ("dwconv_fused", 3)
    ]


def test_bench_csv_and_sizes(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["bench", "--sizes", "4x6x4", "--k", "3", "--heads", "1", "--repeats", "3",
                 "--dtype", "f64", "--mask-padding", "--out", str(out), "--format", "csv"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "impl,H,W,C,k,heads,dtype,median_ns,p10_ns,p90_ns,checksum"
    assert len(lines) == 4 and lines[1].startswith("im2col,4,6,4,3,1,f64,")


def test_bench_stdout_table(capsys):
    assert main(["bench", "--sizes", "4x4x4", "--k", "1", "--heads", "1", "--repeats", "3", "--deformed"]) == 0
    assert "dwconv_fused" in capsys.readouterr().out


def test_bench_config_error_exit_code(capsys):
    assert main(["bench", "--sizes", "4x4x4", "--k", "2", "--heads", "1"]) == 2
    assert "window_sizes" in capsys.readouterr().err
