import json
from pathlib import Path

import numpy as np
import pytest

from topicflow.cli import bench_scaling, fit_loglog_slope, main


def test_demo_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["demo", "--seed", "7", "--out", str(a), "--slices", "3", "--docs", "24"]) == 0
    assert main(["demo", "--seed", "7", "--out", str(b), "--slices", "3", "--docs", "24"]) == 0
    for rel in ["corpus.jsonl", "cuts.json", "metrics.csv", "scene.json", "scene.svg"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_pipeline_subcommands(tmp_path):
    demo = tmp_path / "d"
    assert main(["demo", "--seed", "3", "--out", str(demo), "--slices", "3", "--docs", "24"]) == 0
    cuts = json.loads((demo / "cuts.json").read_text())
    assert len(cuts["cuts"]) == 3
    assert cuts["foci"]
    for entry in cuts["cuts"]:
        assert set(entry["score"]) == {
            "log_fit",
            "log_smooth",
            "log_likelihood",
            "log_prior",
            "total",
        }
    csv_text = (demo / "metrics.csv").read_text()
    header = csv_text.splitlines()[0]
    assert header == "t,F,S_map,S_NMI@1,S_NMI@2,S_NMI@3,S_dist@1,S_dist@2,S_dist@3"
    assert len(csv_text.strip().splitlines()) == 4
    scene = json.loads((demo / "scene.json").read_text())
    assert scene["bars"] and scene["regions"]
    assert (demo / "scene.svg").read_text().startswith("<svg")


def test_cut_without_focus(tmp_path):
    demo = tmp_path / "d"
    assert main(["demo", "--seed", "5", "--out", str(demo), "--slices", "2", "--docs", "20"]) == 0
    out = tmp_path / "plain.json"
    assert (
        main(
            [
                "cut",
                "--data",
                str(demo / "data"),
                "--focus",
                "none",
                "--out",
                str(out),
            ]
        )
        == 0
    )
    payload = json.loads(out.read_text())
    assert payload["foci"] == []
    for entry in payload["cuts"]:
        assert entry["score"]["log_likelihood"] == 0.0


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["cut", "--nope"])
    assert exc.value.code == 2


def test_bench_records_and_schema(tmp_path):
    out = tmp_path / "bench.csv"
    rc = main(
        [
            "bench",
            "--sizes",
            "1,2",
            "--m",
            "1",
            "--repeats",
            "1",
            "--base-internal",
            "10",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "I_num,m,P_num,seconds,normalized_seconds"
    rows = [line.split(",") for line in lines[1:]]
    inums = sorted({int(r[0]) for r in rows})
    assert inums == [10, 20]  # replication doubles I_num exactly
    meta = json.loads(out.with_suffix(".meta.json").read_text())
    assert meta["solver"] == "heuristic"


def test_normalized_time_formula(tmp_path):
    rows, _ = bench_scaling([1, 2], [1], 1, seed=0, base_internal=8, vocab_size=50)
    inums = sorted({r["I_num"] for r in rows})
    i_avg = sum(inums) / len(inums)
    for r in rows:
        assert r["normalized_seconds"] == pytest.approx(
            r["seconds"] * (i_avg / r["I_num"]) ** 2, rel=1e-9
        )


def test_loglog_slope_of_exact_quadratic():
    rows = [
        {"I_num": n, "m": 1, "P_num": 1, "seconds": 1e-6 * n * n, "normalized_seconds": 0.0}
        for n in (100, 200, 400, 800)
    ]
    assert fit_loglog_slope(rows) == pytest.approx(2.0, abs=1e-6)
