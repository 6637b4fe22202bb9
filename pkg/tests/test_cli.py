import csv
import json
import logging
import os

import pytest

from rais.cli import main, parse_k_list, rank_reports
from rais.numcore import ConfigError

RUN_YAML = "epochs: 2\naux_labels: 10\ncapacity: 64\nseeds: [0]\n"


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "bench.yaml"
    cfg.write_text("train_size: 150\ndev_size: 60\neval_size: 60\ninput_dim: 8\n")
    assert main(["gen-data", "--config", str(cfg), "--out", str(root / "data")]) == 0
    return root


def _run_yaml(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(RUN_YAML + "input_dim: 8\n")
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestGenData:
    def test_files_and_manifest(self, data_dir):
        d = data_dir / "data"
        names = sorted(os.listdir(d))
        assert names == sorted([f"experience_{i}.txt" for i in range(5)] + ["manifest.json"])
        meta = json.loads((d / "manifest.json").read_text())
        assert meta["seed"] == 0 and len(meta["spec_hash"]) == 64
        assert [f["file"] for f in meta["files"]] == [f"experience_{i}.txt" for i in range(5)]

    def test_rerun_byte_identical(self, data_dir, tmp_path):
        cfg = data_dir / "bench.yaml"
        assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
        for name in os.listdir(data_dir / "data"):
            assert (data_dir / "data" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    @pytest.mark.parametrize("text", ["train_size: [1, 2\n", "bogus_key: 3\n", "fake_fractions: [0.5]\n",
                                      "nested:\n  a: 1\n"])
    def test_corrupt_config(self, tmp_path, capsys, text):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text(text)
        assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "config error" in capsys.readouterr().err


class TestRun:
    def test_csv_shape_and_determinism(self, data_dir, tmp_path):
        cfg = _run_yaml(tmp_path)
        for out in ("a", "b"):
            assert main(["run", "--config", cfg, "--preset", "rais", "--preset", "finetune",
                         "--data", str(data_dir / "data"), "--out", str(tmp_path / out)]) == 0
        rows = _rows(tmp_path / "a" / "results.csv")
        assert rows[0] == ["method", "sampling", "buffer", "E0", "E1", "E2", "E3", "E4", "avg_eer"]
        assert [r[0] for r in rows[1:]] == ["rais", "finetune"]
        assert rows[1][2] == "64" and rows[2][2] == "-" and rows[2][1] == "-"
        assert all(" ± " in c for r in rows[1:] for c in r[3:])
        for name in ("rais.json", "finetune.json"):
            a = json.loads((tmp_path / "a" / name).read_text())
            b = json.loads((tmp_path / "b" / name).read_text())
            a.pop("wall_clock_s"), b.pop("wall_clock_s")
            assert a == b
            assert a["config"]["seeds"] == [0] and a["data"]["spec_hash"]
        assert (tmp_path / "a" / "rais.csv").read_bytes() == (tmp_path / "b" / "rais.csv").read_bytes()

    def test_missing_data_exit_2(self, tmp_path):
        assert main(["run", "--preset", "rais", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2

    def test_corrupt_data_exit_2(self, data_dir, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        (d / "manifest.json").write_text(json.dumps({"files": [{"file": "x.txt"}]}))
        (d / "x.txt").write_text("garbage\n")
        assert main(["run", "--preset", "rais", "--data", str(d), "--out", str(tmp_path)]) == 2

    def test_config_error_exit_1(self, data_dir, tmp_path):
        cfg = tmp_path / "r.yaml"
        cfg.write_text("epochz: 3\n")
        assert main(["run", "--config", str(cfg), "--data", str(data_dir / "data"), "--out", str(tmp_path)]) == 1
        cfg.write_text("method: finetune\ncapacity: 5\n")
        assert main(["run", "--config", str(cfg), "--data", str(data_dir / "data"), "--out", str(tmp_path)]) == 1

    def test_dimension_mismatch_is_config_error(self, data_dir, tmp_path):
        cfg = tmp_path / "r.yaml"
        cfg.write_text(RUN_YAML)  # input_dim left at 40, data has 8
        assert main(["run", "--config", str(cfg), "--preset", "rais", "--data", str(data_dir / "data"),
                     "--out", str(tmp_path)]) == 1

    def test_report_regenerates_csv(self, data_dir, tmp_path):
        cfg = _run_yaml(tmp_path)
        main(["run", "--config", cfg, "--preset", "er_random", "--data", str(data_dir / "data"),
              "--out", str(tmp_path)])
        out = tmp_path / "again.csv"
        assert main(["report", "--result", str(tmp_path / "er_random.json"), "--out", str(out)]) == 0
        assert out.read_bytes() == (tmp_path / "er_random.csv").read_bytes()
        out2 = tmp_path / "rerun.csv"
        assert main(["report", "--result", str(tmp_path / "er_random.json"), "--data", str(data_dir / "data"),
                     "--out", str(out2)]) == 0
        assert out2.read_bytes() == out.read_bytes()
        assert main(["report", "--result", str(tmp_path / "missing.json")]) == 2


class TestSweepK:
    def test_rows_and_dedup(self, data_dir, tmp_path, caplog):
        with caplog.at_level(logging.WARNING, logger="rais"):
            assert main(["sweep-k", "--config", _run_yaml(tmp_path), "--k", "4,2,4",
                         "--data", str(data_dir / "data"), "--out", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "sweep_k.csv")
        assert rows[0] == ["K", "avg_eer_mean", "avg_eer_std", "seeds"]
        assert [r[0] for r in rows[1:]] == ["4", "2"]
        assert "duplicate K=4" in caplog.text

    def test_parse(self):
        assert parse_k_list("10") == [10]
        assert len(parse_k_list("10,20,30,40,50,60,70,80,90,100")) == 10
        for bad in ("3", "10,15", "", "a"):
            with pytest.raises(ConfigError):
                parse_k_list(bad)

    def test_odd_exit_1(self, data_dir, tmp_path):
        assert main(["sweep-k", "--k", "10,11", "--data", str(data_dir / "data"), "--out", str(tmp_path)]) == 1


def _fake_report(method, avg):
    return {"method": method, "sampling": "x", "buffer": 8, "n_experiences": 1,
            "aggregate": {"avg_eer_mean": avg, "avg_eer_std": 0.0, "eer_mean": [avg], "eer_std": [0.0]}}


class TestCompare:
    def test_ranking(self, tmp_path, capsys):
        for m, v in (("b", 0.03), ("a", 0.02), ("c", 0.05)):
            (tmp_path / f"{m}.json").write_text(json.dumps(_fake_report(m, v)))
        (tmp_path / "junk.json").write_text("{not json")
        (tmp_path / "partial.json").write_text(json.dumps({"method": "z"}))
        assert main(["compare", "--results", str(tmp_path)]) == 0
        rows = _rows(tmp_path / "compare.csv")
        assert [r[1] for r in rows[1:]] == ["a", "b", "c"]
        assert [r[5] for r in rows[1:]] == ["best", "second", ""]

    def test_tie_by_name(self):
        reps = [_fake_report("zeta", 0.1), _fake_report("alpha", 0.1)]
        assert [r["method"] for r in rank_reports(reps)] == ["alpha", "zeta"]

    def test_empty_dir_exit_2(self, tmp_path):
        assert main(["compare", "--results", str(tmp_path)]) == 2
        assert main(["compare", "--results", str(tmp_path / "missing")]) == 2


def test_ablate(data_dir, tmp_path):
    assert main(["ablate", "--config", _run_yaml(tmp_path), "--data", str(data_dir / "data"),
                 "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "ablation.csv")
    assert [r[0] for r in rows[1:]] == ["rais", "rais_no_aagm", "rais_no_ais", "rais_no_dl"]


def test_written_files_are_world_readable(data_dir):
    for name in os.listdir(data_dir / "data"):
        assert os.stat(data_dir / "data" / name).st_mode & 0o044 == 0o044
