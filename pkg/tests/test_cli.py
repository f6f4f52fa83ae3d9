import json
import os

import pytest

from ctsforge.cli import main


def run(*argv):
    return main(list(argv))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture()
def gen_dir(tmp_path):
    out = tmp_path / "gen"
    assert run("gen", "--preset", "fig1", "--n", "24", "--t", "24",
               "--seed", "7", "--out", str(out)) == 0
    return out


class TestGen:
    def test_artifacts_written(self, gen_dir):
        for name in ("series.ndjson", "latent.ndjson", "generator.json", "manifest.json"):
            assert (gen_dir / name).exists()
        manifest = read_json(gen_dir / "manifest.json")
        assert set(manifest["artifacts"]) >= {"series.ndjson", "latent.ndjson", "generator.json"}
        assert "gen" in manifest["runs"]

    def test_unknown_preset_is_data_error(self, tmp_path):
        assert run("gen", "--preset", "nope", "--out", str(tmp_path / "x")) == 3

    def test_unknown_flag_is_usage_error(self, tmp_path):
        assert run("gen", "--bogus", "1") == 2

    def test_unknown_command_is_usage_error(self):
        assert run("frobnicate") == 2


class TestDeterminism:
    def pipeline(self, base, seed=3):
        gen = base / "gen"
        sym = base / "sym"
        syn = base / "syn"
        assert run("gen", "--n", "20", "--t", "24", "--seed", str(seed),
                   "--out", str(gen)) == 0
        assert run("symbolize", "--series", str(gen / "series.ndjson"),
                   "--mode", "input", "--k", "12", "--delta", "3",
                   "--seed", str(seed), "--out", str(sym)) == 0
        assert run("synthesize", "--series", str(gen / "series.ndjson"),
                   "--space", str(sym / "space.json"), "--delta", "3",
                   "--budget", "10", "--seed", str(seed), "--out", str(syn)) == 0
        hashes = {}
        for d in (gen, sym, syn):
            hashes.update({f"{d.name}/{k}": v
                           for k, v in read_json(d / "manifest.json")["artifacts"].items()})
        return hashes

    def test_identical_config_identical_hashes(self, tmp_path):
        a = self.pipeline(tmp_path / "a")
        b = self.pipeline(tmp_path / "b")
        assert a == b

    def test_different_seed_changes_series(self, tmp_path):
        a = self.pipeline(tmp_path / "a", seed=3)
        b = self.pipeline(tmp_path / "b", seed=4)
        assert a["gen/series.ndjson"] != b["gen/series.ndjson"]


class TestSymbolizeAndSynthesize:
    def test_symbol_file_schema(self, gen_dir, tmp_path):
        sym = tmp_path / "sym"
        assert run("symbolize", "--series", str(gen_dir / "series.ndjson"),
                   "--mode", "input", "--k", "8", "--delta", "3",
                   "--seed", "0", "--out", str(sym)) == 0
        space = read_json(sym / "space.json")
        assert space["mode"] == "input" and space["k"] == 8
        first = json.loads((sym / "symbols.ndjson").read_text().splitlines()[0])
        assert set(first) == {"stay_id", "delta", "symbols", "provenance"}
        assert len(first["symbols"]) == 24 // 3

    def test_synthetic_lineage_schema(self, gen_dir, tmp_path):
        sym = tmp_path / "sym"
        syn = tmp_path / "syn"
        run("symbolize", "--series", str(gen_dir / "series.ndjson"),
            "--mode", "input", "--k", "8", "--delta", "3", "--seed", "0",
            "--out", str(sym))
        assert run("synthesize", "--series", str(gen_dir / "series.ndjson"),
                   "--space", str(sym / "space.json"), "--delta", "3",
                   "--budget", "2x", "--seed", "1", "--out", str(syn)) == 0
        lines = (syn / "synthetic.ndjson").read_text().splitlines()
        first = json.loads(lines[0])
        assert {"stay_id", "T", "features", "values", "mask", "lineage"} <= set(first)
        assert {"template_stay", "fragment_stay", "symbols"} <= set(first["lineage"])
        stats = read_json(syn / "synthesis_stats.json")
        assert stats["produced"] <= stats["requested"] == 2 * 24

    def test_embd_mode_trains_embedder(self, gen_dir, tmp_path):
        sym = tmp_path / "sym"
        assert run("symbolize", "--series", str(gen_dir / "series.ndjson"),
                   "--mode", "embd", "--k", "6", "--delta", "3", "--seed", "0",
                   "--epochs", "2", "--batch", "8", "--out", str(sym)) == 0
        assert (sym / "embedder.json").exists()
        assert read_json(sym / "space.json")["mode"] == "embd"

    def test_missing_series_file_is_data_error(self, tmp_path):
        assert run("symbolize", "--series", str(tmp_path / "nope.ndjson"),
                   "--out", str(tmp_path / "sym")) == 3


class TestCutmixCommand:
    def test_writes_lineage(self, gen_dir, tmp_path):
        out = tmp_path / "cm"
        assert run("cutmix", "--series", str(gen_dir / "series.ndjson"),
                   "--budget", "5", "--seed", "2", "--out", str(out)) == 0
        first = json.loads((out / "synthetic.ndjson").read_text().splitlines()[0])
        assert first["lineage"]["method"] == "cutmix"
        assert "u" in first["lineage"]


class TestTrainAndEval:
    def test_train_reports_test_mse(self, gen_dir, tmp_path):
        out = tmp_path / "model"
        assert run("train", "--series", str(gen_dir / "series.ndjson"),
                   "--test", str(gen_dir / "series.ndjson"),
                   "--context", "12", "--horizon", "12", "--hidden", "8",
                   "--epochs", "2", "--batch", "8", "--seed", "0",
                   "--out", str(out)) == 0
        report = read_json(out / "train_report.json")
        assert "test_mse" in report and report["n_train"] == 24

    def test_eval_test1_report_schema(self, gen_dir, tmp_path):
        out = tmp_path / "t1"
        assert run("eval-test1",
                   "--train-original", str(gen_dir / "series.ndjson"),
                   "--train-synthetic", str(gen_dir / "series.ndjson"),
                   "--test", str(gen_dir / "series.ndjson"),
                   "--seeds", "2x1", "--context", "12", "--horizon", "12",
                   "--hidden", "6", "--epochs", "2", "--batch", "8",
                   "--out", str(out)) == 0
        report = read_json(out / "test1.json")
        assert report["test"] == "1"
        assert report["epsilon_hat"] is not None
        assert report["se_method"] == "plain"
        assert len(report["per_run"]) == 4

    def test_eval_test1_seed_corpus_mismatch(self, gen_dir, tmp_path):
        assert run("eval-test1",
                   "--train-original", str(gen_dir / "series.ndjson"),
                   "--train-synthetic", str(gen_dir / "series.ndjson"),
                   "--test", str(gen_dir / "series.ndjson"),
                   "--seeds", "2x3", "--out", str(tmp_path / "t1")) == 3

    def test_eval_test2_identical_sets_ratio_one(self, gen_dir, tmp_path):
        out = tmp_path / "t2"
        assert run("eval-test2",
                   "--train-original", str(gen_dir / "series.ndjson"),
                   "--test-original", str(gen_dir / "series.ndjson"),
                   "--test-synthetic", str(gen_dir / "series.ndjson"),
                   "--seeds", "0,1", "--context", "12", "--horizon", "12",
                   "--hidden", "6", "--epochs", "2", "--batch", "8",
                   "--out", str(out)) == 0
        report = read_json(out / "test2.json")
        assert report["test"] == "2"
        assert report["ratio"] == 1.0


class TestMetricsCommands:
    def test_hellinger_table(self, gen_dir, tmp_path):
        sym = tmp_path / "sym"
        run("symbolize", "--series", str(gen_dir / "series.ndjson"),
            "--mode", "input", "--k", "6", "--delta", "3", "--seed", "0",
            "--out", str(sym))
        out = tmp_path / "hell"
        assert run("metrics-hellinger",
                   "--train-symbols", str(sym / "symbols.ndjson"),
                   "--test-symbols", str(sym / "symbols.ndjson"),
                   "--synth-symbols", str(sym / "symbols.ndjson"),
                   "--out", str(out)) == 0
        table = read_json(out / "hellinger.json")["orders"]
        assert table["1"]["train_test"] == 0.0
        assert set(table) == {"1", "2", "3"}

    def test_discriminative_command(self, gen_dir, tmp_path):
        out = tmp_path / "disc"
        assert run("metrics-discriminative",
                   "--original", str(gen_dir / "series.ndjson"),
                   "--synthetic", str(gen_dir / "series.ndjson"),
                   "--runs", "2", "--seed", "0", "--out", str(out)) == 0
        report = read_json(out / "discriminative.json")
        assert 0.0 <= report["score"] <= 0.5


class TestSofaCommand:
    def test_csv_written(self, tmp_path):
        src = tmp_path / "in.ndjson"
        src.write_text(json.dumps({"stay_id": "a", "gcs_total": 12}) + "\n")
        out = tmp_path / "sofa"
        assert run("sofa", "--input", str(src), "--out", str(out)) == 0
        lines = (out / "sofa.csv").read_text().splitlines()
        assert lines[1].startswith("a,2")


class TestPcaCommand:
    def test_two_corpora_labeled(self, gen_dir, tmp_path):
        out = tmp_path / "pca"
        assert run("pca", "--input", str(gen_dir / "series.ndjson"),
                   "--label", "orig", "--parts", "values",
                   "--out", str(out)) == 0
        lines = (out / "pca.csv").read_text().splitlines()
        assert lines[0] == "id,pc1,pc2,label"
        assert lines[1].endswith(",orig")


class TestReportCommand:
    def test_aggregates_results(self, gen_dir, tmp_path, capsys):
        assert run("report", "--dir", str(gen_dir)) == 0
        assert (gen_dir / "report.json").exists()

    def test_missing_manifest_is_data_error(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run("report", "--dir", str(empty)) == 3


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n=10\nt=24\nseed=5\n")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run("gen", "--config", str(cfg), "--out", str(out_a)) == 0
        assert run("gen", "--config", str(cfg), "--n", "4", "--out", str(out_b)) == 0
        n_a = len((out_a / "series.ndjson").read_text().splitlines())
        n_b = len((out_b / "series.ndjson").read_text().splitlines())
        assert (n_a, n_b) == (10, 4)

    def test_error_json_on_stderr(self, tmp_path, capsys):
        assert run("symbolize", "--series", str(tmp_path / "missing.ndjson"),
                   "--out", str(tmp_path / "s")) == 3
        err = capsys.readouterr().err
        assert json.loads(err.strip())["exit_code"] == 3

    def test_bad_config_line_rejected(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("not a kv line\n")
        assert run("gen", "--config", str(cfg), "--out", str(tmp_path / "x")) == 3
