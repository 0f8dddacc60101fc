import os

import numpy as np
import pytest

from bhin2vec import io
from bhin2vec.cli import main


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    base = tmp_path_factory.mktemp("data")
    edges = base / "edges.txt"
    types = base / "types.txt"
    code = main([
        "make-synthetic",
        "--out-edges", str(edges), "--out-types", str(types),
        "--nodes", "A=40", "--nodes", "B=40",
        "--edges", "A-B=150", "--edges", "A-A=80",
        "--seed", "3",
    ])
    assert code == 0
    return edges, types


TRAIN_FLAGS = ["--walk-length", "12", "--epochs", "2", "--window", "2",
               "--negatives", "2", "--dim", "8", "--history-every", "10"]


def run_train(edges, types, out, extra=()):
    return main(["train", "--edges", str(edges), "--types", str(types),
                 "--out", str(out), *TRAIN_FLAGS, *extra])


class TestTrainCommand:
    def test_writes_all_artifacts(self, small_dataset, tmp_path):
        edges, types = small_dataset
        out = tmp_path / "run"
        assert run_train(edges, types, out, ("--binary",)) == 0
        for name in ("embeddings.txt", "embeddings.bin", "embeddings.bin.index",
                     "p_final.csv", "p_history.csv", "manifest.txt", "dropped_nodes.txt"):
            assert (out / name).exists(), name
        names, vectors = io.load_embeddings_text(out / "embeddings.txt")
        assert vectors.shape[1] == 8
        graph_nodes = sum(1 for line in open(types, encoding="utf-8") if line.strip())
        dropped = sum(1 for line in open(out / "dropped_nodes.txt", encoding="utf-8")
                      if line.strip())
        assert len(names) == graph_nodes - dropped
        manifest = dict(
            line.strip().split(" = ", 1)
            for line in open(out / "manifest.txt", encoding="utf-8")
        )
        assert manifest["walk_mode"] == "bhin2vec"
        assert manifest["dim"] == "8"
        assert "wall_clock_sec" in manifest

    def test_missing_required_flag_exits_two(self, small_dataset, tmp_path, capsys):
        edges, _ = small_dataset
        with pytest.raises(SystemExit) as exc:
            main(["train", "--edges", str(edges), "--out", str(tmp_path / "x")])
        assert exc.value.code == 2
        assert "--types" in capsys.readouterr().err

    def test_missing_input_file_exits_two(self, small_dataset, tmp_path):
        _, types = small_dataset
        with pytest.raises(SystemExit) as exc:
            main(["train", "--edges", str(tmp_path / "nope.txt"),
                  "--types", str(types), "--out", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_unknown_flag_rejected(self, small_dataset, tmp_path):
        edges, types = small_dataset
        with pytest.raises(SystemExit) as exc:
            main(["train", "--edges", str(edges), "--types", str(types),
                  "--out", str(tmp_path / "x"), "--does-not-exist", "1"])
        assert exc.value.code == 2

    def test_baseline_mode_emits_no_history(self, small_dataset, tmp_path):
        edges, types = small_dataset
        out = tmp_path / "baseline"
        assert run_train(edges, types, out, ("--walk-mode", "neighbor_uniform")) == 0
        assert not (out / "p_history.csv").exists()
        manifest = (out / "manifest.txt").read_text()
        assert "walk_mode = neighbor_uniform" in manifest

    def test_config_file_with_flag_override(self, small_dataset, tmp_path):
        edges, types = small_dataset
        cfg = tmp_path / "run.cfg"
        cfg.write_text("dim = 4\nepochs = 1\nwalk_length = 12\nwindow = 2\nnegatives = 2\n")
        out = tmp_path / "cfgrun"
        assert main(["train", "--edges", str(edges), "--types", str(types),
                     "--out", str(out), "--config", str(cfg), "--dim", "6"]) == 0
        _, vectors = io.load_embeddings_text(out / "embeddings.txt")
        assert vectors.shape[1] == 6  # flag wins over file

    def test_unknown_config_key_exits_two(self, small_dataset, tmp_path):
        edges, types = small_dataset
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("walk_len = 10\n")
        with pytest.raises(SystemExit) as exc:
            main(["train", "--edges", str(edges), "--types", str(types),
                  "--out", str(tmp_path / "x"), "--config", str(cfg)])
        assert exc.value.code == 2

    def test_deterministic_outputs(self, small_dataset, tmp_path):
        edges, types = small_dataset
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run_train(edges, types, out_a, ("--seed", "9")) == 0
        assert run_train(edges, types, out_b, ("--seed", "9")) == 0
        for name in ("embeddings.txt", "p_history.csv", "p_final.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_no_temp_files_left(self, small_dataset, tmp_path):
        edges, types = small_dataset
        out = tmp_path / "clean"
        assert run_train(edges, types, out) == 0
        assert not [p for p in out.iterdir() if p.name.startswith(".tmp-")]


@pytest.fixture(scope="module")
def trained(small_dataset, tmp_path_factory):
    edges, types = small_dataset
    out = tmp_path_factory.mktemp("trained")
    assert run_train(edges, types, out) == 0
    return edges, types, out / "embeddings.txt"


@pytest.fixture(scope="module")
def history(small_dataset, tmp_path_factory):
    edges, types = small_dataset
    out = tmp_path_factory.mktemp("hist")
    assert run_train(edges, types, out) == 0
    return out / "p_history.csv"


class TestEvalCommands:
    def test_linkpred_writes_metrics_and_figure(self, trained, tmp_path):
        edges, types, embeddings = trained
        out = tmp_path / "lp"
        code = main(["eval-linkpred", "--edges", str(edges), "--types", str(types),
                     "--embeddings", str(embeddings), "--out", str(out),
                     "--repeats", "2", "--seed", "1"])
        assert code == 0
        assert (out / "linkpred_hit10.png").exists()
        lines = (out / "linkpred_metrics.csv").read_text().splitlines()
        assert lines[0] == "task,metric,value,std_over_repeats"
        rows = [line.split(",") for line in lines[1:]]
        tasks = {row[0] for row in rows}
        assert "linkpred:average" in tasks
        metrics = {row[1] for row in rows}
        assert metrics == {"hit_rate_at_10", "queries_evaluated", "queries_skipped"}
        for task, metric, value, std in rows:
            if metric == "hit_rate_at_10":
                assert 0.0 <= float(value) <= 1.0

    def test_linkpred_no_figure_flag(self, trained, tmp_path):
        edges, types, embeddings = trained
        out = tmp_path / "lp2"
        assert main(["eval-linkpred", "--edges", str(edges), "--types", str(types),
                     "--embeddings", str(embeddings), "--out", str(out),
                     "--no-figure"]) == 0
        assert not (out / "linkpred_hit10.png").exists()
        assert (out / "linkpred_metrics.csv").exists()

    def test_linkpred_embedding_coverage_error_exits_one(self, trained, tmp_path):
        edges, types, _ = trained
        partial = tmp_path / "partial.txt"
        partial.write_text("1 2\nA0 0.1 0.2\n")
        code = main(["eval-linkpred", "--edges", str(edges), "--types", str(types),
                     "--embeddings", str(partial), "--out", str(tmp_path / "x")])
        assert code == 1

    def test_nodeclass_metrics(self, trained, tmp_path):
        edges, types, embeddings = trained
        names, _ = io.load_embeddings_text(embeddings)
        labels = tmp_path / "labels.tsv"
        with open(labels, "w") as handle:
            for name in names:
                cls = "even" if int(name[1:]) % 2 == 0 else "odd"
                handle.write(f"{name}\t{cls}\n")
        out = tmp_path / "nc"
        code = main(["eval-nodeclass", "--embeddings", str(embeddings),
                     "--types", str(types), "--labels", str(labels),
                     "--out", str(out), "--repeats", "2", "--seed", "0"])
        assert code == 0
        assert (out / "nodeclass_f1.png").exists()
        content = (out / "nodeclass_metrics.csv").read_text()
        assert "nodeclass:A,micro_f1" in content
        assert "nodeclass:average,macro_f1" in content


class TestInspectTransitions:
    def test_tidy_csv_and_figure(self, history, tmp_path):
        out = tmp_path / "inspect"
        assert main(["inspect-transitions", "--history", str(history),
                     "--out", str(out)]) == 0
        assert (out / "transitions.png").exists()
        rows = io.read_history_csv(out / "transitions.csv")
        by_step = {}
        for epoch, step, src, tgt, prob in rows:
            by_step.setdefault((step, src), 0.0)
            by_step[(step, src)] += prob
        for total in by_step.values():  # rows stay stochastic at every step
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_source_filter(self, history, tmp_path):
        out = tmp_path / "filtered"
        assert main(["inspect-transitions", "--history", str(history),
                     "--out", str(out), "--source-type", "A"]) == 0
        rows = io.read_history_csv(out / "transitions.csv")
        assert {row[2] for row in rows} == {"A"}

    def test_unknown_source_type_exits_two(self, history, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["inspect-transitions", "--history", str(history),
                  "--out", str(tmp_path / "x"), "--source-type", "Zebra"])
        assert exc.value.code == 2

    def test_missing_history_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["inspect-transitions", "--history", str(tmp_path / "absent.csv"),
                  "--out", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_homogeneous_history_single_constant_series(self, tmp_path):
        edges = tmp_path / "edges.txt"
        types = tmp_path / "types.txt"
        n = 14
        edges.write_text("".join(f"v{i} v{(i + 1) % n}\n" for i in range(n)))
        types.write_text("".join(f"v{i} N\n" for i in range(n)))
        out = tmp_path / "homorun"
        assert run_train(edges, types, out) == 0
        inspect_out = tmp_path / "inspect"
        assert main(["inspect-transitions", "--history", str(out / "p_history.csv"),
                     "--out", str(inspect_out)]) == 0
        rows = io.read_history_csv(inspect_out / "transitions.csv")
        assert {(row[2], row[3]) for row in rows} == {("N", "N")}
        assert all(row[4] == 1.0 for row in rows)


class TestMakeSynthetic:
    def test_exact_counts_and_determinism(self, tmp_path):
        args = ["make-synthetic", "--nodes", "X=30", "--nodes", "Y=30",
                "--edges", "X-Y=90", "--seed", "5"]
        first = (tmp_path / "e1.txt", tmp_path / "t1.txt")
        second = (tmp_path / "e2.txt", tmp_path / "t2.txt")
        for e_path, t_path in (first, second):
            assert main(args + ["--out-edges", str(e_path), "--out-types", str(t_path)]) == 0
        assert first[0].read_bytes() == second[0].read_bytes()
        assert first[1].read_bytes() == second[1].read_bytes()
        assert len(first[0].read_text().splitlines()) == 90
        assert len(first[1].read_text().splitlines()) == 60

    def test_infeasible_exits_one(self, tmp_path):
        code = main(["make-synthetic", "--out-edges", str(tmp_path / "e.txt"),
                     "--out-types", str(tmp_path / "t.txt"),
                     "--nodes", "X=3", "--edges", "X-X=10", "--seed", "0"])
        assert code == 1

    def test_bad_spec_syntax_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["make-synthetic", "--out-edges", str(tmp_path / "e.txt"),
                  "--out-types", str(tmp_path / "t.txt"),
                  "--nodes", "X:3", "--edges", "X-X=2", "--seed", "0"])
        assert exc.value.code == 2
