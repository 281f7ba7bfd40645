"""CLI tests: exit codes, emitted files, JSON schema conformance, and
flag-level determinism.  Commands run in-process through main()."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from supwma.cli import main
from supwma.geometry import StreamlineSet, read_labels, write_slp
from supwma.model import build_model, load_checkpoint, save_checkpoint
from supwma.synthdata import GenConfig, gen_dataset

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"


def validate_against(payload: dict, schema_name: str) -> None:
    import jsonschema
    from referencing import Registry, Resource

    resources = []
    for path in SCHEMA_DIR.glob("*.schema.json"):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], Resource.from_contents(schema)))
    registry = Registry().with_resources(resources)
    schema = json.loads((SCHEMA_DIR / schema_name).read_text())
    jsonschema.validate(payload, schema, registry=registry)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_corpus")
    code = main([
        "gen-data", "--out", str(out), "--seed", "9",
        "--clusters", "4", "--per-cluster", "50",
        "--confusable-pairs", "1", "--outlier-fraction", "0.1",
        "--fractions", "0.6", "0.2", "0.2",
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_model")
    code = main([
        "train", "--data", str(corpus), "--out", str(out), "--seed", "1",
        "--epochs-scl", "3", "--epochs-cls", "5",
        "--batch-scl", "64", "--batch-cls", "32",
    ])
    assert code == 0
    return out


class TestGenData:
    def test_produces_files_and_manifest(self, corpus):
        names = {p.name for p in corpus.iterdir()}
        assert {
            "train.slp", "val.slp", "test.slp",
            "train_labels.csv", "val_labels.csv", "test_labels.csv",
            "manifest.json",
        } <= names
        manifest = json.loads((corpus / "manifest.json").read_text())
        validate_against(manifest, "manifest.schema.json")

    def test_bad_fractions_exit_2(self, tmp_path):
        code = main([
            "gen-data", "--out", str(tmp_path),
            "--fractions", "0.6", "0.6", "0.2",
        ])
        assert code == 2

    def test_seed_repeat_identical_bytes(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main([
                "gen-data", "--out", str(out), "--seed", "33",
                "--clusters", "3", "--per-cluster", "10",
                "--confusable-pairs", "0",
            ])
            outs.append(out)
        for fname in ("train.slp", "test_labels.csv", "manifest.json"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_config_file_merging(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"clusters": 3, "per_cluster": 12, "confusable_pairs": 0}))
        out = tmp_path / "данные"
        code = main(["gen-data", "--out", str(out), "--config", str(cfg), "--per-cluster", "15"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["clusters"] == 3      # from file
        assert manifest["config"]["per_cluster"] == 15  # flag wins

    def test_unknown_config_key_exit_2(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"clsuters": 3}))
        assert main(["gen-data", "--out", str(tmp_path / "x"), "--config", str(cfg)]) == 2


class TestTrain:
    def test_writes_checkpoint_and_report(self, trained):
        assert (trained / "checkpoint.swc").is_file()
        report = json.loads((trained / "train_report.json").read_text())
        validate_against(report, "train_report.schema.json")
        assert len(report["phase1"]["epoch_loss"]) == 3
        assert len(report["phase2"]["epoch_loss"]) == 5

    def test_phase_cls_without_checkpoint_exit_2(self, corpus, tmp_path):
        code = main([
            "train", "--data", str(corpus), "--out", str(tmp_path),
            "--phase", "cls",
        ])
        assert code == 2

    def test_zero_scl_lr_keeps_initialization(self, corpus, tmp_path):
        out = tmp_path / "frozen"
        code = main([
            "train", "--data", str(corpus), "--out", str(out), "--seed", "2",
            "--phase", "scl", "--lr-scl", "0", "--epochs-scl", "2",
            "--batch-scl", "64",
        ])
        assert code == 0
        loaded = load_checkpoint(out / "checkpoint.swc")
        reference = build_model(loaded.arch, seed=2)
        for ours, ref in zip(loaded.all_layers(), reference.all_layers()):
            np.testing.assert_array_equal(ours.weights, ref.weights)
            np.testing.assert_array_equal(ours.bias, ref.bias)

    def test_split_phases_match_single_run(self, corpus, tmp_path, trained):
        scl_out = tmp_path / "scl"
        code = main([
            "train", "--data", str(corpus), "--out", str(scl_out), "--seed", "1",
            "--phase", "scl", "--epochs-scl", "3", "--batch-scl", "64",
        ])
        assert code == 0
        cls_out = tmp_path / "cls"
        code = main([
            "train", "--data", str(corpus), "--out", str(cls_out), "--seed", "1",
            "--phase", "cls", "--checkpoint", str(scl_out / "checkpoint.swc"),
            "--epochs-cls", "5", "--batch-cls", "32",
        ])
        assert code == 0
        assert (cls_out / "checkpoint.swc").read_bytes() == (
            trained / "checkpoint.swc"
        ).read_bytes()

    def test_missing_dataset_exit_2(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


class TestEval:
    def test_json_report_and_schema(self, corpus, trained, capsys):
        code = main([
            "eval", "--checkpoint", str(trained / "checkpoint.swc"),
            "--slp", str(corpus / "test.slp"),
            "--labels", str(corpus / "test_labels.csv"),
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        validate_against(payload, "metrics_report.schema.json")
        assert payload["cir"] is None

    def test_cir_rule_from_counts(self, trained, tmp_path, capsys):
        # craft a set predicted (25, 19, 20) for expected ids (0, 1, 2)
        bundle = load_checkpoint(trained / "checkpoint.swc")
        rng = np.random.default_rng(0)
        pool = [np.cumsum(rng.normal(scale=30, size=(12, 3)), axis=0) for _ in range(400)]
        from supwma.model import predict

        predicted = predict(bundle, StreamlineSet(pool))
        chosen = []
        for cls, want in zip((0, 1, 2), (25, 19, 20)):
            members = [pool[i] for i in np.flatnonzero(predicted == cls)[:want]]
            assert len(members) == want, "random pool too small for this class"
            chosen.extend(members)
        slp = tmp_path / "crafted.slp"
        write_slp(StreamlineSet(chosen), slp)
        labels_csv = tmp_path / "crafted.csv"
        from supwma.geometry import write_labels

        write_labels(np.zeros(len(chosen), dtype=int), labels_csv)
        expected_file = tmp_path / "expected.txt"
        expected_file.write_text("0 1 2\n")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = main([
                "eval", "--checkpoint", str(trained / "checkpoint.swc"),
                "--slp", str(slp), "--labels", str(labels_csv),
                "--expected-clusters", str(expected_file),
                "--cir-threshold", "20",
            ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["cir"] == pytest.approx(2 / 3, abs=1e-12)

    def test_missing_labels_exit_2(self, corpus, trained):
        code = main([
            "eval", "--checkpoint", str(trained / "checkpoint.swc"),
            "--slp", str(corpus / "test.slp"),
            "--labels", str(corpus / "missing.csv"),
        ])
        assert code == 2


class TestParcellate:
    def test_outputs_and_schema(self, corpus, trained, tmp_path, capsys):
        out = tmp_path / "parc"
        code = main([
            "parcellate", "--checkpoint", str(trained / "checkpoint.swc"),
            "--slp", str(corpus / "test.slp"), "--out", str(out),
        ])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        validate_against(summary, "parcellation_summary.schema.json")
        stored = json.loads((out / "summary.json").read_text())
        assert stored["streamline_count"] == summary["streamline_count"]
        predictions = read_labels(out / "predictions.csv")
        assert len(predictions) == summary["streamline_count"]
        assert sum(summary["class_counts"]) == summary["streamline_count"]

    def test_empty_input_empty_csv(self, trained, tmp_path):
        slp = tmp_path / "empty.slp"
        write_slp(StreamlineSet([]), slp)
        out = tmp_path / "parc"
        code = main([
            "parcellate", "--checkpoint", str(trained / "checkpoint.swc"),
            "--slp", str(slp), "--out", str(out),
        ])
        assert code == 0
        assert len(read_labels(out / "predictions.csv")) == 0

    def test_identity_affine_matches_plain_run(self, corpus, trained, tmp_path):
        identity = tmp_path / "identity.txt"
        identity.write_text("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n")
        plain, with_affine = tmp_path / "plain", tmp_path / "affine"
        for out, extra in ((plain, []), (with_affine, ["--affine", str(identity)])):
            code = main([
                "parcellate", "--checkpoint", str(trained / "checkpoint.swc"),
                "--slp", str(corpus / "test.slp"), "--out", str(out), *extra,
            ])
            assert code == 0
        np.testing.assert_array_equal(
            read_labels(plain / "predictions.csv"),
            read_labels(with_affine / "predictions.csv"),
        )

    def test_threads_preserve_order(self, corpus, trained, tmp_path):
        single, multi = tmp_path / "one", tmp_path / "two"
        for out, threads in ((single, "1"), (multi, "2")):
            code = main([
                "parcellate", "--checkpoint", str(trained / "checkpoint.swc"),
                "--slp", str(corpus / "test.slp"), "--out", str(out),
                "--threads", threads,
            ])
            assert code == 0
        np.testing.assert_array_equal(
            read_labels(single / "predictions.csv"),
            read_labels(multi / "predictions.csv"),
        )

    def test_bad_affine_exit_2(self, corpus, trained, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 2 3\n")
        code = main([
            "parcellate", "--checkpoint", str(trained / "checkpoint.swc"),
            "--slp", str(corpus / "test.slp"), "--out", str(tmp_path / "x"),
            "--affine", str(bad),
        ])
        assert code == 2


class TestFlops:
    def test_default_architecture(self, capsys):
        assert main(["flops"]) == 0
        assert capsys.readouterr().out.strip() == "2798144 (2.8M)"

    def test_tiny_arch(self, capsys):
        assert main(["flops", "--arch-k", "2", "--arch-n", "1"]) == 0
        out = capsys.readouterr().out
        # 1*(3*64 + 64*128 + 128*1024) + (1024*512 + 512*256 + 256*2)
        assert out.startswith(f"{139456 + 655872} ")

    def test_with_tnets_bracket(self, capsys):
        assert main(["flops", "--with-tnets"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        value = int(lines[0].split()[0])
        assert 9_000_000 <= value <= 10_200_000
        assert len(lines) == 2  # assumption note follows

    def test_usage_error_exit_2(self):
        assert main(["flops", "--arch-k", "not-a-number"]) == 2
