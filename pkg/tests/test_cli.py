"""End-to-end tests of the command line verbs."""

import json

import numpy as np
import pytest

from udaselect import cli
from udaselect import data as dt
from udaselect import scoring as sc
from udaselect import trainer as tr
from udaselect.cli import EXIT_CONFIG, main

RUN_ARTIFACTS = ["config.json", "metrics.jsonl", "checkpoint.txt", "eval.json",
                 "eval.txt", "scores.tsv", "score_hist.tsv", "manifest.json"]


def gen_args(out, **kw):
    opts = {"shared": 2, "source_private": 1, "target_private": 1,
            "dim": 3, "per_class": 6, "seed": 0}
    opts.update(kw)
    args = ["gen", "--out", str(out)]
    for key, val in opts.items():
        args += [f"--{key.replace('_', '-')}", str(val)]
    return args


class TestGen:
    def test_writes_loadable_domain_pair(self, tmp_path):
        assert main(gen_args(tmp_path)) == 0
        src = dt.load_features(tmp_path / "source.features.txt", "source",
                               labeled=True)
        tgt = dt.load_features(tmp_path / "target.features.txt", "target",
                               labeled=True)
        assert src.n == 3 * 6 and src.dim == 3  # shared + source-private
        assert tgt.n == 3 * 6
        spec = json.loads((tmp_path / "labelset.json").read_text())
        assert spec["shared"] == [0, 1]
        assert spec["source_private"] == [2]
        assert spec["target_private"] == [3]
        assert spec["jaccard"] == pytest.approx(2 / 4)

    def test_same_seed_is_byte_identical(self, tmp_path):
        main(gen_args(tmp_path / "a"))
        main(gen_args(tmp_path / "b"))
        for name in ("source.features.txt", "target.features.txt"):
            assert ((tmp_path / "a" / name).read_bytes()
                    == (tmp_path / "b" / name).read_bytes())


class TestTrain:
    def test_synthetic_run_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--synthetic", "--steps", "5",
                     "--out", str(out)])
        assert code == 0
        for name in RUN_ARTIFACTS:
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert sorted(manifest["artifacts"]) == sorted(RUN_ARTIFACTS[:-1])
        cfg = tr.TrainConfig.from_dict(
            json.loads((out / "config.json").read_text()))
        assert cfg.total_steps == 5
        assert len((out / "metrics.jsonl").read_text().splitlines()) == 5

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["train", "--synthetic", "--steps", "5",
                         "--out", str(out)]) == 0
        for name in ("metrics.jsonl", "checkpoint.txt", "eval.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_missing_config_file_exits_2_without_outputs(self, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--synthetic", "--config",
                     str(tmp_path / "absent.json"), "--out", str(out)])
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_unknown_config_key_rejected(self, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["train", "--synthetic", "--config", str(bad),
                     "--out", str(tmp_path / "run")]) == EXIT_CONFIG

    def test_config_file_feeds_training(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"total_steps": 3, "gamma": 0.25}))
        out = tmp_path / "run"
        assert main(["train", "--synthetic", "--config", str(cfg_file),
                     "--out", str(out)]) == 0
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["total_steps"] == 3 and cfg["gamma"] == 0.25

    def test_flag_overrides_beat_config_file(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"total_steps": 3}))
        out = tmp_path / "run"
        assert main(["train", "--synthetic", "--config", str(cfg_file),
                     "--steps", "4", "--out", str(out)]) == 0
        assert json.loads((out / "config.json").read_text())["total_steps"] == 4

    def test_file_inputs_require_all_three_paths(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "run")]) == EXIT_CONFIG

    def test_trains_from_generated_feature_files(self, tmp_path):
        main(gen_args(tmp_path / "data"))
        out = tmp_path / "run"
        code = main(["train",
                     "--source", str(tmp_path / "data/source.features.txt"),
                     "--target", str(tmp_path / "data/target.features.txt"),
                     "--labelset", str(tmp_path / "data/labelset.json"),
                     "--steps", "5", "--batch-size", "4", "--out", str(out)])
        assert code == 0
        assert (out / "checkpoint.txt").exists()

    def test_default_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("UDASELECT_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["train", "--synthetic", "--steps", "2",
                     "--name", "probe"]) == 0
        assert (tmp_path / "root" / "probe" / "manifest.json").exists()


class TestEvalVerb:
    def test_eval_of_saved_checkpoint(self, tmp_path, capsys):
        main(gen_args(tmp_path / "data"))
        run = tmp_path / "run"
        main(["train",
              "--source", str(tmp_path / "data/source.features.txt"),
              "--target", str(tmp_path / "data/target.features.txt"),
              "--labelset", str(tmp_path / "data/labelset.json"),
              "--steps", "5", "--batch-size", "4", "--out", str(run)])
        out_json = tmp_path / "eval.json"
        code = main(["eval", "--checkpoint", str(run / "checkpoint.txt"),
                     "--target", str(tmp_path / "data/target.features.txt"),
                     "--labelset", str(tmp_path / "data/labelset.json"),
                     "--out", str(out_json)])
        assert code == 0
        assert "average class accuracy" in capsys.readouterr().out
        payload = json.loads(out_json.read_text())
        assert 0.0 <= payload["average_class_accuracy"] <= 1.0

    def test_eval_matches_train_report(self, tmp_path):
        main(gen_args(tmp_path / "data"))
        run = tmp_path / "run"
        main(["train",
              "--source", str(tmp_path / "data/source.features.txt"),
              "--target", str(tmp_path / "data/target.features.txt"),
              "--labelset", str(tmp_path / "data/labelset.json"),
              "--steps", "5", "--batch-size", "4", "--out", str(run)])
        out_json = tmp_path / "eval.json"
        main(["eval", "--checkpoint", str(run / "checkpoint.txt"),
              "--target", str(tmp_path / "data/target.features.txt"),
              "--labelset", str(tmp_path / "data/labelset.json"),
              "--out", str(out_json)])
        assert (json.loads(out_json.read_text())
                == json.loads((run / "eval.json").read_text()))

    def test_missing_checkpoint_exits_2(self, tmp_path):
        main(gen_args(tmp_path / "data"))
        assert main(["eval", "--checkpoint", str(tmp_path / "absent.txt"),
                     "--target", str(tmp_path / "data/target.features.txt"),
                     "--labelset", str(tmp_path / "data/labelset.json"),
                     ]) == EXIT_CONFIG


def read_table(path):
    lines = path.read_text().splitlines()
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


class TestSweep:
    def test_empty_value_list_rejected(self, tmp_path):
        assert main(["sweep", "--param", "w0", "--values", "",
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_value_outside_scheme_range_rejected(self, tmp_path):
        assert main(["sweep", "--param", "w0", "--values", "2.5",
                     "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_w0_sweep_table(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--param", "w0", "--values", "0.5,1.5",
                     "--seeds", "1", "--steps", "4", "--out", str(out)])
        assert code == 0
        header, rows = read_table(out / "sweep.tsv")
        assert header == ["variant", "seed0", "mean", "std"]
        assert [r[0] for r in rows] == ["w0_0.5", "w0_1.5"]
        for r in rows:
            assert 0.0 <= float(r[-2]) <= 1.0

    def test_sweep_varies_exactly_one_parameter(self, tmp_path):
        out = tmp_path / "sweep"
        main(["sweep", "--param", "w_beta", "--values", "0.4,1.2",
              "--seeds", "1", "--steps", "4", "--out", str(out)])
        cfgs = [json.loads((out / f"w_beta_{v}_seed0" / "config.json").read_text())
                for v in ("0.4", "1.2")]
        diff = {k for k in cfgs[0] if cfgs[0][k] != cfgs[1][k]}
        assert diff == {"w_beta"}


class TestAblate:
    def test_scoring_ablation_covers_all_schemes(self, tmp_path):
        out = tmp_path / "ablate"
        code = main(["ablate", "--ablation", "scoring", "--seeds", "1",
                     "--steps", "4", "--out", str(out)])
        assert code == 0
        header, rows = read_table(out / "ablation.tsv")
        assert [r[0] for r in rows] == [f"scheme_{s}" for s in cli.SCHEME_ABLATION]

    def test_scheme_variants_use_native_threshold_ranges(self):
        cfg = cli.benchmark_config()
        for scheme in sc.SCHEMES:
            variant = cli.scheme_defaults(cfg, scheme)
            lo, hi = sc.SCHEME_RANGES[scheme]
            assert lo <= variant.w0 <= hi
            assert lo <= variant.w_beta <= hi
            assert lo <= variant.w_alpha_start <= hi
        assert cli.scheme_defaults(cfg, "ours").w0 == cfg.w0

    def test_pseudo_ablation_rows(self, tmp_path):
        out = tmp_path / "ablate"
        main(["ablate", "--ablation", "pseudo", "--seeds", "1",
              "--steps", "4", "--out", str(out)])
        _, rows = read_table(out / "ablation.tsv")
        assert [r[0] for r in rows] == ["full", "no_pseudo_labels",
                                       "w_alpha_0", "static_w_alpha_1.2"]

    def test_diversity_ablation_rows(self, tmp_path):
        out = tmp_path / "ablate"
        main(["ablate", "--ablation", "diversity", "--seeds", "1",
              "--steps", "4", "--out", str(out)])
        _, rows = read_table(out / "ablation.tsv")
        assert [r[0] for r in rows] == ["diversity_off", "diversity_target_only",
                                       "diversity_both"]
