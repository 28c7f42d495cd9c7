import json

import pytest

from pcal.errors import ConfigError
from pcal.experiment import DEFAULT_CONFIG, load_config, run_experiment

TINY = """
[dataset]
family = "two_class_plant"
count = 2
part_count = 2
points_n = 256
seed = 100

[pretrain]
count_per_family = 0

[policy]
corrections_per_round = 5

[train]
epochs_per_round = 30

[experiment]
seeds = [0]
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_config_defaults_and_overrides(tmp_path):
    cfg = load_config(_write(tmp_path, TINY))
    assert cfg["dataset"]["family"] == "two_class_plant"
    assert cfg["dataset"]["count"] == 2
    # untouched sections fall back to defaults
    assert cfg["grow"] == DEFAULT_CONFIG["grow"]
    assert cfg["experiment"]["arms"] == ["smooth", "nosmooth"]


@pytest.mark.parametrize("text,field", [
    ("[dataset]\nfamily = 'spaceship'\n", "dataset.family"),
    ("[dataset]\ncount = 0\n", "dataset.count"),
    ("[dataset]\nbogus = 1\n", "dataset.bogus"),
    ("[bogus_section]\nx = 1\n", "bogus_section"),
    ("[policy]\ncompletion_threshold = 1.5\n", "policy.completion_threshold"),
    ("[experiment]\narms = ['smooth', 'quux']\n", "experiment.arms"),
    ("[experiment]\nseeds = []\n", "experiment.seeds"),
    ("[pretrain]\nfamilies = ['chair', 'zeppelin']\n", "pretrain.families"),
])
def test_load_config_field_errors(tmp_path, text, field):
    with pytest.raises(ConfigError) as ei:
        load_config(_write(tmp_path, text))
    assert ei.value.field == field


def test_load_config_invalid_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "not = [valid"))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    cfg = load_config(_write(tmp_path_factory.mktemp("cfg"), TINY))
    out = tmp_path_factory.mktemp("run1")
    summary = run_experiment(cfg, out)
    return cfg, out, summary


def test_run_experiment_outputs(tiny_run):
    cfg, out, summary = tiny_run
    for arm in ("smooth", "nosmooth"):
        csv_path = out / f"arm_{arm}_seed0.csv"
        assert csv_path.exists()
        lines = csv_path.read_text().splitlines()
        assert lines[0] == ("cloud_index,cloud_id,clicks,rounds,"
                            "round1_corrections,final_accuracy,final_miou,"
                            "manual_clicks")
        assert len(lines) == 1 + cfg["dataset"]["count"]
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk == summary
    assert summary["manual_mean_clicks"] > 0
    for arm in ("smooth", "nosmooth"):
        assert summary["arms"][arm]["mean_clicks"] > 0
        assert summary["arms"][arm]["mean_rounds"] >= 1
    assert (out / "summary.md").read_text().startswith("# Experiment summary")


def test_run_experiment_deterministic(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    out2 = tmp_path / "run2"
    run_experiment(cfg, out2)
    for name in ("arm_smooth_seed0.csv", "arm_nosmooth_seed0.csv",
                 "summary.json", "summary.md"):
        assert (out2 / name).read_bytes() == (out / name).read_bytes()
