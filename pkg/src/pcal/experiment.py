"""Batch experiment runner: simulated annotation over a generated dataset with
paired smoothness on/off arms and the manual-painting baseline. Emits per-cloud
CSV, an aggregate JSON, and a markdown summary."""

from __future__ import annotations

import csv
import io
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import numpy as np

from .datasets import FAMILIES, generate_dataset
from .errors import ConfigError
from .oracle import OraclePolicy, manual_baseline_clicks, run_simulated_session
from .region_grow import GrowConfig
from .trainer import TrainConfig, pretrain

DEFAULT_CONFIG = {
    "dataset": {"family": "chair", "count": 20, "part_count": 3,
                "points_n": 1024, "noise_sigma": 0.01, "seed": 100},
    "pretrain": {"families": ["table", "lamp"], "count_per_family": 4,
                 "part_count": 3, "epochs": 30},
    "policy": {"seeds_per_class": 1, "corrections_per_round": 5,
               "completion_threshold": 0.95, "grow_corrections": True},
    "train": {"learning_rate": 1e-3, "epochs_per_round": 60, "alpha": 1e-3,
              "beta_schedule": [1.0, 0.0]},
    "grow": {"mode": "normal_angle", "connectivity": "knn", "knn_k": 8,
             "angle_threshold": 8.0, "max_region_fraction": 0.05},
    "experiment": {"seeds": [0, 1, 2], "arms": ["smooth", "nosmooth"],
                   "manual_baseline_k": 16},
}


def load_config(path) -> dict:
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(path), f"invalid TOML: {e}")
    cfg = {}
    for section, defaults in DEFAULT_CONFIG.items():
        cfg[section] = dict(defaults)
        for key, val in raw.get(section, {}).items():
            if key not in defaults:
                raise ConfigError(f"{section}.{key}", "unknown field")
            cfg[section][key] = val
    for section in raw:
        if section not in DEFAULT_CONFIG:
            raise ConfigError(section, "unknown section")
    _validate(cfg)
    return cfg


def _validate(cfg):
    ds = cfg["dataset"]
    if ds["family"] not in FAMILIES:
        raise ConfigError("dataset.family", f"must be one of {FAMILIES}")
    if ds["count"] < 1:
        raise ConfigError("dataset.count", "must be >= 1")
    for fam in cfg["pretrain"]["families"]:
        if fam not in FAMILIES:
            raise ConfigError("pretrain.families", f"unknown family {fam!r}")
    if not 0 < cfg["policy"]["completion_threshold"] <= 1:
        raise ConfigError("policy.completion_threshold", "must be in (0, 1]")
    for arm in cfg["experiment"]["arms"]:
        if arm not in ("smooth", "nosmooth"):
            raise ConfigError("experiment.arms", f"unknown arm {arm!r}")
    if not cfg["experiment"]["seeds"]:
        raise ConfigError("experiment.seeds", "must list at least one seed")


def _train_config(cfg, arm: str, rng_seed: int) -> TrainConfig:
    t = cfg["train"]
    schedule = t["beta_schedule"] if arm == "smooth" else [0.0]
    return TrainConfig(learning_rate=t["learning_rate"],
                       epochs_per_round=t["epochs_per_round"],
                       pretrain_epochs=cfg["pretrain"]["epochs"],
                       alpha=t["alpha"], beta_schedule=schedule,
                       rng_seed=rng_seed)


def _pretrain_base(cfg, rng_seed: int):
    pre = cfg["pretrain"]
    if not pre["families"] or pre["count_per_family"] < 1:
        return None
    dataset = []
    for fi, fam in enumerate(pre["families"]):
        dataset.extend(generate_dataset(fam, pre["count_per_family"],
                                        pre["part_count"],
                                        rng_seed=rng_seed * 7919 + fi * 1000,
                                        points_n=cfg["dataset"]["points_n"],
                                        noise_sigma=cfg["dataset"]["noise_sigma"]))
    params, _ = pretrain(dataset, _train_config(cfg, "nosmooth", rng_seed))
    return params


def _round1_corrections(state) -> int:
    return sum(1 for e in state.click_log if e.kind == "correction" and e.round == 1)


def run_experiment(cfg: dict, out_dir) -> dict:
    """Run all (seed, arm) combinations sequentially over the dataset with
    continual base-model updating; returns the aggregate summary dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = cfg["dataset"]
    grow = GrowConfig.from_dict(cfg["grow"])
    results = {arm: [] for arm in cfg["experiment"]["arms"]}
    manual_means = []

    for seed in cfg["experiment"]["seeds"]:
        dataset = generate_dataset(ds["family"], ds["count"], ds["part_count"],
                                   rng_seed=ds["seed"] + seed * 10000,
                                   points_n=ds["points_n"],
                                   noise_sigma=ds["noise_sigma"])
        manual = [manual_baseline_clicks(cloud, gt,
                                         k=cfg["experiment"]["manual_baseline_k"])
                  for cloud, gt in dataset]
        manual_means.append(float(np.mean(manual)))
        base0 = _pretrain_base(cfg, seed)
        policy = OraclePolicy(seeds_per_class=cfg["policy"]["seeds_per_class"],
                              corrections_per_round=cfg["policy"]["corrections_per_round"],
                              completion_threshold=cfg["policy"]["completion_threshold"],
                              grow_corrections=cfg["policy"]["grow_corrections"],
                              rng_seed=seed)
        for arm in cfg["experiment"]["arms"]:
            base = base0.copy() if base0 is not None else None
            tcfg = _train_config(cfg, arm, seed)
            rows = []
            for ci, (cloud, gt) in enumerate(dataset):
                report, state = run_simulated_session(cloud, gt, base, policy,
                                                      grow, tcfg)
                base = state.loop_model  # continual updating
                rows.append({"cloud_index": ci, "cloud_id": cloud.id,
                             "clicks": report.total_clicks,
                             "rounds": report.rounds_to_completion,
                             "round1_corrections": _round1_corrections(state),
                             "final_accuracy": report.final_accuracy,
                             "final_miou": report.final_miou,
                             "manual_clicks": manual[ci]})
            results[arm].append(rows)
            _write_csv(out_dir / f"arm_{arm}_seed{seed}.csv", rows)

    summary = _summarize(cfg, results, manual_means)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2,
                                                     sort_keys=True) + "\n")
    (out_dir / "summary.md").write_text(_markdown(summary))
    return summary


_CSV_FIELDS = ["cloud_index", "cloud_id", "clicks", "rounds",
               "round1_corrections", "final_accuracy", "final_miou",
               "manual_clicks"]


def _write_csv(path, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(_CSV_FIELDS)
    for r in rows:
        w.writerow([r["cloud_index"], r["cloud_id"], r["clicks"], r["rounds"],
                    r["round1_corrections"], f"{r['final_accuracy']:.6f}",
                    f"{r['final_miou']:.6f}", r["manual_clicks"]])
    Path(path).write_text(out.getvalue())


def _summarize(cfg, results, manual_means) -> dict:
    summary = {"manual_mean_clicks": float(np.mean(manual_means)), "arms": {}}
    count = cfg["dataset"]["count"]
    for arm, per_seed in results.items():
        clicks = np.array([[r["clicks"] for r in rows] for rows in per_seed],
                          dtype=float)
        r1 = np.array([[r["round1_corrections"] for r in rows] for rows in per_seed],
                      dtype=float)
        entry = {
            "mean_clicks": float(clicks.mean()),
            "mean_rounds": float(np.mean([[r["rounds"] for r in rows]
                                          for rows in per_seed])),
            "mean_round1_corrections": float(r1.mean()),
            "click_ratio_vs_manual": float(clicks.mean() / np.mean(manual_means)),
        }
        if count >= 20:
            entry["mean_clicks_clouds_1_5"] = float(clicks[:, 0:5].mean())
            entry["mean_clicks_clouds_16_20"] = float(clicks[:, 15:20].mean())
        summary["arms"][arm] = entry
    return summary


def _markdown(summary) -> str:
    lines = ["# Experiment summary", "",
             f"Manual painting baseline: {summary['manual_mean_clicks']:.2f} "
             "mean clicks per cloud.", "",
             "| arm | mean clicks | vs manual | mean rounds | round-1 corrections |",
             "|-----|------------|-----------|-------------|---------------------|"]
    for arm, e in sorted(summary["arms"].items()):
        lines.append(f"| {arm} | {e['mean_clicks']:.2f} | "
                     f"{e['click_ratio_vs_manual']:.3f} | {e['mean_rounds']:.2f} | "
                     f"{e['mean_round1_corrections']:.2f} |")
    for arm, e in sorted(summary["arms"].items()):
        if "mean_clicks_clouds_1_5" in e:
            lines.append("")
            lines.append(f"Arm `{arm}`: clouds 1-5 mean "
                         f"{e['mean_clicks_clouds_1_5']:.2f} clicks, clouds 16-20 "
                         f"mean {e['mean_clicks_clouds_16_20']:.2f} clicks.")
    return "\n".join(lines) + "\n"
