"""End-to-end experiment orchestration: simulate -> build-dataset ->
train (both modes) -> eval -> handoff-eval.

Every stage reads its inputs from disk and writes its outputs to disk, so
the in-process pipeline and the stage-by-stage CLI produce identical
artifacts.  Nothing is cached: each run recomputes every stage into the
output directory and records the config hash in the manifest, so a
changed config can never silently reuse stale artifacts.  Output CSVs
carry no timestamps; reruns with the same config are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import DatasetConfig, ExperimentConfig, ScenarioConfig, TrainConfig
from .embedding import BeamEmbeddingTable, encode_dataset
from .errors import BeamsightError, DataError
from .handoff import HandoffReport, evaluate_handoff
from .metrics import MetricReport, report
from .pipeline import (
    balance_and_split,
    build_seed,
    collect_windows,
    conjugate_pairs,
    read_manifest,
    read_pairs,
    read_split,
    read_trace,
    write_dataset,
    write_trace,
)
from .predictor import model_from_checkpoint, save_checkpoint, train_model
from .scene import build_world, step_world

log = logging.getLogger(__name__)


class StageFailure(BeamsightError):
    """A pipeline stage failed; earlier stages' outputs are left intact."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def simulate_stage(cfg: ScenarioConfig, frames: int, out_dir) -> Path:
    """Roll the world forward and write the trace."""
    if frames < 1:
        raise DataError("frames must be >= 1")
    worlds = [build_world(cfg)]
    for _ in range(frames - 1):
        worlds.append(step_world(worlds[-1], cfg.dt))
    out = Path(out_dir)
    write_trace(out, cfg, worlds)
    log.info("simulated %d frames into %s", frames, out)
    return out


def build_dataset_stage(trace_dir, out_dir, ds_cfg: DatasetConfig) -> dict:
    """Seed pass, windowing, balancing/splitting, conjugate pairs."""
    scenario, worlds = read_trace(trace_dir)
    streams = build_seed(worlds, scenario)
    if not streams:
        raise DataError("trace produced no visible user streams")
    windows = collect_windows(streams, ds_cfg.observed, ds_cfg.future)
    everything = windows[1] + windows[2]
    if not everything:
        raise DataError("trace too short: no full observation windows")
    train, val = balance_and_split(everything, ds_cfg.quota,
                                   ds_cfg.split_fraction, ds_cfg.seed)
    train_keys = frozenset(s.key for s in train.samples)
    pairs = conjugate_pairs(windows[1], windows[2], ds_cfg.overlap_cameras,
                            exclude_keys=train_keys)

    def histogram(samples):
        counts: dict[str, int] = {}
        for s in samples:
            key = f"camera{s.sequence.camera_id}_label{s.label.status}"
            counts[key] = counts.get(key, 0) + 1
        return dict(sorted(counts.items()))

    manifest = {
        "observed": ds_cfg.observed,
        "future": ds_cfg.future,
        "quota": ds_cfg.quota,
        "seed": ds_cfg.seed,
        "split_fraction": ds_cfg.split_fraction,
        "overlap_cameras": list(ds_cfg.overlap_cameras),
        "codebook": {
            "elements": scenario.elements,
            "beams": scenario.beams,
            "subcarriers": scenario.subcarriers,
            "cyclic_prefix": scenario.cyclic_prefix,
            "sample_time": scenario.sample_time,
            "carrier_hz": scenario.carrier_hz,
        },
        "scenario_seed": scenario.seed,
        "counts": {
            "windows": len(everything),
            "train": histogram(train.samples),
            "val": histogram(val.samples),
            "pairs": len(pairs),
            "pairs_category1": sum(1 for p in pairs if p.category == 1),
            "pairs_category2": sum(1 for p in pairs if p.category == 2),
        },
    }
    write_dataset(out_dir, train, val, pairs, manifest)
    log.info("dataset: %d train, %d val, %d conjugate pairs",
             len(train.samples), len(val.samples), len(pairs))
    return manifest


def train_stage(dataset_dir, mode: str, cfg: TrainConfig, out_ckpt,
                history_csv=None) -> dict:
    """Train one mode on a dataset directory and save the best checkpoint."""
    if mode not in ("bimodal", "beam-only"):
        raise DataError(f"unknown mode {mode!r}")
    manifest = read_manifest(dataset_dir)
    train_ds = read_split(dataset_dir, "train")
    val_ds = read_split(dataset_dir, "val")
    if not train_ds.samples:
        raise DataError("empty dataset")
    table = BeamEmbeddingTable(manifest["codebook"]["beams"], cfg.embed_dim,
                               cfg.table_seed)
    train_x, train_y = encode_dataset(train_ds.samples, table, mode)
    val_x, val_y = encode_dataset(val_ds.samples, table, mode)
    result = train_model(train_x, train_y, val_x, val_y, cfg)

    meta = {
        "mode": mode,
        "input_dim": cfg.embed_dim,
        "embed_dim": cfg.embed_dim,
        "hidden": cfg.hidden,
        "layers": cfg.layers,
        "classes": 2,
        "table_seed": cfg.table_seed,
        "n_beams": manifest["codebook"]["beams"],
        "observed": manifest["observed"],
        "future": manifest["future"],
        "best_epoch": result.best_epoch,
        "best_val_top1": result.best_val_top1,
        "train_config": dataclasses.asdict(cfg),
    }
    save_checkpoint(out_ckpt, result.params, meta)
    if history_csv is not None:
        _write_csv(history_csv,
                   ["epoch", "train_loss", "train_top1", "val_loss", "val_top1"],
                   [[r["epoch"], r["train_loss"], r["train_top1"],
                     r["val_loss"], r["val_top1"]] for r in result.history])
    log.info("trained %s: best val top-1 %.4f at epoch %d",
             mode, result.best_val_top1, result.best_epoch)
    return meta


def _load_model_and_table(ckpt_path):
    model, meta = model_from_checkpoint(ckpt_path)
    table = BeamEmbeddingTable(meta["n_beams"], meta["embed_dim"],
                               meta["table_seed"])
    return model, meta, table


def eval_stage(ckpt_path, dataset_dir, out_csv) -> tuple[MetricReport, dict]:
    """Evaluate a checkpoint on the validation split; write CSV tables.

    The summary lands at ``out_csv``; the confusion, per-camera, and
    per-instance tables become sibling files with suffixed names.
    """
    model, meta, table = _load_model_and_table(ckpt_path)
    val_ds = read_split(dataset_dir, "val")
    if not val_ds.samples:
        raise DataError("empty validation split")
    x, y = encode_dataset(val_ds.samples, table, meta["mode"])
    preds = model.predict(x)
    rep, cm = report(preds, val_ds.samples, future=meta.get("future", 5))

    out_csv = Path(out_csv)
    _write_csv(out_csv, ["metric", "value"], [
        ["mode", meta["mode"]],
        ["n_samples", rep.n_samples],
        ["top1", rep.top1],
        ["precision", rep.precision],
        ["recall", rep.recall],
        ["pivotal_accuracy", rep.pivotal_accuracy],
    ])
    stem = out_csv.with_suffix("")
    _write_csv(Path(f"{stem}_confusion.csv"),
               ["tp", "fp", "tn", "fn", "total", "accuracy"],
               [[cm.tp, cm.fp, cm.tn, cm.fn, cm.total, cm.accuracy]])
    _write_csv(Path(f"{stem}_per_camera.csv"),
               ["camera", "pivotal_accuracy", "pivotal_count"],
               [[cam, rep.per_camera_pivotal[cam], rep.per_camera_counts[cam]]
                for cam in sorted(rep.per_camera_pivotal)])
    _write_csv(Path(f"{stem}_per_instance.csv"),
               ["blockage_instance", "accuracy", "count"],
               [[i, rep.per_instance[i], rep.per_instance_counts[i]]
                for i in sorted(rep.per_instance)])
    return rep, meta


def handoff_eval(ckpt1_path, ckpt2_path, pairs_path) -> HandoffReport:
    """Run the two per-basestation models over the conjugate pairs.

    An empty pairs file yields an all-undefined report (n/a categories),
    mirroring the per-category degenerate case.
    """
    pairs = read_pairs(pairs_path)
    if not pairs:
        return evaluate_handoff(lambda s: 0, lambda s: 0, pairs)
    model1, meta1, table1 = _load_model_and_table(ckpt1_path)
    model2, meta2, table2 = _load_model_and_table(ckpt2_path)

    def batch_predict(model, meta, table, samples):
        x, _ = encode_dataset(samples, table, meta["mode"])
        preds = model.predict(x)
        return {s.key: int(p) for s, p in zip(samples, preds)}

    preds1 = batch_predict(model1, meta1, table1, [p.sample_bs1 for p in pairs])
    preds2 = batch_predict(model2, meta2, table2, [p.sample_bs2 for p in pairs])
    return evaluate_handoff(lambda s: preds1[s.key], lambda s: preds2[s.key], pairs)


def handoff_row(label: str, rep: HandoffReport) -> list:
    return [label,
            rep.category1_accuracy, rep.category1_count,
            rep.category2_accuracy, rep.category2_count,
            rep.bs_nlos_accuracy.get(1), rep.bs_los_accuracy.get(1),
            rep.bs_nlos_accuracy.get(2), rep.bs_los_accuracy.get(2),
            rep.overall_accuracy, rep.joint_correct_fraction]


HANDOFF_HEADER = ["model",
                  "handoff_acc_1to2", "count_1to2",
                  "handoff_acc_2to1", "count_2to1",
                  "bs1_nlos_acc", "bs1_los_acc", "bs2_nlos_acc", "bs2_los_acc",
                  "overall_acc", "joint_correct"]


def handoff_stage(ckpt1_path, ckpt2_path, pairs_path, out_csv,
                  label: str = "model") -> HandoffReport:
    rep = handoff_eval(ckpt1_path, ckpt2_path, pairs_path)
    _write_csv(out_csv, HANDOFF_HEADER, [handoff_row(label, rep)])
    return rep


# ---------------------------------------------------------------------------
# Full experiment
# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """All stages in sequence; returns the experiment manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "stages": {},
    }

    def run(stage_name, fn):
        try:
            return fn()
        except BeamsightError as exc:
            raise StageFailure(stage_name, exc) from exc

    trace_dir = out / "trace"
    run("simulate", lambda: simulate_stage(cfg.scenario, cfg.frames, trace_dir))
    manifest["stages"]["simulate"] = {"out": "trace", "frames": cfg.frames,
                                      "seed": cfg.scenario.seed}

    dataset_dir = out / "dataset"
    ds_manifest = run("build-dataset",
                      lambda: build_dataset_stage(trace_dir, dataset_dir, cfg.dataset))
    manifest["stages"]["build-dataset"] = {"out": "dataset",
                                           "counts": ds_manifest["counts"],
                                           "seed": cfg.dataset.seed}

    checkpoints = {}
    for mode, fname, seed_offset in (("bimodal", "bimodal.ckpt", 0),
                                     ("beam-only", "beam_only.ckpt", 1)):
        ckpt = out / fname
        train_cfg = replace(cfg.train, seed=cfg.train.seed + seed_offset)
        history = out / f"train_{mode.replace('-', '_')}_history.csv"
        meta = run(f"train-{mode}",
                   lambda m=mode, c=ckpt, t=train_cfg, h=history:
                   train_stage(dataset_dir, m, t, c, h))
        checkpoints[mode] = ckpt
        manifest["stages"][f"train-{mode}"] = {
            "out": fname, "seed": train_cfg.seed,
            "best_epoch": meta["best_epoch"],
            "best_val_top1": meta["best_val_top1"],
        }

    reports = {}
    for mode, ckpt in checkpoints.items():
        csv_path = out / f"eval_{mode.replace('-', '_')}.csv"
        rep, _ = run(f"eval-{mode}",
                     lambda c=ckpt, p=csv_path: eval_stage(c, dataset_dir, p))
        reports[mode] = rep
        manifest["stages"][f"eval-{mode}"] = {
            "out": csv_path.name,
            "top1": rep.top1,
            "recall": rep.recall,
        }

    pairs_path = dataset_dir / "pairs.ndrec"
    rows = []
    handoff_reports = {}
    for mode, ckpt in checkpoints.items():
        rep = run(f"handoff-{mode}",
                  lambda c=ckpt: handoff_eval(c, c, pairs_path))
        handoff_reports[mode] = rep
        rows.append(handoff_row(mode, rep))
    _write_csv(out / "handoff.csv", HANDOFF_HEADER, rows)
    manifest["stages"]["handoff-eval"] = {
        "out": "handoff.csv",
        "pairs": ds_manifest["counts"]["pairs"],
    }

    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
