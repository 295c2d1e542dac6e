"""Experiment runner: single traversals, the identity matrix, Z-vs-W comparison.

Cells of a plan are independent. They may run in a process pool, but rows
are collected and written in plan order, so identical plans give
byte-identical CSV files.
"""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.stats import mannwhitneyu

from . import attributes as attrs
from . import geometry as geo
from .config import RunConfig
from .decoders import W_SPACE, Z_SPACE, LatentCode, build_decoder, load_weights
from .identity import hamming, iris_code
from .imageio import write_image
from .traversal import CONVERGED, DIVERGED, MAX_ITERS, traverse

SCORE_COLUMNS = (
    "cell", "seed", "attribute", "direction", "target_index", "target", "identity_loss", "space",
    "optimizer", "start_value", "final_value", "iterations", "status", "hd",
)
SPACE_COLUMNS = SCORE_COLUMNS + ("texture_energy",)


class HarnessIOError(OSError):
    pass


def make_decoder(settings, mapping=None):
    d = settings
    dec = build_decoder(d.kind, d.height, d.width, d.dim, d.seed, tau=d.tau,
                        mapping=d.mapping if mapping is None else mapping, channels=d.channels)
    if d.weights:
        if d.kind != "conv":
            raise ValueError("decoder.weights applies to the conv decoder only")
        dec.load_arrays(load_weights(d.weights))
    return dec


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise HarnessIOError(f"cannot create output directory {path}: {exc.strerror}") from exc


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise HarnessIOError(f"cannot write {path}: {exc.strerror}") from exc


def _save_image(img, path):
    try:
        write_image(img, path)
    except OSError as exc:
        raise HarnessIOError(f"cannot write {path}: {exc.strerror}") from exc


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def start_code(decoder, seed, space):
    z = LatentCode.sample(decoder.dim, seed)
    return decoder.to_w(z) if space == W_SPACE else z


def decoder_entry(decoder, space):
    return decoder.generate_from_w if space == W_SPACE else decoder.generate


def comparison_score(x0, x1):
    """Fractional Hamming distance between the iris codes of two images."""
    c0 = attrs.circles_of(x0).detach()
    c1 = attrs.circles_of(x1).detach()
    return hamming(iris_code(x0, c0), iris_code(x1, c1))


# ---------------------------------------------------------------------------
# single traversal

@dataclass
class SingleResult:
    status: str
    iterations: int
    summary: dict


def run_single(cfg: RunConfig, out_dir=None):
    """Traverse one latent code; writes images, trajectory and summary.json."""
    out = out_dir or cfg.output.directory
    _ensure_dir(out)
    if not cfg.attributes:
        raise ValueError("the config lists no [[attributes]] to traverse")
    decoder = make_decoder(cfg.decoder)
    space = cfg.latent.space
    z0 = start_code(decoder, cfg.latent.seed, space)
    x0 = decoder_entry(decoder, space)(z0).detach()
    starts = {}
    specs = []
    for e in cfg.attributes:
        start = None
        if e.kind in attrs.TARGETED_KINDS:
            start = attrs.measure(x0, e.kind, sharpness=cfg.sharpness)
            starts[e.kind] = start
        specs.append(e.resolve(start))
    tcfg = replace(cfg.traversal, space=space)
    z_best, record = traverse(z0, specs, decoder, tcfg, sharpness=cfg.sharpness)
    x1 = decoder_entry(decoder, space)(z_best).detach()

    fmt = cfg.output.format
    _save_image(x0.data, os.path.join(out, f"initial.{fmt}"))
    _save_image(x1.data, os.path.join(out, f"final.{fmt}"))
    _write_text(os.path.join(out, "trajectory.jsonl"), record.to_jsonl())
    final = {}
    for s in specs:
        try:
            final[s.kind] = attrs.measure(x1, s.kind, x0=x0, sharpness=cfg.sharpness)
        except geo.DegenerateSegmentation:
            final[s.kind] = None
    try:
        hd = comparison_score(x0, x1)
    except (geo.DegenerateSegmentation, ValueError):
        hd = None
    summary = {
        "status": record.status,
        "message": record.message,
        "iterations": record.iterations,
        "best_iteration": record.best_iteration,
        "optimizer": record.optimizer,
        "space": space,
        "latent_seed": cfg.latent.seed,
        "targets": {s.kind: s.target for s in specs},
        "start_values": starts,
        "final_values": final,
        "hd": hd,
        "initial_latent": list(map(float, z0.values)),
        "final_latent": list(map(float, z_best.values)),
    }
    _write_text(os.path.join(out, "summary.json"), _json(summary))
    return SingleResult(record.status, record.iterations, summary)


# ---------------------------------------------------------------------------
# experiment plans

@dataclass(frozen=True)
class Cell:
    index: int
    seed: int
    attribute: str
    direction: str
    target_index: int
    identity: bool
    space: str


@dataclass
class ExperimentPlan:
    seeds: list
    attributes: list
    directions: list
    target_count: int
    target_spacing: float
    identity_arms: list
    spaces: list
    extra_holds: dict
    output: str
    save_artifacts: bool = True
    workers: int = 1

    @classmethod
    def from_settings(cls, p, output):
        return cls(list(p.seeds), list(p.attributes), list(p.directions), p.target_count,
                   p.target_spacing, list(p.identity_arms), list(p.spaces), dict(p.extra_holds),
                   output, p.save_artifacts, p.workers)

    def cells(self):
        out = []
        for seed in self.seeds:
            for attribute in self.attributes:
                for direction in self.directions:
                    for k in range(1, self.target_count + 1):
                        for arm in self.identity_arms:
                            for space in self.spaces:
                                out.append(Cell(len(out), seed, attribute, direction, k, arm, space))
        return out


def cell_target(attribute, direction, k, spacing, start):
    sign = 1.0 if direction == "increase" else -1.0
    target = start * (1.0 + sign * spacing * k)
    if attribute == "sharpness":
        target = float(np.clip(target, 0.0, 99.0))
    return target


def _cell_specs(cell, plan, start):
    specs = []
    target = None
    if cell.attribute in attrs.HOLD_KINDS:
        specs.append(attrs.AttributeSpec(cell.attribute))
    else:
        target = cell_target(cell.attribute, cell.direction, cell.target_index, plan.target_spacing, start)
        specs.append(attrs.AttributeSpec(cell.attribute, target))
    for kind in plan.extra_holds.get(cell.attribute, []):
        if kind not in {s.kind for s in specs}:
            specs.append(attrs.AttributeSpec(kind))
    if cell.identity and "identity_hold" not in {s.kind for s in specs}:
        specs.append(attrs.AttributeSpec("identity_hold"))
    return specs, target


_WORKER = {}


def _context(cfg, mapping):
    key = (repr(cfg.decoder), mapping)
    if key not in _WORKER:
        _WORKER.clear()
        _WORKER[key] = make_decoder(cfg.decoder, mapping=mapping)
    return _WORKER[key]


def run_cell(cfg, plan, cell, mapping=None, texture=False):
    """Run one cell; returns its CSV row (divergence is recorded, not raised)."""
    decoder = _context(cfg, mapping)
    z0 = start_code(decoder, cell.seed, cell.space)
    forward = decoder_entry(decoder, cell.space)
    x0 = forward(z0).detach()
    row = {c: "" for c in (SPACE_COLUMNS if texture else SCORE_COLUMNS)}
    row.update(cell=cell.index, seed=cell.seed, attribute=cell.attribute, direction=cell.direction,
               target_index=cell.target_index, identity_loss=int(cell.identity), space=cell.space)
    try:
        start = attrs.measure(x0, cell.attribute, x0=x0, sharpness=cfg.sharpness)
    except geo.DegenerateSegmentation as exc:
        row.update(status=DIVERGED, iterations=0)
        return row, None, str(exc)
    specs, target = _cell_specs(cell, plan, start)
    tcfg = replace(cfg.traversal, space=cell.space)
    z_best, record = traverse(z0, specs, decoder, tcfg, sharpness=cfg.sharpness)
    x1 = forward(z_best).detach()
    row.update(optimizer=record.optimizer, start_value=start, target="" if target is None else target,
               iterations=record.iterations, status=record.status)
    try:
        row["final_value"] = attrs.measure(x1, cell.attribute, x0=x0, sharpness=cfg.sharpness)
        row["hd"] = comparison_score(x0, x1)
        if texture:
            row["texture_energy"] = attrs.sharpness_power(x1, geo.soft_mask(x1), cfg.sharpness).item()
    except geo.DegenerateSegmentation as exc:
        row["status"] = DIVERGED
        record.message = record.message or str(exc)
    artifacts = (x0.data, x1.data, record.to_jsonl()) if plan.save_artifacts else None
    return row, artifacts, record.message


def _run_cells(cfg, plan, cells, mapping, texture):
    if plan.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(run_cell, cfg, plan, c, mapping, texture) for c in cells]
            return [f.result() for f in futures]
    return [run_cell(cfg, plan, c, mapping, texture) for c in cells]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _terminated(rows):
    return all(r["status"] in (CONVERGED, MAX_ITERS) for r in rows)


def _hd_stats(rows):
    hd = [r["hd"] for r in rows if r["hd"] != ""]
    conv = [r["status"] == CONVERGED for r in rows]
    return {
        "cells": len(rows),
        "scored": len(hd),
        "mean_hd": float(np.mean(hd)) if hd else None,
        "median_hd": float(np.median(hd)) if hd else None,
        "convergence_rate": float(np.mean(conv)) if conv else None,
    }


def rank_sum(with_id, without_id):
    """One-sided Mann-Whitney U test that the identity arm has lower HD."""
    if len(with_id) < 2 or len(without_id) < 2:
        return None
    res = mannwhitneyu(with_id, without_id, alternative="less")
    return {"statistic": float(res.statistic), "p_value": float(res.pvalue), "alternative": "identity arm lower"}


def matrix_summary(rows):
    arms = {}
    for arm, name in ((1, "with_identity"), (0, "without_identity")):
        sub = [r for r in rows if r["identity_loss"] == arm]
        if sub:
            arms[name] = _hd_stats(sub)
    summary = {"cells": len(rows), "arms": arms}
    a = [r["hd"] for r in rows if r["identity_loss"] == 1 and r["hd"] != ""]
    b = [r["hd"] for r in rows if r["identity_loss"] == 0 and r["hd"] != ""]
    summary["rank_sum"] = rank_sum(a, b)
    summary["all_terminated"] = _terminated(rows)
    return summary


def _write_artifacts(out, cells, results, fmt):
    cell_dir = os.path.join(out, "cells")
    _ensure_dir(cell_dir)
    for cell, (row, art, _msg) in zip(cells, results):
        if art is None:
            continue
        x0, x1, traj = art
        name = (f"{cell.index:04d}_s{cell.seed}_{cell.attribute}_{cell.direction}{cell.target_index}"
                f"_id{int(cell.identity)}_{cell.space}")
        d = os.path.join(cell_dir, name)
        _ensure_dir(d)
        _save_image(x0, os.path.join(d, f"initial.{fmt}"))
        _save_image(x1, os.path.join(d, f"final.{fmt}"))
        _write_text(os.path.join(d, "trajectory.jsonl"), traj)


@dataclass
class MatrixResult:
    rows: list
    summary: dict
    csv_path: str

    @property
    def ok(self):
        return self.summary["all_terminated"]


def run_matrix(cfg: RunConfig, out_dir=None):
    """Every (seed, attribute, direction, target, identity arm, space) cell of the plan."""
    out = out_dir or cfg.output.directory
    plan = ExperimentPlan.from_settings(cfg.matrix, out)
    _ensure_dir(out)
    mapping = True if W_SPACE in plan.spaces else None
    cells = plan.cells()
    results = _run_cells(cfg, plan, cells, mapping, texture=False)
    rows = [r for r, _, _ in results]
    csv_path = os.path.join(out, "scores.csv")
    _write_text(csv_path, rows_to_csv(rows, SCORE_COLUMNS))
    summary = matrix_summary(rows)
    summary["plan"] = asdict(plan) | {"output": None}
    _write_text(os.path.join(out, "summary.json"), _json(summary))
    if plan.save_artifacts:
        _write_artifacts(out, cells, results, cfg.output.format)
    return MatrixResult(rows, summary, csv_path)


def space_summary(rows):
    spaces = {}
    for space in (Z_SPACE, W_SPACE):
        sub = [r for r in rows if r["space"] == space]
        if not sub:
            continue
        energy = [r["texture_energy"] for r in sub if r["texture_energy"] != ""]
        stats = _hd_stats(sub)
        stats["mean_texture_energy"] = float(np.mean(energy)) if energy else None
        spaces[space] = stats
    return {"cells": len(rows), "spaces": spaces, "all_terminated": _terminated(rows)}


def run_space_compare(cfg: RunConfig, out_dir=None):
    """Matched cells in Z and W through a mapping-network decoder."""
    out = out_dir or cfg.output.directory
    plan = ExperimentPlan.from_settings(cfg.space_compare, out)
    plan.spaces = [Z_SPACE, W_SPACE]
    _ensure_dir(out)
    cells = plan.cells()
    results = _run_cells(cfg, plan, cells, mapping=True, texture=True)
    rows = [r for r, _, _ in results]
    csv_path = os.path.join(out, "space_compare.csv")
    _write_text(csv_path, rows_to_csv(rows, SPACE_COLUMNS))
    summary = space_summary(rows)
    summary["plan"] = asdict(plan) | {"output": None}
    _write_text(os.path.join(out, "summary.json"), _json(summary))
    if plan.save_artifacts:
        _write_artifacts(out, cells, results, cfg.output.format)
    return MatrixResult(rows, summary, csv_path)
