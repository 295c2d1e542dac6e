"""Latent-space traversal and optimisation-based inversion.

The optimisers are small hand-written Adam/AdamW steps on numpy vectors; the
gradient comes from one backward pass through decoder and composite loss.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .attributes import TARGETED_KINDS, CompositeLoss, DEFAULT_SHARPNESS
from .decoders import W_SPACE, Z_SPACE, LatentCode
from .geometry import DegenerateSegmentation

CONVERGED = "converged"
MAX_ITERS = "max-iters"
DIVERGED = "diverged"

DEFAULT_TOLERANCES = {"pupil_radius": 2.0, "iris_radius": 2.0, "pupil_iris_ratio": 2.0, "sharpness": 2.0}


class DivergedGradient(FloatingPointError):
    pass


class InversionDiverged(RuntimeError):
    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


@dataclass
class TraversalConfig:
    learning_rate: float = 0.03
    optimizer: str = "auto"  # auto: adam with an identity term, adamw without
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    max_iterations: int = 500
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    space: str = Z_SPACE
    snapshot_stride: int = 10
    latent_weight: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if not self.clip_norm > 0:
            raise ValueError("clip norm must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max iterations must be >= 1")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        if self.optimizer not in ("auto", "adam", "adamw"):
            raise ValueError(f"optimizer must be auto, adam or adamw, got {self.optimizer!r}")
        if self.space not in (Z_SPACE, W_SPACE):
            raise ValueError(f"latent space must be Z or W, got {self.space!r}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        self.tolerances = tol

    def resolve_optimizer(self, specs):
        if self.optimizer != "auto":
            return self.optimizer
        return "adam" if any(s.kind == "identity_hold" for s in specs) else "adamw"


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros(dim), np.zeros(dim), 0)


def clip_grad_norm(g, max_norm):
    """Rescale ``g`` to norm ``max_norm`` when it is longer."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise DivergedGradient("diverged gradient: non-finite values")
    norm = float(np.linalg.norm(g))
    if norm > max_norm:
        scale = max_norm / norm
        out = g * scale
        # rounding can leave the result an ulp long; shrink until it is not
        while np.linalg.norm(out) > max_norm:
            scale = np.nextafter(scale, 0.0)
            out = g * scale
        return out
    return g


def adam_step(z, g, state, cfg):
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if z.shape != g.shape or state.m.shape != z.shape:
        raise ad.ShapeError(f"optimizer shapes disagree: z {z.shape}, g {g.shape}, state {state.m.shape}")
    state.step += 1
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = state.m / (1.0 - cfg.beta1 ** state.step)
    v_hat = state.v / (1.0 - cfg.beta2 ** state.step)
    out = z - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if not np.all(np.isfinite(out)):
        raise DivergedGradient("diverged gradient: non-finite update")
    return out


def adamw_step(z, g, state, cfg):
    """Decoupled weight decay, then the Adam update."""
    z = np.asarray(z, dtype=np.float64) * (1.0 - cfg.learning_rate * cfg.weight_decay)
    return adam_step(z, g, state, cfg)


STEPS = {"adam": adam_step, "adamw": adamw_step}


@dataclass
class TrajectoryRecord:
    """Per-iteration rows, latent snapshots every ``snapshot_stride`` and a summary."""

    rows: list = field(default_factory=list)
    status: str | None = None
    best_iteration: int | None = None
    best_loss: float | None = None
    optimizer: str = ""
    space: str = Z_SPACE
    message: str = ""

    def set_status(self, status, message=""):
        if self.status is not None:
            raise RuntimeError("trajectory status already set")
        self.status = status
        self.message = message

    @property
    def iterations(self):
        return len(self.rows)

    def summary(self):
        best = self.rows[self.best_iteration] if self.best_iteration is not None else {}
        return {
            "type": "summary",
            "status": self.status,
            "message": self.message,
            "optimizer": self.optimizer,
            "space": self.space,
            "iterations": self.iterations,
            "best_iteration": self.best_iteration,
            "best_loss": self.best_loss,
            "best_attributes": best.get("attributes"),
        }

    def to_jsonl(self):
        lines = [json.dumps({"type": "iteration", **row}, sort_keys=True) for row in self.rows]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


def _finite(v):
    return v if v is None or math.isfinite(v) else None


def _within(measured, specs, tolerances):
    for s in specs:
        if s.kind in TARGETED_KINDS and abs(measured[s.kind] - s.target) > tolerances[s.kind]:
            return False
    return True


def _decoder_entry(G, space):
    return G.generate_from_w if space == W_SPACE else G.generate


def traverse(z0, specs, G, cfg=None, *, sharpness=DEFAULT_SHARPNESS):
    """Optimise the latent code toward the attribute targets.

    Returns the best-loss iterate as a :class:`LatentCode` (same space as
    ``z0``) and the trajectory. Rows are appended before each step; the last
    row of a converged run has no gradient fields.
    """
    cfg = cfg or TraversalConfig()
    specs = list(specs)
    if not isinstance(z0, LatentCode):
        z0 = LatentCode(np.asarray(z0, dtype=np.float64), cfg.space)
    if z0.space != cfg.space:
        raise ValueError(f"starting code is in {z0.space} space but the traversal runs in {cfg.space}")
    forward = _decoder_entry(G, cfg.space)
    x0 = forward(z0).detach()
    loss_fn = CompositeLoss(specs, x0, sharpness=sharpness, latent_weight=cfg.latent_weight, z0=z0.values)
    opt = cfg.resolve_optimizer(specs)
    step = STEPS[opt]
    state = OptimizerState.zeros(z0.dim)
    record = TrajectoryRecord(optimizer=opt, space=cfg.space)
    z = np.array(z0.values, dtype=np.float64)
    best_z = z.copy()

    for it in range(cfg.max_iterations + 1):
        zt = ad.Tensor(z, requires_grad=True)
        x = forward(zt)
        if not np.all(np.isfinite(x.data)):
            record.set_status(DIVERGED, "non-finite image")
            break
        try:
            ev = loss_fn.evaluate(x, zt)
        except DegenerateSegmentation as exc:
            record.set_status(DIVERGED, str(exc))
            break
        loss = ev.total.item()
        row = {
            "iteration": it,
            "loss": _finite(loss),
            "terms": {k: _finite(t.item()) for k, t in ev.terms.items()},
            "attributes": {k: _finite(v) for k, v in ev.measured.items()},
            "grad_norm": None,
            "clipped_grad_norm": None,
        }
        if it % cfg.snapshot_stride == 0:
            row["latent"] = z.tolist()
        record.rows.append(row)
        if not math.isfinite(loss):
            record.set_status(DIVERGED, "non-finite loss")
            break
        if record.best_loss is None or loss < record.best_loss:
            record.best_loss, record.best_iteration, best_z = loss, it, z.copy()
        if _within(ev.measured, specs, cfg.tolerances):
            record.set_status(CONVERGED)
            break
        if it == cfg.max_iterations:
            record.set_status(MAX_ITERS)
            break
        ad.backward(ev.total)
        g = zt.grad
        try:
            row["grad_norm"] = float(np.linalg.norm(g)) if np.all(np.isfinite(g)) else None
            g = clip_grad_norm(g, cfg.clip_norm)
            row["clipped_grad_norm"] = float(np.linalg.norm(g))
            z = step(z, g, state, cfg)
        except DivergedGradient as exc:
            record.set_status(DIVERGED, str(exc))
            break
    return LatentCode(best_z, z0.space, z0.seed), record


def invert(x_target, G, cfg=None, *, seed=0, z_init=None, tolerance=1e-4, max_iterations=2000):
    """Latent code whose image best matches ``x_target`` in mean squared error.

    Starts from a seeded standard-normal draw (or ``z_init``) and stops once
    the MSE drops to ``tolerance``. Raises :class:`InversionDiverged` on
    non-finite loss or gradient.
    """
    cfg = cfg or TraversalConfig(optimizer="adam")
    target = np.asarray(getattr(x_target, "data", x_target), dtype=np.float64)
    if target.shape != (G.height, G.width):
        raise ad.ShapeError(f"target image is {target.shape}, decoder renders {(G.height, G.width)}")
    forward = _decoder_entry(G, cfg.space)
    start = z_init if z_init is not None else LatentCode.sample(G.dim, seed)
    z = np.array(getattr(start, "values", start), dtype=np.float64)
    opt = "adam" if cfg.optimizer == "auto" else cfg.optimizer
    step = STEPS[opt]
    state = OptimizerState.zeros(z.size)
    record = TrajectoryRecord(optimizer=opt, space=cfg.space)
    best_z = z.copy()
    for it in range(max_iterations + 1):
        zt = ad.Tensor(z, requires_grad=True)
        mse = ad.reduce_mean(ad.square(forward(zt) - target))
        loss = mse.item()
        row = {"iteration": it, "loss": _finite(loss), "grad_norm": None, "clipped_grad_norm": None}
        if it % cfg.snapshot_stride == 0:
            row["latent"] = z.tolist()
        record.rows.append(row)
        if not math.isfinite(loss):
            record.set_status(DIVERGED, "non-finite loss")
            raise InversionDiverged("inversion diverged: non-finite loss", record)
        if record.best_loss is None or loss < record.best_loss:
            record.best_loss, record.best_iteration, best_z = loss, it, z.copy()
        if loss <= tolerance:
            record.set_status(CONVERGED)
            break
        if it == max_iterations:
            record.set_status(MAX_ITERS)
            break
        ad.backward(mse)
        try:
            g = zt.grad
            row["grad_norm"] = float(np.linalg.norm(g)) if np.all(np.isfinite(g)) else None
            g = clip_grad_norm(g, cfg.clip_norm)
            row["clipped_grad_norm"] = float(np.linalg.norm(g))
            z = step(z, g, state, cfg)
        except DivergedGradient as exc:
            record.set_status(DIVERGED, str(exc))
            raise InversionDiverged(f"inversion diverged: {exc}", record) from exc
    return LatentCode(best_z, cfg.space, seed), record


def config_dict(cfg):
    return asdict(cfg)
