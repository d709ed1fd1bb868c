"""Test-time fine-tuning toward bound images and NRT curve assembly.

The engine takes a trained checkpoint and one noisy image, builds the two
bound images (the input itself on the noisy side, the K-fold recursively
denoised image on the smooth side), then re-optimizes a fresh copy of the
trained weights toward each bound with SGD+momentum. Network outputs are
snapshotted every ``cadence`` iterations into candidates; a sweep stops
when the full-image relative change between consecutive snapshots falls
below the stop threshold or the iteration budget runs out.

Candidates along the smooth-bound sweep get positive signed indices, those
along the noisy-bound sweep negative ones; index 0 is the unmodified
denoiser output. Losses and distances recorded per iteration are in the
normalized intensity domain; candidate records also carry HU-domain
distances for display.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward, mse_loss
from .errors import CandidateNotFoundError, FormatError, ShapeMismatchError
from .formats import (
    _canonical_json,
    image_to_bytes,
    read_image,
    sha256_bytes,
)
from .metrics import ROI, MetricsRecord, resolution_proxy, rmse, roi_std
from .networks import forward
from .optim import sgd_momentum_state, sgd_momentum_step
from .simulate import HU_SPAN, as_image, hu_to_unit, unit_to_hu
from .training import Checkpoint, infer, recursive_infer

LOW = "low_noise"  # positive indices, target t_low
HIGH = "high_resolution"  # negative indices, target t_high
DIRECTIONS = (LOW, HIGH)

STATUS_IDLE = "idle"
STATUS_BUILDING = "building"
STATUS_COMPLETE = "complete"
STATUS_CANCELLED = "cancelled"
STATUS_FAILED = "failed"


@dataclass
class Bounds:
    t_high: np.ndarray  # bit-identical to the input
    t_low: np.ndarray  # k-fold recursive denoiser output
    k: int


@dataclass(frozen=True)
class SweepConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    stop_threshold: float = 0.01
    max_iterations: int = 2000
    cadence: int = 10
    k: int = 3

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not (0.0 < self.stop_threshold < 1.0):
            raise ValueError(
                f"stop threshold must be in (0, 1), got {self.stop_threshold}"
            )
        if self.cadence < 1:
            raise ValueError("snapshot cadence must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("iteration budget must be >= 1")
        if self.k < 1:
            raise ValueError("recursion depth k must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "stop_threshold": self.stop_threshold,
            "max_iterations": self.max_iterations,
            "cadence": self.cadence,
            "k": self.k,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        cfg = cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})
        cfg.validate()
        return cfg


@dataclass
class Candidate:
    signed_index: int
    image: np.ndarray  # HU
    iteration: int
    loss: float | None  # normalized-domain mean squared distance to target
    distance_to_target: float | None  # HU RMS
    distance_to_t_low: float | None = None
    distance_to_t_high: float | None = None
    metrics: MetricsRecord | None = None


@dataclass
class NRTCurve:
    bounds: Bounds
    config: SweepConfig
    candidates: dict = field(default_factory=dict)  # signed index -> Candidate
    direction_status: dict = field(
        default_factory=lambda: {LOW: STATUS_IDLE, HIGH: STATUS_IDLE}
    )
    provenance: dict = field(default_factory=dict)
    sweep_stats: dict = field(default_factory=dict)  # transient, not persisted

    @property
    def status(self) -> str:
        statuses = set(self.direction_status.values())
        for s in (STATUS_BUILDING, STATUS_FAILED, STATUS_CANCELLED):
            if s in statuses:
                return s
        return STATUS_COMPLETE

    def index_range(self) -> tuple[int, int]:
        if not self.candidates:
            raise CandidateNotFoundError("curve has no candidates")
        return min(self.candidates), max(self.candidates)

    def ordered(self) -> list:
        return [self.candidates[j] for j in sorted(self.candidates)]


def make_bounds(ckpt: Checkpoint, x: np.ndarray, k: int) -> Bounds:
    """t_high is the input itself; t_low is the k-fold recursive output."""
    if k < 1:
        raise ValueError(f"bound recursion depth must be >= 1, got {k}")
    x = as_image(x)
    ckpt.config.check_input(*x.shape)
    return Bounds(t_high=x.copy(), t_low=recursive_infer(ckpt, x, k), k=k)


def relative_change(prev: np.ndarray, cur: np.ndarray) -> float:
    """Full-image L2 relative change between consecutive outputs."""
    prev, cur = as_image(prev), as_image(cur)
    if prev.shape != cur.shape:
        raise ShapeMismatchError(
            f"relative_change operands differ in shape: {prev.shape} vs {cur.shape}"
        )
    denom = float(np.linalg.norm(prev.astype(np.float64)))
    if denom == 0.0:
        raise ValueError("relative change is undefined for a zero-norm image")
    return float(np.linalg.norm((cur - prev).astype(np.float64)) / denom)


def linear_twicing_oracle(
    phi0: float, t: float, eta: float, theta: float, steps: int
) -> np.ndarray:
    """Closed-form iterates phi_j = t + (1 - eta*theta)^j (phi_0 - t).

    Reference dynamics for a one-parameter linear model under plain
    gradient descent; the full sweep follows the same residual-feedback
    pattern with the scalar rate replaced by a kernel.
    """
    if steps < 0:
        raise ValueError(f"step count must be >= 0, got {steps}")
    if theta <= 0:
        raise ValueError(f"theta must be positive, got {theta}")
    j = np.arange(steps + 1, dtype=np.float64)
    return t + (1.0 - eta * theta) ** j * (phi0 - t)


@dataclass
class SweepResult:
    candidates: list  # position 0 is the starting (iteration-0) snapshot
    status: str
    loss_history: list  # normalized mean squared distance per iteration
    distance_history: list  # normalized RMS distance per iteration
    iteration_seconds: list
    iterations_run: int


def sweep(
    ckpt: Checkpoint,
    x: np.ndarray,
    target: np.ndarray,
    config: SweepConfig,
    direction_sign: int,
    on_candidate: Callable[[Candidate], None] | None = None,
    cancel=None,
) -> SweepResult:
    """Fine-tune a fresh copy of the trained weights so the network output
    on x moves toward the target image, snapshotting along the way.

    The persisted checkpoint is never mutated; the optimizer starts from
    zeroed velocity. Candidates carry signed indices direction_sign * 1, 2,
    ... in snapshot order.
    """
    config.validate()
    if direction_sign not in (-1, 1):
        raise ValueError(f"direction sign must be +1 or -1, got {direction_sign}")
    x = as_image(x)
    target = as_image(target)
    if x.shape != target.shape:
        raise ShapeMismatchError(
            f"target shape {target.shape} does not match input {x.shape}"
        )
    ckpt.config.check_input(*x.shape)

    params = ckpt.params.copy()
    state = sgd_momentum_state(params, config.learning_rate, config.momentum)
    x_t = Tensor(hu_to_unit(x)[None, None])
    t_t = Tensor(hu_to_unit(target)[None, None])

    def to_hu(out_tensor: Tensor) -> np.ndarray:
        return unit_to_hu(out_tensor.data[0, 0])

    out = forward(ckpt.config, params, x_t)
    loss = mse_loss(out, t_t)
    loss_val = loss.item()
    loss_history = [loss_val]
    distance_history = [math.sqrt(loss_val)]
    iteration_seconds: list[float] = []

    start_image = to_hu(out)
    start = _make_candidate(0, start_image, 0, loss_val)
    candidates = [start]
    if on_candidate is not None:
        on_candidate(start)

    prev_snapshot = start_image
    status = STATUS_COMPLETE
    it = 0
    snap_count = 0
    while it < config.max_iterations:
        if cancel is not None and cancel.is_set():
            status = STATUS_CANCELLED
            break
        tick = time.perf_counter()
        grads = backward(loss, params)
        sgd_momentum_step(params, grads, state)
        it += 1
        out = forward(ckpt.config, params, x_t)
        loss = mse_loss(out, t_t)
        loss_val = loss.item()
        iteration_seconds.append(time.perf_counter() - tick)
        if not np.isfinite(loss_val):
            status = STATUS_FAILED
            break
        loss_history.append(loss_val)
        distance_history.append(math.sqrt(loss_val))

        at_cadence = it % config.cadence == 0
        if at_cadence or it == config.max_iterations:
            snapshot = to_hu(out)
            if snapshot.tobytes() != prev_snapshot.tobytes():
                snap_count += 1
                cand = _make_candidate(
                    direction_sign * snap_count, snapshot, it, loss_val
                )
                candidates.append(cand)
                if on_candidate is not None:
                    on_candidate(cand)
            if at_cadence:
                change = relative_change(prev_snapshot, snapshot)
                prev_snapshot = snapshot
                if change < config.stop_threshold:
                    break

    return SweepResult(
        candidates=candidates,
        status=status,
        loss_history=loss_history,
        distance_history=distance_history,
        iteration_seconds=iteration_seconds,
        iterations_run=it,
    )


def _make_candidate(
    index: int, image: np.ndarray, iteration: int, loss_val: float
) -> Candidate:
    return Candidate(
        signed_index=index,
        image=image,
        iteration=iteration,
        loss=loss_val,
        distance_to_target=math.sqrt(loss_val) * HU_SPAN,
    )


def build_nrt_curve(
    ckpt: Checkpoint,
    x: np.ndarray,
    config: SweepConfig,
    clean: np.ndarray | None = None,
    flat_roi: ROI | None = None,
    edge_roi: ROI | None = None,
    directions: tuple = DIRECTIONS,
    on_candidate: Callable[[Candidate], None] | None = None,
    cancel=None,
) -> NRTCurve:
    """Run make_bounds and both directional sweeps, assembling the curve.

    Every candidate is annotated with flat-ROI STD (when a flat ROI is
    given), RMSE against the clean reference (when available), the edge
    resolution proxy (when an edge ROI is given) and its HU RMS distance to
    both bounds. Candidates are handed to on_candidate as produced.
    """
    config.validate()
    x = as_image(x)
    bounds = make_bounds(ckpt, x, config.k)
    curve = NRTCurve(
        bounds=bounds,
        config=config,
        provenance={
            "checkpoint_fingerprint": sha256_bytes(ckpt.to_bytes()),
            "input_fingerprint": sha256_bytes(x.tobytes()),
        },
    )

    def annotate(cand: Candidate) -> Candidate:
        cand.distance_to_t_low = rmse(cand.image, bounds.t_low)
        cand.distance_to_t_high = rmse(cand.image, bounds.t_high)
        record = MetricsRecord()
        if clean is not None:
            record.rmse = rmse(cand.image, clean)
        if flat_roi is not None:
            record.roi_std[flat_roi.label] = roi_std(cand.image, flat_roi)
        if edge_roi is not None:
            record.resolution_proxy = resolution_proxy(cand.image, edge_roi)
        cand.metrics = record
        return cand

    def publish(cand: Candidate) -> None:
        annotate(cand)
        curve.candidates[cand.signed_index] = cand
        if on_candidate is not None:
            on_candidate(cand)

    # index 0 is the unmodified denoiser output; it has no sweep target
    publish(
        Candidate(
            signed_index=0,
            image=infer(ckpt, x),
            iteration=0,
            loss=None,
            distance_to_target=None,
        )
    )

    targets = {LOW: bounds.t_low, HIGH: bounds.t_high}
    signs = {LOW: 1, HIGH: -1}
    for direction in directions:
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown sweep direction {direction!r}")
        curve.direction_status[direction] = STATUS_BUILDING
        result = sweep(
            ckpt,
            x,
            targets[direction],
            config,
            signs[direction],
            on_candidate=lambda c: publish(c) if c.signed_index != 0 else None,
            cancel=cancel,
        )
        curve.direction_status[direction] = result.status
        curve.sweep_stats[direction] = {
            "iterations_run": result.iterations_run,
            "iteration_seconds": list(result.iteration_seconds),
            "initial_distance": result.distance_history[0],
            "final_distance": result.distance_history[-1],
        }
    return curve


def select_candidate(curve: NRTCurve, j: int) -> Candidate:
    """Stored candidate at a signed index; never recomputes."""
    if j not in curve.candidates:
        lo, hi = curve.index_range()
        raise CandidateNotFoundError(
            f"candidate {j} not in curve; available range [{lo}, {hi}]"
        )
    return curve.candidates[j]


# ---------------------------------------------------------------------------
# curve persistence: a directory holding one NRTW-IMG per candidate plus a
# canonical-JSON manifest


def _candidate_filename(index: int) -> str:
    if index == 0:
        return "cand_0000.img"
    prefix = "p" if index > 0 else "n"
    return f"cand_{prefix}{abs(index):03d}.img"


def save_curve(curve: NRTCurve, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    bound_files = {
        "t_high": ("bound_t_high.img", curve.bounds.t_high),
        "t_low": ("bound_t_low.img", curve.bounds.t_low),
    }
    bounds_entry = {}
    for key, (fname, image) in bound_files.items():
        path = os.path.join(directory, fname)
        payload = image_to_bytes(image)
        if not os.path.exists(path):
            with open(path, "wb") as fh:
                fh.write(payload)
        bounds_entry[key] = {"file": fname, "sha256": sha256_bytes(payload)}

    cand_entries = []
    for cand in curve.ordered():
        fname = _candidate_filename(cand.signed_index)
        path = os.path.join(directory, fname)
        payload = image_to_bytes(cand.image)
        if not os.path.exists(path):
            with open(path, "wb") as fh:
                fh.write(payload)
        cand_entries.append(
            {
                "index": cand.signed_index,
                "file": fname,
                "sha256": sha256_bytes(payload),
                "iteration": cand.iteration,
                "loss": cand.loss,
                "distance_to_target": cand.distance_to_target,
                "distance_to_t_low": cand.distance_to_t_low,
                "distance_to_t_high": cand.distance_to_t_high,
                "metrics": cand.metrics.to_dict() if cand.metrics else None,
            }
        )

    manifest = {
        "format": "NRTW-CURVE v1",
        "config": curve.config.to_dict(),
        "bounds": bounds_entry,
        "directions": dict(curve.direction_status),
        "provenance": dict(curve.provenance),
        "candidates": cand_entries,
    }
    tmp = os.path.join(directory, "manifest.json.tmp")
    with open(tmp, "wb") as fh:
        fh.write(_canonical_json(manifest))
        fh.write(b"\n")
    os.replace(tmp, os.path.join(directory, "manifest.json"))


def load_curve(directory) -> NRTCurve:
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no curve manifest in {directory}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"curve manifest is corrupt: {exc}")
    if manifest.get("format") != "NRTW-CURVE v1":
        raise FormatError("unrecognized curve manifest format")

    t_high, _ = read_image(
        os.path.join(directory, manifest["bounds"]["t_high"]["file"])
    )
    t_low, _ = read_image(os.path.join(directory, manifest["bounds"]["t_low"]["file"]))
    config = SweepConfig.from_dict(manifest["config"])
    curve = NRTCurve(
        bounds=Bounds(t_high=t_high, t_low=t_low, k=config.k),
        config=config,
        provenance=manifest.get("provenance", {}),
    )
    curve.direction_status.update(manifest.get("directions", {}))
    for entry in manifest["candidates"]:
        image, _ = read_image(os.path.join(directory, entry["file"]))
        metrics = (
            MetricsRecord.from_dict(entry["metrics"]) if entry.get("metrics") else None
        )
        cand = Candidate(
            signed_index=int(entry["index"]),
            image=image,
            iteration=int(entry["iteration"]),
            loss=entry.get("loss"),
            distance_to_target=entry.get("distance_to_target"),
            distance_to_t_low=entry.get("distance_to_t_low"),
            distance_to_t_high=entry.get("distance_to_t_high"),
            metrics=metrics,
        )
        curve.candidates[cand.signed_index] = cand
    return curve
