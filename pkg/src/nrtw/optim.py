"""Adam and SGD-with-momentum parameter updates.

Both steps mutate the parameter buffers in place and are bit-deterministic
for identical (params, grads, state) inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import ParamSet
from .errors import ShapeMismatchError


@dataclass
class OptimizerState:
    kind: str  # "adam" | "sgd-momentum"
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd-momentum"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.step_count < 0:
            raise ValueError("step counter must be >= 0")


def adam_state(
    params: ParamSet,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    slots = {
        name: {
            "m": np.zeros_like(t.data),
            "v": np.zeros_like(t.data),
        }
        for name, t in params.items()
    }
    return OptimizerState(
        kind="adam",
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        slots=slots,
    )


def sgd_momentum_state(
    params: ParamSet, learning_rate: float, momentum: float = 0.9
) -> OptimizerState:
    slots = {name: {"velocity": np.zeros_like(t.data)} for name, t in params.items()}
    return OptimizerState(
        kind="sgd-momentum",
        learning_rate=learning_rate,
        momentum=momentum,
        slots=slots,
    )


def _check_grads(params: ParamSet, grads: Mapping[str, np.ndarray]) -> None:
    for name, t in params.items():
        g = grads.get(name)
        if g is None:
            raise ShapeMismatchError(f"missing gradient for parameter {name!r}")
        if g.shape != t.data.shape:
            raise ShapeMismatchError(
                f"gradient for {name!r} has shape {g.shape}, "
                f"expected {t.data.shape}"
            )


def adam_step(
    params: ParamSet, grads: Mapping[str, np.ndarray], state: OptimizerState
) -> None:
    """Bias-corrected Adam update, in place."""
    if state.kind != "adam":
        raise ValueError(f"adam_step called with state kind {state.kind!r}")
    _check_grads(params, grads)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        slot = state.slots[name]
        slot["m"] *= state.beta1
        slot["m"] += (1.0 - state.beta1) * g
        slot["v"] *= state.beta2
        slot["v"] += (1.0 - state.beta2) * (g * g)
        m_hat = slot["m"] / bc1
        v_hat = slot["v"] / bc2
        p.data -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype, copy=False
        )


def sgd_momentum_step(
    params: ParamSet, grads: Mapping[str, np.ndarray], state: OptimizerState
) -> None:
    """Velocity update v <- mu*v + g; p <- p - lr*v, in place."""
    if state.kind != "sgd-momentum":
        raise ValueError(f"sgd_momentum_step called with state kind {state.kind!r}")
    _check_grads(params, grads)
    state.step_count += 1
    for name, p in params.items():
        slot = state.slots[name]
        slot["velocity"] *= state.momentum
        slot["velocity"] += grads[name]
        p.data -= (state.learning_rate * slot["velocity"]).astype(
            p.data.dtype, copy=False
        )
