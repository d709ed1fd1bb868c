"""Supervised training of a denoiser on paired samples, plus inference.

Images enter the network normalized onto [0, 1] over the fixed HU range;
all reported losses are in that normalized domain, all metrics elsewhere
are in HU. Training is deterministic per seed: the sample order is drawn
up front from the seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import ParamSet, Tensor, backward, mse_loss
from .errors import TrainingDiverged
from .formats import checkpoint_from_bytes, checkpoint_to_bytes
from .networks import NetworkConfig, build_network, forward
from .optim import adam_state, adam_step
from .simulate import PairedSample, as_image, hu_to_unit, unit_to_hu


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 10_000
    learning_rate: float = 1e-4
    milestones: tuple[float, ...] = (0.5, 0.75)  # fractions of the iteration budget
    decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.iterations <= 0:
            raise ValueError("iteration count must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    def lr_at(self, iteration: int) -> float:
        lr = self.learning_rate
        for m in self.milestones:
            if iteration >= int(m * self.iterations):
                lr *= self.decay
        return lr


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: ParamSet
    loss_history: list = field(default_factory=list)
    seed: int = 0
    dataset_fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        meta = dict(self.meta)
        meta["dataset_fingerprint"] = self.dataset_fingerprint
        meta["loss_history"] = [float(v) for v in self.loss_history]
        return checkpoint_to_bytes(
            self.config.to_dict(), self.params.arrays(), self.seed, meta
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        config_dict, arrays, seed, meta = checkpoint_from_bytes(data)
        config = NetworkConfig.from_dict(config_dict)
        params = ParamSet(
            (name, Tensor(arr, requires_grad=True, name=name))
            for name, arr in arrays.items()
        )
        meta = dict(meta)
        fingerprint = meta.pop("dataset_fingerprint", "")
        history = meta.pop("loss_history", [])
        return cls(
            config=config,
            params=params,
            loss_history=list(history),
            seed=seed,
            dataset_fingerprint=fingerprint,
            meta=meta,
        )

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def dataset_fingerprint(dataset: Sequence[PairedSample]) -> str:
    h = hashlib.sha256()
    for sample in dataset:
        h.update(sample.noisy.tobytes())
        h.update(sample.clean.tobytes())
    return h.hexdigest()


def train(
    dataset: Sequence[PairedSample],
    net_config: NetworkConfig,
    train_config: TrainConfig,
    progress: Callable[[int, float], None] | None = None,
) -> Checkpoint:
    """Adam-optimize the noisy -> clean mapping over the paired dataset."""
    if not dataset:
        raise ValueError("training dataset is empty")
    net_config.validate()
    train_config.validate()
    h, w = dataset[0].clean.shape
    net_config.check_input(h, w)

    noisy_units = [hu_to_unit(s.noisy)[None, None] for s in dataset]
    clean_units = [hu_to_unit(s.clean)[None, None] for s in dataset]

    params = build_network(net_config, train_config.seed)
    state = adam_state(
        params,
        train_config.learning_rate,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
    )
    order = np.random.default_rng(train_config.seed).integers(
        0, len(dataset), size=(train_config.iterations, train_config.batch_size)
    )

    loss_history: list[float] = []
    for it in range(train_config.iterations):
        idx = order[it]
        x = Tensor(np.concatenate([noisy_units[i] for i in idx], axis=0))
        t = Tensor(np.concatenate([clean_units[i] for i in idx], axis=0))
        out = forward(net_config, params, x)
        loss = mse_loss(out, t)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it} "
                f"(lr={train_config.lr_at(it)}, last losses="
                f"{loss_history[-5:]})"
            )
        loss_history.append(value)
        grads = backward(loss, params)
        state.learning_rate = train_config.lr_at(it)
        adam_step(params, grads, state)
        if progress is not None:
            progress(it, value)

    return Checkpoint(
        config=net_config,
        params=params,
        loss_history=loss_history,
        seed=train_config.seed,
        dataset_fingerprint=dataset_fingerprint(dataset),
        meta={
            "iterations": train_config.iterations,
            "learning_rate": train_config.learning_rate,
            "batch_size": train_config.batch_size,
            "final_loss": loss_history[-1],
        },
    )


def infer(ckpt: Checkpoint, image: np.ndarray) -> np.ndarray:
    """Single application of the denoiser; pure in (checkpoint, input)."""
    image = as_image(image)
    ckpt.config.check_input(*image.shape)
    x = Tensor(hu_to_unit(image)[None, None])
    out = forward(ckpt.config, ckpt.params, x)
    result = unit_to_hu(out.data[0, 0])
    if not np.all(np.isfinite(result)):
        raise TrainingDiverged("inference produced non-finite values")
    return result


def recursive_infer(ckpt: Checkpoint, image: np.ndarray, k: int) -> np.ndarray:
    """Apply the denoiser k times; k=0 returns the input unchanged."""
    if k < 0:
        raise ValueError(f"recursion depth must be >= 0, got {k}")
    out = as_image(image)
    for _ in range(k):
        out = infer(ckpt, out)
    return out
