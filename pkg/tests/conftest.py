"""Shared fixtures: one properly trained desk-scale checkpoint per session.

Also hosts the acceptance-criterion reporting: criterion tests append their
PASS/FAIL lines to ``acceptance_lines`` and a terminal-summary hook replays
them at the end of the run, where per-test capture cannot swallow them.
"""

from dataclasses import dataclass

import numpy as np
import pytest

acceptance_lines: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)

from nrtw.metrics import ROI
from nrtw.networks import NetworkConfig
from nrtw.simulate import (
    NoiseSpec,
    PairedSample,
    PhantomProfile,
    add_noise,
    dataset_spec,
    default_profile,
    generate_phantom,
)
from nrtw.training import Checkpoint, TrainConfig, train

SIZE = 64
SIGMA = 25.0


@dataclass
class TrainedSetup:
    ckpt: Checkpoint
    profile: PhantomProfile
    clean: np.ndarray
    sample: PairedSample
    flat_roi: ROI
    edge_roi: ROI
    train_pairs: list


def build_trained_setup(size=SIZE, seed=7) -> TrainedSetup:
    spec = dataset_spec(size)
    pairs = [
        add_noise(generate_phantom(spec, seed=100 + i), NoiseSpec(sigma=SIGMA, seed=100 + i))
        for i in range(16)
    ]
    cfg = NetworkConfig(kind="plain", num_layers=4, hidden_channels=8)
    ckpt = train(
        pairs,
        cfg,
        TrainConfig(iterations=6000, learning_rate=3e-3, milestones=(), seed=seed),
    )
    profile = default_profile(size)
    clean = generate_phantom(profile.spec, seed=0)
    sample = add_noise(clean, NoiseSpec(sigma=SIGMA, seed=42))
    return TrainedSetup(
        ckpt=ckpt,
        profile=profile,
        clean=clean,
        sample=sample,
        flat_roi=ROI(*profile.flat_roi, label="flat"),
        edge_roi=ROI(*profile.edge_roi, label="edge"),
        train_pairs=pairs,
    )


@pytest.fixture(scope="session")
def trained(tmp_path_factory) -> TrainedSetup:
    return build_trained_setup()
