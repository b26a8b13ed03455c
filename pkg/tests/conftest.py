"""Shared heavyweight fixtures for the acceptance suite.

Everything here is session-scoped: the desk dataset and the main
diffusion policy are built once and reused by the acceptance criteria
(and only by them), so a full `pytest` run pays the collection and
training cost a single time.
"""
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from catchlab.dataset import collect, save
from catchlab.diffusion import DpConfig, train_dp
from catchlab.sim import desk_world
from helpers import expert_source_factory


@pytest.fixture(scope="session")
def accept_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def desk_dataset(accept_dir):
    """500/100 quality-filtered desk dataset from the scripted expert."""
    world = desk_world()
    dataset, _ = collect(expert_source_factory(world), world,
                         {"train": 500, "val": 100}, seed=42,
                         m_points=128, exec_noise=0.12)
    root = accept_dir / "dataset"
    save(dataset, root)
    return dataset, root, world


@pytest.fixture(scope="session")
def main_dp(desk_dataset, accept_dir):
    """The cloud-conditioned diffusion policy used by the live-control
    criteria (shared autonomy, sweep, replay)."""
    dataset, _, world = desk_dataset
    cfg = DpConfig(visual_mode="u3r", d_f=64, train_steps=4000,
                   batch_size=64, lr=8e-4)
    policy, _ = train_dp(dataset, cfg, seed=0)
    path = accept_dir / "dp_u3r.ckpt"
    policy.save(path)
    return policy, path, world
