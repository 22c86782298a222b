"""Shared fixtures: the bundled data panel and a disk cache for trained
networks so repeated test runs skip the expensive simulation stage."""

from __future__ import annotations

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from stmix.data import ingest
from stmix.estimator import DEFAULT_BOX, ParamBox, TrainedEstimator, generate_training_set, train_estimator
from stmix.network import TrainConfig

settings.register_profile("suite", deadline=None, max_examples=50, derandomize=True)
settings.load_profile("suite")

FIXTURE_DIR = Path(__file__).parent / "fixtures"
CACHE_DIR = Path(__file__).parent / "_cache"


@pytest.fixture(scope="session")
def fixture_paths() -> tuple[Path, Path]:
    stations = FIXTURE_DIR / "stations.csv"
    values = FIXTURE_DIR / "values.csv"
    if not stations.exists() or not values.exists():
        script = Path(__file__).parent.parent / "scripts" / "make_fixture.py"
        subprocess.run([sys.executable, str(script)], check=True)
    return stations, values


@pytest.fixture(scope="session")
def fixture_panel(fixture_paths):
    return ingest(*fixture_paths, scale="data")


@pytest.fixture(scope="session")
def small_layout() -> np.ndarray:
    """15 sites on a 40 km square, shared by the recovery studies."""
    rng = np.random.default_rng(99)
    return rng.uniform(0.0, 40.0, size=(15, 2))


def cached_estimator(
    variant: str,
    coords: np.ndarray,
    n_years: int,
    n_days: int,
    K: int,
    *,
    seed: int = 0,
    epochs: int = 40,
    p_censor: float = 0.0,
    box: ParamBox = DEFAULT_BOX,
    n_jobs: int = 1,
) -> TrainedEstimator:
    """Train (or reload) a network for the given layout and budget.

    The cache key covers everything that influences the weights; coords are
    rounded to stabilize the digest against float formatting.
    """
    key = {
        "variant": variant,
        "coords": np.round(coords, 9).tolist(),
        "n_years": n_years,
        "n_days": n_days,
        "K": K,
        "seed": seed,
        "epochs": epochs,
        "p_censor": p_censor,
        "box": [list(box.lows), list(box.highs)],
    }
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:20]
    CACHE_DIR.mkdir(exist_ok=True)
    path = CACHE_DIR / f"est_{digest}.json"
    if path.exists():
        return TrainedEstimator.load(path)
    ts = generate_training_set(
        variant, coords, n_years, n_days, K, seed, box=box, p_censor=p_censor, n_jobs=n_jobs
    )
    est = train_estimator(ts, train_config=TrainConfig(epochs=epochs, seed=seed))
    est.save(path)
    return est
