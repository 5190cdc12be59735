import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from protoseg.data import Episode, EpisodicDataset, SyntheticConfig, generate_synthetic_dataset  # noqa: E402
from protoseg.embedder import init_params  # noqa: E402
from protoseg.rng import Xoshiro256  # noqa: E402

SMALL_CFG = SyntheticConfig(height=16, width=16, images_per_class=5, seed=11)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    generate_synthetic_dataset(SMALL_CFG, out)
    return out


@pytest.fixture(scope="session")
def small_dataset(small_dataset_dir):
    return EpisodicDataset.from_manifest(small_dataset_dir / "manifest.json")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_masks(rng, n, h, w, n_labels, ensure=None):
    """Random masks that each contain every label in ``ensure``."""
    out = []
    for _ in range(n):
        m = rng.integers(0, n_labels, size=(h, w))
        for i, lab in enumerate(ensure or []):
            m.flat[i] = lab
        out.append(m)
    return out


def active_params(seed, hidden=4, pyramid_hidden=3, dim=5):
    """Embedder weights whose hidden units are all active, for gradient checks."""
    p = init_params(3, hidden, pyramid_hidden, dim, seed=seed)
    r = Xoshiro256(seed + 1000)
    p.arrays["b1"] = r.uniform_array((hidden,), 0.2, 0.5)
    p.arrays["b2"] = r.uniform_array((pyramid_hidden,), 0.2, 0.5)
    return p


def tiny_episode(seed, size=6, way=1, shot=1, n_query=1):
    """Hand-built episode with random 6x6 images; every mask has bg and its class."""
    r = np.random.default_rng(seed)

    def mask(c):
        m = r.integers(0, way + 1, size=(size, size))
        m[0, 0] = 0
        m[-1, -1] = c
        return m

    support_images = [[r.uniform(0, 1, size=(size, size, 3)) for _ in range(shot)] for _ in range(way)]
    support_masks = [[mask(c) for _ in range(shot)] for c in range(1, way + 1)]
    query_images = [r.uniform(0, 1, size=(size, size, 3)) for _ in range(n_query)]
    query_masks = [mask(1 + q % way) for q in range(n_query)]
    return Episode(list(range(1, way + 1)), support_images, support_masks, query_images, query_masks)


ACCEPTANCE_CFG = SyntheticConfig(seed=2024)


@pytest.fixture(scope="session")
def acceptance_dataset_dir(tmp_path_factory):
    """Default 48x48 generator config: 4 seen and 2 unseen classes."""
    out = tmp_path_factory.mktemp("acceptance")
    generate_synthetic_dataset(ACCEPTANCE_CFG, out)
    return out


@pytest.fixture(scope="session")
def acceptance_dataset(acceptance_dataset_dir):
    return EpisodicDataset.from_manifest(acceptance_dataset_dir / "manifest.json")


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
