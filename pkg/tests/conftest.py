import time
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from star_retinex.engine import StarParams, star_decompose
from star_retinex.image import read_image, rgb_to_hsv

DATA = Path(__file__).parent / "data"
CORPUS = sorted((DATA / "corpus").glob("*.png"))

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def corpus_value_planes():
    return {p.stem: rgb_to_hsv(read_image(p)).value for p in CORPUS}


@pytest.fixture(scope="session")
def corpus_v():
    return corpus_value_planes()


@pytest.fixture(scope="session")
def corpus_runs(corpus_v):
    """Default and ETV-ablation decompositions of every corpus image, with wall times."""
    runs = {}
    for name, v in corpus_v.items():
        t0 = time.perf_counter()
        emlv = star_decompose(v, StarParams())
        seconds = time.perf_counter() - t0
        etv = star_decompose(v, StarParams.etv_ablation())
        runs[name] = {"emlv": emlv, "etv": etv, "seconds": seconds}
    return runs


def total_variation(g):
    g = np.asarray(g)
    return float(np.abs(np.diff(g, axis=0)).sum() + np.abs(np.diff(g, axis=1)).sum())
