import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qbilstm.lstm import LstmDirectionParams, NetworkModel, OutputLayerParams  # noqa: E402
from qbilstm.quant import PrecisionConfig  # noqa: E402
from qbilstm.toy import toy_dir  # noqa: E402


def random_direction(rng, H, I, scale=1.0):
    return LstmDirectionParams.from_packed(
        rng.uniform(-scale, scale, (4 * H, I)),
        rng.uniform(-scale, scale, (4 * H, H)),
        rng.uniform(-scale, scale, 4 * H),
    )


def random_model(rng, H, I, K=3):
    alphabet = ["<blank>"] + [chr(ord("a") + n) for n in range(K - 1)]
    out = OutputLayerParams(rng.uniform(-1, 1, (K, 2 * H)), rng.uniform(-0.5, 0.5, K))
    return NetworkModel(random_direction(rng, H, I), random_direction(rng, H, I), out, alphabet)


def random_image(rng, C, I):
    return rng.integers(0, 256, (C, I)) / 256.0


def random_precision(rng):
    aq = int(rng.integers(1, 9))
    return PrecisionConfig(
        WQ=int(rng.integers(1, 9)),
        AQ=aq,
        IQ=int(rng.integers(1, 9)),
        RQ=int(rng.integers(1, 9)) if rng.random() < 0.5 else None,
    )


def direction_dicts(params):
    """Nested-list views of a direction for the pure-Python oracles."""
    gates = ("I", "i", "f", "o")
    return tuple({g: getattr(params, f"{p}_{g}").tolist() for g in gates} for p in ("W", "R", "b"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy():
    d = toy_dir()
    return {
        "dir": d,
        "model": os.path.join(d, "model.json"),
        "truth": os.path.join(d, "truth.tsv"),
    }


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed") for r in terminalreporter.stats.get(key, [])
               if r.when == "call" and "test_acceptance.py" in r.nodeid]
    if not reports:
        return
    terminalreporter.section("acceptance criteria")
    for r in sorted(reports, key=lambda r: r.nodeid):
        name = r.nodeid.split("::")[-1].removeprefix("test_")
        terminalreporter.write_line(f"{'PASS' if r.passed else 'FAIL'}  {name}  ({r.duration:.3f} s)")
