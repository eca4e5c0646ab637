import numpy as np
import pytest

from strokepaint import _accel
from strokepaint.stroke_model import BrushType, StrokeParams


def interior_stroke(brush, rng, lo=0.3, hi=0.7):
    """Random stroke whose geometry stays well inside the canvas."""
    brush = BrushType.parse(brush)
    v = rng.random(brush.n_params)
    if brush.is_curve:
        v[0:6] = rng.uniform(lo, hi, 6)
        if brush is BrushType.MARKER:
            v[6] = rng.uniform(0.08, 0.2)
            v[10] = rng.uniform(0.3, 0.9)
        else:
            v[6:8] = rng.uniform(0.05, 0.12, 2)
            v[14] = rng.uniform(0.3, 0.9)
    else:
        v[0:2] = rng.uniform(0.4, 0.6, 2)
        v[2:4] = rng.uniform(0.15, 0.4, 2)
    return StrokeParams(brush, v)


def central_fd(f, x, step, richardson=True):
    """Central finite differences of a scalar function over every component of x.

    With ``richardson`` the differences at ``step`` and ``step / 2`` are
    combined as (4 D(h/2) - D(h)) / 3, which cancels the O(h^2) truncation
    term; textured strokes have large third derivatives at h = 1e-3.
    """
    x = np.asarray(x, dtype=np.float64)

    def diff(k, h):
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        return (f(xp) - f(xm)) / (2.0 * h)

    g = np.zeros_like(x)
    for k in range(x.size):
        d = diff(k, step)
        g.flat[k] = (4.0 * diff(k, step / 2.0) - d) / 3.0 if richardson else d
    return g


def fd_mismatches(analytic, numeric, rtol, floor=1e-6):
    """Indices where |analytic| > floor and the relative error exceeds rtol."""
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    bad = []
    for k, (a, n) in enumerate(zip(analytic, numeric)):
        if abs(a) <= floor and abs(n) <= floor:
            continue
        if abs(a - n) > rtol * max(abs(a), abs(n)):
            bad.append((k, a, n))
    return bad


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    prev = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


ABLATION_SEEDS = (0, 1, 2)


@pytest.fixture(scope="session")
def ablation_runs():
    """Default-config surrogate training of every variant for three seeds.

    Shared by the surrogate tests and the acceptance suite so the ~20 minute
    training runs once per session. Maps (seed, variant) to (TrainResult,
    seconds).
    """
    import time

    from strokepaint.surrogate import ABLATION_ORDER, TrainConfig, train, validation_set

    val = validation_set("oil")
    runs = {}
    for seed in ABLATION_SEEDS:
        for variant in ABLATION_ORDER:
            t0 = time.perf_counter()
            res = train(variant, TrainConfig(seed=seed), val)
            runs[seed, variant] = (res, time.perf_counter() - t0)
    return runs


# --- acceptance report -------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    """Store one acceptance verdict; printed as a block at the end of the run."""
    ACCEPTANCE_RESULTS[number] = (bool(ok), detail)
    print(f"acceptance {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
