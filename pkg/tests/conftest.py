import numpy as np
import pytest

from egoego import bodygen, geom3d, trajkit


def make_walk(T=60, seed=0, turn=0.3, speed=1.2):
    """Head trajectory of a procedural walk."""
    params = bodygen.MotionParams(speed=speed, turn_rate=turn, seed=seed)
    return bodygen.head_from_motion(bodygen.procedural_motion(params, T))


def random_slam(rng, scale_range=(0.3, 3.0)):
    lo, hi = np.log(scale_range[0]), np.log(scale_range[1])
    return trajkit.SlamEmulation(
        scale=float(np.exp(rng.uniform(lo, hi))), rotation=geom3d.random_rotation(rng), seed=int(rng.integers(1 << 30))
    )


@pytest.fixture
def walk():
    return make_walk()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, name): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, name = mark.args
    if rep.when == "call" or n not in _ACCEPTANCE:
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = "" if rep.passed else str(rep.longrepr.reprcrash.message if hasattr(rep.longrepr, "reprcrash") else rep.longrepr)
        _ACCEPTANCE[n] = (name, status, rep.duration, detail.splitlines()[0][:160] if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        name, status, dur, detail = _ACCEPTANCE[n]
        line = f"criterion {n} ({name}): {status} [{dur:.1f} s]"
        terminalreporter.write_line(line + (f" - {detail}" if detail else ""))
