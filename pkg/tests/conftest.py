import math

import numpy as np
import pytest

from heat_enclosure.geometry import Disk, Scene, rasterize

REF_RECT = (-0.5, -0.5, 0.5, 0.5)
REF_DISK = Disk((0.1, 0.05), 0.15)

# filled by the acceptance module, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_scene():
    return Scene(REF_RECT, (REF_DISK,), 1.0)


@pytest.fixture(scope="session")
def ref_mask(ref_scene):
    return rasterize(ref_scene, 128)


@pytest.fixture(scope="session")
def small_scene():
    return Scene(REF_RECT, (REF_DISK,), 1.0)


@pytest.fixture(scope="session")
def small_mask(small_scene):
    return rasterize(small_scene, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class TraceCache:
    """Memoized reference-scale simulations shared by the slow tests of one session."""

    def __init__(self):
        self._store = {}
        self.seconds = {}

    def get(self, scene, n, probe, n_steps=800, grading=2.0, profile=None):
        import time

        from heat_enclosure.forward import TimeGrid, simulate
        from heat_enclosure.probes import TemporalProfile

        profile = profile or TemporalProfile()
        key = (scene, n, probe, n_steps, grading, profile)
        if key not in self._store:
            mask = self.mask(scene, n)
            t0 = time.perf_counter()
            tg = TimeGrid.graded(n_steps, scene.final_time, grading)
            self._store[key] = simulate(scene, mask, probe, profile, tg, operator=self.operator(scene, n))
            self.seconds[key] = time.perf_counter() - t0
        return self._store[key]

    def sample(self, scene, n, probe, n_steps=800, grading=2.0):
        """Indicator sample of a simulation; the trace itself is not retained unless it already was."""
        from heat_enclosure.indicator import compute_indicator
        from heat_enclosure.probes import TemporalProfile

        key = ("J", scene, n, probe, n_steps, grading)
        if key not in self._store:
            tkey = (scene, n, probe, n_steps, grading, TemporalProfile())
            had = tkey in self._store
            self._store[key] = compute_indicator(self.get(scene, n, probe, n_steps, grading), probe)
            if not had:
                del self._store[tkey]
        return self._store[key]

    def mask(self, scene, n):
        key = ("mask", scene, n)
        if key not in self._store:
            self._store[key] = rasterize(scene, n)
        return self._store[key]

    def operator(self, scene, n):
        from heat_enclosure.grid import build_neumann_laplacian

        key = ("op", scene, n)
        if key not in self._store:
            self._store[key] = build_neumann_laplacian(self.mask(scene, n))
        return self._store[key]


@pytest.fixture(scope="session")
def traces():
    return TraceCache()
