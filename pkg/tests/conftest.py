from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from riskplan.constraints import Box
from riskplan.scenario import Scenario, StaticObstacle, VehicleModel, double_integrator

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_vehicle(
    i: int = 0,
    start=(1.0, 1.0),
    goal=(8.0, 8.0),
    *,
    half: float = 0.25,
    x0_cov=None,
    w_cov=None,
    u_max: float = 1.0,
    radius: float = 0.1,
) -> VehicleModel:
    A, B = double_integrator(1.0)
    return VehicleModel(
        id=i,
        A=A,
        B=B,
        u_min=np.full(2, -u_max),
        u_max=np.full(2, u_max),
        x0_mean=np.array([start[0], start[1], 0.0, 0.0]),
        x0_cov=np.diag([1e-4, 1e-4, 1e-6, 1e-6]) if x0_cov is None else np.asarray(x0_cov, float),
        w_cov=np.diag([1e-4, 1e-4, 2e-5, 2e-5]) if w_cov is None else np.asarray(w_cov, float),
        goal=Box(np.asarray(goal) - half, np.asarray(goal) + half),
        radius=radius,
    )


def square(center, half) -> StaticObstacle:
    c = np.asarray(center, dtype=float)
    return StaticObstacle.from_vertices(c + half * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]))


def make_scenario(vehicles, obstacles=(), T=10, delta=0.05, psi=1e-6) -> Scenario:
    return Scenario(list(vehicles), list(obstacles), T, 1.0, delta, psi, Box([0, 0], [10, 10]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_milp(rng: np.random.Generator, n_binaries: int | None = None, big_m: float = 50.0):
    """Small random MILP mixing plain rows, equalities and big-M disjunctions."""
    from riskplan.milp import MilpModel, Sense

    model = MilpModel()
    n_cont = int(rng.integers(2, 6))
    xs = [model.add_var(-5.0, 5.0, float(rng.normal())) for _ in range(n_cont)]
    n_bin = int(rng.integers(1, 13)) if n_binaries is None else n_binaries
    bins = [model.add_var(binary=True) for _ in range(n_bin)]
    for b in bins:
        model.obj[b] = float(rng.normal(scale=0.5))
    for _ in range(int(rng.integers(1, 4))):
        model.add_row({x: float(rng.normal()) for x in xs}, Sense.LE, float(rng.uniform(0.5, 3.0)))
    if rng.random() < 0.3:
        model.add_row({xs[0]: 1.0, xs[1]: float(rng.normal())}, Sense.EQ, float(rng.normal()))
    # disjunctions over groups of two to four binaries
    start = 0
    while start < n_bin:
        size = min(int(rng.integers(2, 5)), n_bin - start)
        group = bins[start : start + size]
        for b in group:
            terms = {x: float(rng.normal()) for x in xs}
            terms[b] = -big_m
            model.add_row(terms, Sense.LE, float(rng.normal()))
        model.add_row({b: 1.0 for b in group}, Sense.LE, max(size - 1, 0) if size > 1 else 1)
        start += size
    return model


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember one acceptance verdict for the end-of-run summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
