import math

import numpy as np
import pytest

from gridloss.network import Branch, Bus, BusKind, Network, ieee30
from gridloss.solver import solve


@pytest.fixture(scope="session")
def net30():
    return ieee30()


@pytest.fixture(scope="session")
def base30(net30):
    return solve(net30)


def two_bus(x=0.1, r=0.0, p_load=1.0, q_load=0.0, b=0.0, tap=1.0, v1=1.0):
    return Network(100.0, [
        Bus(1, BusKind.SLACK, v_set=v1),
        Bus(2, BusKind.LOAD, p_demand=p_load, q_demand=q_load),
    ], [Branch(1, 2, r, x, b, tap)])


def random_network(rng: np.random.Generator, n: int, *, shunts=True, taps=True, charging=True,
                   generators=True) -> Network:
    """Connected random network: a random spanning tree plus a few chords."""
    buses = [Bus(1, BusKind.SLACK, v_set=float(rng.uniform(1.0, 1.06)))]
    for k in range(2, n + 1):
        if generators and rng.random() < 0.3:
            buses.append(Bus(k, BusKind.GENERATOR, p_demand=float(rng.uniform(0, 0.2)),
                             q_demand=float(rng.uniform(0, 0.1)), p_gen=float(rng.uniform(0, 0.3)),
                             v_set=float(rng.uniform(0.98, 1.05)), q_min=-5.0, q_max=5.0))
        else:
            buses.append(Bus(k, BusKind.LOAD, p_demand=float(rng.uniform(0, 0.3)),
                             q_demand=float(rng.uniform(-0.05, 0.15)),
                             shunt_b=float(rng.uniform(-0.05, 0.1)) if shunts and rng.random() < 0.3 else 0.0))
    edges = [(int(rng.integers(1, k)), k) for k in range(2, n + 1)]
    for _ in range(n // 2):
        a, c = rng.choice(np.arange(1, n + 1), size=2, replace=False)
        if (a, c) not in edges and (c, a) not in edges:
            edges.append((int(a), int(c)))
    branches = []
    for a, c in edges:
        branches.append(Branch(
            a, c,
            r=float(rng.uniform(0.005, 0.08)),
            x=float(rng.uniform(0.03, 0.25)),
            b_charging=float(rng.uniform(0.0, 0.05)) if charging else 0.0,
            tap=float(rng.uniform(0.92, 1.06)) if taps and rng.random() < 0.25 else 1.0,
        ))
    return Network(100.0, buses, branches)


def two_bus_oracle(p, q, x, v1=1.0):
    """Receiving-end voltage of a lossless line from V2^4 + (2QX - V1^2)V2^2 + X^2(P^2+Q^2) = 0."""
    a = v1 ** 2 - 2 * q * x
    v2 = math.sqrt((a + math.sqrt(a * a - 4 * x * x * (p * p + q * q))) / 2)
    delta = -math.asin(p * x / (v1 * v2))
    return v2, delta


ORACLE_V2, ORACLE_DELTA = two_bus_oracle(1.0, 0.0, 0.1)


# criterion number -> (passed, title, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}  [{detail}]")
