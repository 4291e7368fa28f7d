"""Full Newton-Raphson load flow in polar coordinates.

Unknowns are the voltage angles of every non-slack bus followed by the voltage
magnitudes of every PQ bus; the mismatch vector and Jacobian rows use the same
ordering ``[dP(non-slack)..., dQ(PQ)...]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .admittance import build_ybus
from .network import BusKind, Network

PIVOT_FLOOR = 1e-12


class SingularJacobianError(ArithmeticError):
    def __init__(self, iteration: int):
        super().__init__(f"singular Jacobian at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class StateVector:
    v_mag: np.ndarray
    v_ang: np.ndarray

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    @classmethod
    def from_complex(cls, v: np.ndarray) -> "StateVector":
        v = np.asarray(v, dtype=complex)
        return cls(np.abs(v), np.angle(v))


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-6
    max_iterations: int = 30
    enforce_q_limits: bool = True
    flat_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class LoadFlowSolution:
    state: StateVector
    converged: bool
    iterations: int
    mismatch_trace: list[float]
    p_injection: np.ndarray
    q_injection: np.ndarray
    q_limit_switches: list[tuple[int, int]] = field(default_factory=list)
    # external ids of generator buses held at a reactive limit at exit
    limited_buses: dict[int, float] = field(default_factory=dict)


def initial_state(network: Network, flat_start: bool = True, warm: StateVector | None = None) -> StateVector:
    if not flat_start and warm is not None:
        return StateVector(np.array(warm.v_mag, dtype=float), np.array(warm.v_ang, dtype=float))
    v = np.array([1.0 if b.kind is BusKind.LOAD else b.v_set for b in network.buses])
    return StateVector(v, np.zeros(network.n))


def compute_injections(state: StateVector, ybus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = state.voltage
    s = v * np.conj(ybus @ v)
    return s.real, s.imag


def _scheduled(network: Network) -> tuple[np.ndarray, np.ndarray]:
    p = np.array([b.p_gen - b.p_demand for b in network.buses])
    q = np.array([-b.q_demand for b in network.buses])
    return p, q


def compute_mismatch(network: Network, state: StateVector, ybus: np.ndarray,
                     pq_set, pv_set, q_fixed: dict[int, float] | None = None) -> np.ndarray:
    """Scheduled minus calculated injections, ``[dP(pv+pq), dQ(pq)]``.

    ``q_fixed`` maps internal index to a reactive generation pinned at a limit
    for generator buses that were switched to PQ.
    """
    pvpq = np.sort(np.concatenate([np.asarray(list(pv_set), dtype=int), np.asarray(list(pq_set), dtype=int)]))
    pq = np.sort(np.asarray(list(pq_set), dtype=int))
    p_sched, q_sched = _scheduled(network)
    for k, qg in (q_fixed or {}).items():
        q_sched[k] += qg
    p, q = compute_injections(state, ybus)
    return np.concatenate([p_sched[pvpq] - p[pvpq], q_sched[pq] - q[pq]])


def build_jacobian(state: StateVector, ybus: np.ndarray, pq_set, pv_set) -> np.ndarray:
    pvpq = np.sort(np.concatenate([np.asarray(list(pv_set), dtype=int), np.asarray(list(pq_set), dtype=int)]))
    pq = np.sort(np.asarray(list(pq_set), dtype=int))
    v = state.voltage
    i_bus = ybus @ v
    v_norm = v / np.abs(v)
    ds_dang = 1j * v[:, None] * np.conj(np.diag(i_bus) - ybus * v[None, :])
    ds_dmag = v[:, None] * np.conj(ybus * v_norm[None, :]) + np.diag(np.conj(i_bus) * v_norm)
    return np.block([
        [ds_dang[np.ix_(pvpq, pvpq)].real, ds_dmag[np.ix_(pvpq, pq)].real],
        [ds_dang[np.ix_(pq, pvpq)].imag, ds_dmag[np.ix_(pq, pq)].imag],
    ])


def _lu_solve(jac: np.ndarray, rhs: np.ndarray, iteration: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.min(np.abs(np.diag(lu))) < PIVOT_FLOOR:
        raise SingularJacobianError(iteration)
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def solve(network: Network, options: SolverOptions = SolverOptions(),
          warm: StateVector | None = None, ybus: np.ndarray | None = None) -> LoadFlowSolution:
    if ybus is None:
        ybus = build_ybus(network)
    n = network.n
    slack = network.slack_index
    gens = [k for k, b in enumerate(network.buses) if b.kind is BusKind.GENERATOR]
    is_pv = np.zeros(n, dtype=bool)
    is_pv[gens] = True
    q_fixed: dict[int, float] = {}

    start = initial_state(network, options.flat_start, warm)
    v_mag, v_ang = start.v_mag.copy(), start.v_ang.copy()
    v_set = np.array([b.v_set for b in network.buses])
    v_mag[slack], v_ang[slack] = v_set[slack], 0.0
    switches: list[tuple[int, int]] = []

    def partitions():
        pv = np.flatnonzero(is_pv)
        pq = np.array([k for k in range(n) if k != slack and not is_pv[k]], dtype=int)
        return pv, pq

    def check_limits(iteration: int) -> bool:
        """Switch PV buses at violated limits to PQ and restore relieved ones."""
        _, q = compute_injections(StateVector(v_mag, v_ang), ybus)
        changed = False
        for k in gens:
            bus = network.buses[k]
            if is_pv[k]:
                qg = q[k] + bus.q_demand
                limit = bus.q_max if qg > bus.q_max else bus.q_min if qg < bus.q_min else None
                if limit is not None:
                    is_pv[k] = False
                    q_fixed[k] = limit
                    switches.append((bus.id, iteration))
                    changed = True
            else:
                at_max = q_fixed[k] == bus.q_max
                if (at_max and v_mag[k] > v_set[k]) or (not at_max and v_mag[k] < v_set[k]):
                    is_pv[k] = True
                    del q_fixed[k]
                    v_mag[k] = v_set[k]
                    changed = True
        return changed

    trace: list[float] = []
    iteration = 0
    converged = False
    recheck_budget = 2 * len(gens) + 1
    while True:
        pv, pq = partitions()
        state = StateVector(v_mag, v_ang)
        mis = compute_mismatch(network, state, ybus, pq, pv, q_fixed)
        worst = float(np.max(np.abs(mis))) if mis.size else 0.0
        if iteration > 0 and len(trace) < iteration:
            trace.append(worst)
        if worst < options.tolerance:
            if options.enforce_q_limits and recheck_budget > 0 and check_limits(iteration):
                recheck_budget -= 1
                continue
            converged = True
            break
        if iteration >= options.max_iterations:
            break
        jac = build_jacobian(state, ybus, pq, pv)
        step = _lu_solve(jac, mis, iteration + 1)
        pvpq = np.sort(np.concatenate([pv, pq]))
        v_ang[pvpq] += step[: len(pvpq)]
        v_mag[pq] += step[len(pvpq):]
        iteration += 1
        if options.enforce_q_limits:
            check_limits(iteration)

    state = StateVector(v_mag.copy(), v_ang.copy())
    p, q = compute_injections(state, ybus)
    limited = {network.buses[k].id: v for k, v in q_fixed.items()}
    return LoadFlowSolution(state, converged, iteration, trace, p, q, switches, limited)
