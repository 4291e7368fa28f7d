"""Per-branch flows and losses from a solved voltage state."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admittance import branch_admittance, branch_stamp
from .network import Branch, Network
from .solver import LoadFlowSolution, StateVector


@dataclass(frozen=True)
class BranchFlow:
    """Flows are measured into the branch at each terminal, per-unit.

    ``q_loss`` is the series I^2 X absorption; the charging capacitance
    generates ``q_charging``, so ``Im(s_from + s_to) == q_loss - q_charging``.
    """
    index: int
    from_bus: int
    to_bus: int
    s_from: complex
    s_to: complex
    p_loss: float
    q_loss: float
    q_charging: float
    i_series: complex


@dataclass(frozen=True)
class LossReport:
    branch_flows: list[BranchFlow]
    base_mva: float
    total_p_loss: float       # MW
    total_q_loss: float       # MVAR, series I^2 X
    total_q_charging: float   # MVAR generated by line charging
    total_q_shunt: float      # MVAR delivered by bus shunts
    total_generation: tuple[float, float]
    total_load: tuple[float, float]

    @property
    def p_loss_pu(self) -> float:
        return self.total_p_loss / self.base_mva


def branch_current(network: Network, state: StateVector, branch: Branch) -> tuple[complex, complex]:
    """Currents flowing into the branch at its from and to terminals."""
    v = state.voltage
    return _terminal_currents(branch, v[network.index(branch.from_bus)], v[network.index(branch.to_bus)])


def _terminal_currents(branch: Branch, vf: complex, vt: complex) -> tuple[complex, complex]:
    y_ff, y_tt, y_ft = branch_stamp(branch)
    return complex(y_ff * vf + y_ft * vt), complex(y_ft * vf + y_tt * vt)


def branch_flows(state: StateVector, network: Network) -> list[BranchFlow]:
    v = state.voltage
    flows = []
    for k, br in enumerate(network.branches):
        vf, vt = v[network.index(br.from_bus)], v[network.index(br.to_bus)]
        i_from, i_to = _terminal_currents(br, vf, vt)
        s_from = complex(vf * np.conj(i_from))
        s_to = complex(vt * np.conj(i_to))
        y, _ = branch_admittance(br)
        # current through the series element, on the to-side voltage base
        i_series = complex((vf / br.tap - vt) * y)
        q_charging = 0.5 * br.b_charging * (abs(vf / br.tap) ** 2 + abs(vt) ** 2)
        flows.append(BranchFlow(
            index=k, from_bus=br.from_bus, to_bus=br.to_bus,
            s_from=s_from, s_to=s_to,
            p_loss=s_from.real + s_to.real,
            q_loss=abs(i_series) ** 2 * br.x,
            q_charging=q_charging,
            i_series=i_series,
        ))
    return flows


def total_losses(flows: list[BranchFlow], network: Network, solution: LoadFlowSolution) -> LossReport:
    base = network.base_mva
    pd = np.array([b.p_demand for b in network.buses])
    qd = np.array([b.q_demand for b in network.buses])
    shunt = np.array([b.shunt_b for b in network.buses])
    p_gen = solution.p_injection + pd
    q_gen = solution.q_injection + qd
    return LossReport(
        branch_flows=flows,
        base_mva=base,
        total_p_loss=sum(f.p_loss for f in flows) * base,
        total_q_loss=sum(f.q_loss for f in flows) * base,
        total_q_charging=sum(f.q_charging for f in flows) * base,
        total_q_shunt=float(np.sum(shunt * solution.state.v_mag ** 2)) * base,
        total_generation=(float(p_gen.sum()) * base, float(q_gen.sum()) * base),
        total_load=(float(pd.sum()) * base, float(qd.sum()) * base),
    )


def loss_report(network: Network, solution: LoadFlowSolution) -> LossReport:
    return total_losses(branch_flows(solution.state, network), network, solution)


def bus_generation(network: Network, solution: LoadFlowSolution) -> tuple[np.ndarray, np.ndarray]:
    """Per-bus generation in per-unit (injection plus demand)."""
    pd = np.array([b.p_demand for b in network.buses])
    qd = np.array([b.q_demand for b in network.buses])
    return solution.p_injection + pd, solution.q_injection + qd
