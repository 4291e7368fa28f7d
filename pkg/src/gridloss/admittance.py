"""Bus admittance matrix with off-nominal tap and shunt stamping."""
from __future__ import annotations

import numpy as np

from .network import Branch, Network, apply_shunts


def branch_admittance(branch: Branch) -> tuple[complex, complex]:
    """Series admittance and half line-charging admittance of a pi section."""
    z = complex(branch.r, branch.x)
    assert z != 0, f"degenerate impedance on branch {branch.from_bus}-{branch.to_bus}"
    return 1.0 / z, 0.5j * branch.b_charging


def branch_stamp(branch: Branch) -> tuple[complex, complex, complex]:
    """(y_ff, y_tt, y_ft) two-port entries; the tap sits on the from side."""
    y, ysh = branch_admittance(branch)
    a = branch.tap
    return (y + ysh) / (a * a), y + ysh, -y / a


def build_ybus(network: Network) -> np.ndarray:
    """Dense complex n x n admittance matrix, I = Y V."""
    n = network.n
    ybus = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        i, j = network.index(br.from_bus), network.index(br.to_bus)
        y_ff, y_tt, y_ft = branch_stamp(br)
        ybus[i, i] += y_ff
        ybus[j, j] += y_tt
        ybus[i, j] += y_ft
        ybus[j, i] += y_ft
    ybus[np.diag_indices(n)] += apply_shunts(network)
    return ybus


def dump_rows(network: Network, ybus: np.ndarray | None = None) -> list[tuple[int, int, float, float]]:
    """Nonzero entries as (from_id, to_id, g, b) in row-major order."""
    if ybus is None:
        ybus = build_ybus(network)
    ids = network.bus_ids()
    rows = []
    for i, j in zip(*np.nonzero(ybus)):
        rows.append((ids[i], ids[j], float(ybus[i, j].real), float(ybus[i, j].imag)))
    return rows
