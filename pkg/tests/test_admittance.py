import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridloss.admittance import branch_admittance, build_ybus, dump_rows
from gridloss.network import Branch, Bus, BusKind, Network

from conftest import random_network


@pytest.mark.parametrize("r, x, b, y, half", [
    (0.0, 0.5, 0.0, -2j, 0j),
    (0.02, 0.06, 0.06, 5 - 15j, 0.03j),
    (1.0, 0.0, 0.0, 1 + 0j, 0j),
])
def test_branch_admittance(r, x, b, y, half):
    ys, ysh = branch_admittance(Branch(1, 2, r, x, b))
    assert ys == pytest.approx(y, abs=1e-12)
    assert ysh == pytest.approx(half, abs=1e-15)


def _pair(tap=1.0):
    return Network(100.0, [Bus(1, BusKind.SLACK), Bus(2, BusKind.LOAD)], [Branch(1, 2, 0.0, 0.5, 0.0, tap)])


def test_single_line_stamp():
    np.testing.assert_allclose(build_ybus(_pair()), [[-2j, 2j], [2j, -2j]], atol=1e-15)


def test_transformer_stamp():
    np.testing.assert_allclose(build_ybus(_pair(tap=2.0)), [[-0.5j, 1j], [1j, -2j]], atol=1e-15)


def test_ieee30_ybus(net30):
    y = build_ybus(net30)
    assert y.shape == (30, 30)
    assert np.max(np.abs(y - y.T)) == 0.0
    i10 = net30.index(10)
    # diagonal of bus 10 = shunt + every incident branch stamp, tap 0.969 from the 6-10 transformer
    incident = 0j
    for br in net30.branches:
        ys, half = branch_admittance(br)
        if br.from_bus == 10:
            incident += (ys + half) / br.tap ** 2
        elif br.to_bus == 10:
            incident += ys + half
    assert y[i10, i10] == pytest.approx(incident + 0.19j, abs=1e-12)
    for (f, t), tap in {(6, 9): 0.978, (6, 10): 0.969, (4, 12): 0.932}.items():
        ys, _ = branch_admittance(net30.branches[net30.find_branch(f, t)])
        assert y[net30.index(f), net30.index(t)] == pytest.approx(-ys / tap, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 15))
def test_symmetry_exact(seed, n):
    y = build_ybus(random_network(np.random.default_rng(seed), n))
    assert np.max(np.abs(y - y.T)) == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 15))
def test_zero_row_sums_without_shunts(seed, n):
    net = random_network(np.random.default_rng(seed), n, shunts=False, taps=False, charging=False)
    assert np.max(np.abs(build_ybus(net).sum(axis=1))) < 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 12))
def test_row_sums_equal_charging(seed, n):
    net = random_network(np.random.default_rng(seed), n, shunts=False, taps=False)
    expected = np.zeros(n, dtype=complex)
    for br in net.branches:
        expected[net.index(br.from_bus)] += 0.5j * br.b_charging
        expected[net.index(br.to_bus)] += 0.5j * br.b_charging
    np.testing.assert_allclose(build_ybus(net).sum(axis=1), expected, atol=1e-12)


def test_incremental_tap_change(net30):
    k = net30.find_branch(4, 12)
    changed = net30.with_branch(k, tap=1.05)
    diff = build_ybus(changed) != build_ybus(net30)
    i, j = net30.index(4), net30.index(12)
    allowed = np.zeros_like(diff)
    allowed[[i, i, j, j], [i, j, i, j]] = True
    assert not np.any(diff & ~allowed)
    assert diff[i, i] and diff[i, j] and diff[j, i]


def test_dump_rows_nonzero_only(net30):
    rows = dump_rows(net30)
    y = build_ybus(net30)
    assert len(rows) == np.count_nonzero(y)
    first = rows[0]
    assert first[:2] == (1, 1)
    assert complex(first[2], first[3]) == y[0, 0]
