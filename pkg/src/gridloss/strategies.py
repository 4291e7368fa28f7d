"""Loss-reduction grid strategies and a base-vs-scenario comparator.

Each strategy is a pure ``Network -> Network`` transformation; the input is
never modified.
"""
from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

from .losses import loss_report
from .network import Network
from .solver import SolverOptions, SingularJacobianError, solve


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class LoadShare:
    from_bus: int
    to_bus: int
    fraction: float
    move_reactive: bool = False

    @property
    def label(self) -> str:
        return f"load-share {self.from_bus}->{self.to_bus} {self.fraction:g}"

    def apply(self, network: Network) -> Network:
        return share_load(network, self.from_bus, self.to_bus, self.fraction, self.move_reactive)


@dataclass(frozen=True)
class ReactiveInjection:
    bus: int
    q_mvar: float

    @property
    def label(self) -> str:
        return f"q-inject bus {self.bus} {self.q_mvar:g} MVAR"

    def apply(self, network: Network) -> Network:
        return inject_reactive(network, self.bus, self.q_mvar)


@dataclass(frozen=True)
class TapChange:
    from_bus: int
    to_bus: int
    new_tap: float

    @property
    def label(self) -> str:
        return f"tap {self.from_bus}-{self.to_bus} -> {self.new_tap:g}"

    def apply(self, network: Network) -> Network:
        k = _branch(network, self.from_bus, self.to_bus)
        if not network.branches[k].is_transformer:
            raise StrategyError(f"branch {self.from_bus}-{self.to_bus} is not a transformer")
        return set_tap(network, self.from_bus, self.to_bus, self.new_tap)


Strategy = Union[LoadShare, ReactiveInjection, TapChange]


def _branch(network: Network, from_bus: int, to_bus: int) -> int:
    try:
        return network.find_branch(from_bus, to_bus)
    except KeyError as exc:
        raise StrategyError(str(exc.args[0])) from None


def _require_bus(network: Network, bus_id: int) -> None:
    try:
        network.index(bus_id)
    except KeyError:
        raise StrategyError(f"bus {bus_id} not in network") from None


def share_load(network: Network, from_bus: int, to_bus: int, fraction: float,
               move_reactive: bool = False) -> Network:
    """Move ``fraction`` of the real demand at ``from_bus`` onto ``to_bus``."""
    _require_bus(network, from_bus)
    _require_bus(network, to_bus)
    if from_bus == to_bus:
        raise StrategyError("load-share from and to buses must differ")
    if not 0.0 <= fraction <= 1.0:
        raise StrategyError(f"load-share fraction {fraction:g} outside [0, 1]")
    src, dst = network.bus(from_bus), network.bus(to_bus)
    if not src.p_demand > 0:
        raise StrategyError(f"bus {from_bus} has no real demand to share")
    if fraction == 0:
        return network
    moved = fraction * src.p_demand
    changes_src = {"p_demand": src.p_demand - moved}
    changes_dst = {"p_demand": dst.p_demand + moved}
    if move_reactive:
        moved_q = fraction * src.q_demand
        changes_src["q_demand"] = src.q_demand - moved_q
        changes_dst["q_demand"] = dst.q_demand + moved_q
    return network.with_bus(from_bus, **changes_src).with_bus(to_bus, **changes_dst)


def inject_reactive(network: Network, bus: int, q_mvar: float) -> Network:
    """Offset the reactive demand at ``bus`` by a fixed injection in MVAR."""
    _require_bus(network, bus)
    if not q_mvar >= 0:
        raise StrategyError(f"reactive injection {q_mvar:g} MVAR must be non-negative")
    if q_mvar == 0:
        return network
    current = network.bus(bus).q_demand
    return network.with_bus(bus, q_demand=current - q_mvar / network.base_mva)


def set_tap(network: Network, from_bus: int, to_bus: int, new_tap: float) -> Network:
    k = _branch(network, from_bus, to_bus)
    if not new_tap > 0:
        raise StrategyError(f"tap {new_tap:g} must be positive")
    branch = network.branches[k]
    if branch.tap == new_tap:
        return network
    return network.with_branch(k, tap=new_tap, transformer=branch.is_transformer)


_SPEC_KEYS = {
    "load-share": ("from", "to", "frac"),
    "q-inject": ("bus", "mvar"),
    "tap": ("from", "to", "tap"),
}


def parse_strategy(text: str) -> Strategy:
    """Parse ``load-share:from=5,to=4,frac=0.15`` style tokens."""
    name, sep, rest = text.strip().partition(":")
    if not sep or name not in _SPEC_KEYS:
        raise StrategyError(f"unknown strategy {text!r}; expected one of {', '.join(_SPEC_KEYS)}")
    params: dict[str, str] = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq or not re.fullmatch(r"[a-z]+", key.strip()):
            raise StrategyError(f"malformed parameter {item!r} in {text!r}")
        params[key.strip()] = value.strip()
    expected = _SPEC_KEYS[name]
    unknown = set(params) - set(expected)
    if unknown:
        raise StrategyError(f"unknown parameter {sorted(unknown)[0]!r} in {text!r}")

    def num(key, kind=float):
        if key not in params:
            raise StrategyError(f"missing parameter {key!r} in {text!r}")
        try:
            value = kind(params[key])
        except ValueError:
            raise StrategyError(f"bad value {params[key]!r} for {key!r} in {text!r}") from None
        if isinstance(value, float) and not math.isfinite(value):
            raise StrategyError(f"non-finite value for {key!r} in {text!r}")
        return value

    if name == "load-share":
        frac = num("frac")
        if not 0.0 <= frac <= 1.0:
            raise StrategyError(f"frac={params['frac']} outside [0, 1] in {text!r}")
        return LoadShare(num("from", int), num("to", int), frac)
    if name == "q-inject":
        mvar = num("mvar")
        if mvar < 0:
            raise StrategyError(f"mvar={params['mvar']} must be non-negative in {text!r}")
        return ReactiveInjection(num("bus", int), mvar)
    tap = num("tap")
    if not tap > 0:
        raise StrategyError(f"tap={params['tap']} must be positive in {text!r}")
    return TapChange(num("from", int), num("to", int), tap)


def format_strategy(strategy: Strategy) -> str:
    """Inverse of :func:`parse_strategy`."""
    if isinstance(strategy, LoadShare):
        return f"load-share:from={strategy.from_bus},to={strategy.to_bus},frac={strategy.fraction!r}"
    if isinstance(strategy, ReactiveInjection):
        return f"q-inject:bus={strategy.bus},mvar={strategy.q_mvar!r}"
    return f"tap:from={strategy.from_bus},to={strategy.to_bus},tap={strategy.new_tap!r}"


# the three reproduction scenarios for the IEEE 30-bus case
IEEE30_STRATEGIES: tuple[Strategy, ...] = (
    LoadShare(5, 4, 0.15),
    ReactiveInjection(30, 1.0),
    TapChange(4, 12, 1.0),
)


@dataclass
class ComparisonRow:
    label: str
    converged: bool
    p_loss_mw: float
    q_loss_mvar: float
    delta_p_mw: float
    min_v_bus: int
    min_v: float
    network: Network
    solution: object = None
    report: object = None


def _evaluate(label: str, network: Network, options: SolverOptions) -> ComparisonRow:
    nan = float("nan")
    try:
        sol = solve(network, options)
    except SingularJacobianError:
        return ComparisonRow(label, False, nan, nan, nan, -1, nan, network)
    report = loss_report(network, sol)
    k = int(sol.state.v_mag.argmin())
    p = report.total_p_loss if sol.converged else nan
    q = report.total_q_loss if sol.converged else nan
    return ComparisonRow(label, sol.converged, p, q, nan, network.buses[k].id,
                         float(sol.state.v_mag[k]), network, sol, report)


def compare(network: Network, strategies, options: SolverOptions = SolverOptions(),
            workers: int = 1) -> list[ComparisonRow]:
    """Solve the base case and every strategy scenario; base row first."""
    scenarios = [("base", network)] + [(s.label, s.apply(network)) for s in strategies]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda item: _evaluate(item[0], item[1], options), scenarios))
    else:
        rows = [_evaluate(label, net, options) for label, net in scenarios]
    base = rows[0].p_loss_mw
    for row in rows:
        row.delta_p_mw = row.p_loss_mw - base
    return rows
