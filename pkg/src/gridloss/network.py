"""Network data model, case-file I/O and validation.

All quantities held by :class:`Network` are per-unit on ``base_mva``. The case
file stores powers in MW / MVAR and impedances already in per-unit.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Union

import numpy as np


class BusKind(enum.Enum):
    SLACK = "slack"
    GENERATOR = "gen"
    LOAD = "load"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_demand: float = 0.0
    q_demand: float = 0.0
    p_gen: float = 0.0
    v_set: float = 1.0
    q_min: float = 0.0
    q_max: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    # set for transformers whose tap happens to be nominal
    transformer: bool = False

    @property
    def is_transformer(self) -> bool:
        return self.transformer or self.tap != 1.0


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "_index", {b.id: k for k, b in enumerate(self.buses)})

    @property
    def n(self) -> int:
        return len(self.buses)

    def index(self, bus_id: int) -> int:
        """Internal 0-based position of an external bus id."""
        try:
            return self._index[bus_id]
        except KeyError:
            raise KeyError(f"bus {bus_id} not in network") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.index(bus_id)]

    def find_branch(self, from_bus: int, to_bus: int) -> int:
        """Position of the branch joining two buses, either orientation."""
        for k, br in enumerate(self.branches):
            if (br.from_bus, br.to_bus) in ((from_bus, to_bus), (to_bus, from_bus)):
                return k
        raise KeyError(f"branch {from_bus}-{to_bus} not found")

    @property
    def slack_index(self) -> int:
        return next(k for k, b in enumerate(self.buses) if b.kind is BusKind.SLACK)

    def with_bus(self, bus_id: int, **changes) -> "Network":
        k = self.index(bus_id)
        buses = list(self.buses)
        buses[k] = replace(buses[k], **changes)
        return Network(self.base_mva, buses, self.branches)

    def with_branch(self, position: int, **changes) -> "Network":
        branches = list(self.branches)
        branches[position] = replace(branches[position], **changes)
        return Network(self.base_mva, self.buses, branches)

    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]


class CaseFormatError(ValueError):
    """Malformed case or config file; carries the offending line."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if field is not None:
                where += f", field '{field}'"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.field = field


class NetworkValidationError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


_BUS_FIELDS = ("id", "kind", "p_demand_MW", "q_demand_MVAR", "p_gen_MW", "v_set_pu",
               "q_min_MVAR", "q_max_MVAR", "shunt_MVAR")
_BRANCH_FIELDS = ("from", "to", "r_pu", "x_pu", "b_charging_pu", "tap")


def iter_sections(text: str) -> Iterable[tuple[str | None, int, list[str]]]:
    """Yield ``(section, line_number, tokens)`` for every non-blank line.

    Shared by the case-file and GA-config readers.
    """
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            yield section, lineno, []
            continue
        yield section, lineno, line.split()


def _number(token: str, lineno: int, name: str, kind=float):
    try:
        value = kind(token)
    except ValueError:
        raise CaseFormatError(f"cannot parse {token!r} as {kind.__name__}", lineno, name) from None
    if kind is float and not math.isfinite(value):
        raise CaseFormatError(f"non-finite value {token!r}", lineno, name)
    return value


def parse_network(text: str) -> Network:
    """Parse case-file text into an unvalidated :class:`Network`."""
    base_mva = None
    raw_buses: list[tuple] = []
    branches: list[Branch] = []
    seen_sections = set()
    for section, lineno, tokens in iter_sections(text):
        if not tokens:
            if section not in ("system", "buses", "branches"):
                raise CaseFormatError(f"unknown section [{section}]", lineno)
            seen_sections.add(section)
            continue
        if section is None:
            raise CaseFormatError("data before first section header", lineno)
        if section == "system":
            key, sep, value = " ".join(tokens).partition("=")
            if not sep:
                raise CaseFormatError("expected key=value", lineno)
            key = key.strip()
            if key != "base_mva":
                raise CaseFormatError(f"unknown system key {key!r}", lineno, key)
            base_mva = _number(value.strip(), lineno, "base_mva")
            if base_mva <= 0:
                raise CaseFormatError("base_mva must be positive", lineno, "base_mva")
        elif section == "buses":
            if len(tokens) != len(_BUS_FIELDS):
                raise CaseFormatError(f"expected {len(_BUS_FIELDS)} fields, got {len(tokens)}", lineno)
            bus_id = _number(tokens[0], lineno, "id", int)
            try:
                kind = BusKind(tokens[1].lower())
            except ValueError:
                raise CaseFormatError(f"unknown bus kind {tokens[1]!r}", lineno, "kind") from None
            values = [_number(t, lineno, name) for t, name in zip(tokens[2:], _BUS_FIELDS[2:])]
            raw_buses.append((bus_id, kind, values))
        elif section == "branches":
            flagged = len(tokens) == len(_BRANCH_FIELDS) + 1 and tokens[-1].lower() == "xfmr"
            if flagged:
                tokens = tokens[:-1]
            if len(tokens) != len(_BRANCH_FIELDS):
                raise CaseFormatError(f"expected {len(_BRANCH_FIELDS)} fields, got {len(tokens)}", lineno)
            f = _number(tokens[0], lineno, "from", int)
            t = _number(tokens[1], lineno, "to", int)
            r, x, b, tap = (_number(tok, lineno, name) for tok, name in zip(tokens[2:], _BRANCH_FIELDS[2:]))
            branches.append(Branch(f, t, r, x, b, tap, transformer=flagged or tap != 1.0))
    if base_mva is None:
        raise CaseFormatError("missing [system] base_mva")
    for section in ("buses", "branches"):
        if section not in seen_sections:
            raise CaseFormatError(f"missing [{section}] section")
    buses = []
    for bus_id, kind, (pd, qd, pg, vset, qmin, qmax, shunt) in raw_buses:
        buses.append(Bus(bus_id, kind, pd / base_mva, qd / base_mva, pg / base_mva,
                         vset, qmin / base_mva, qmax / base_mva, shunt / base_mva))
    return Network(base_mva, buses, branches)


def validate(network: Network) -> list[str]:
    """Every invariant violation in ``network``; an empty list means valid."""
    problems: list[str] = []
    counts: dict[int, int] = {}
    for b in network.buses:
        counts[b.id] = counts.get(b.id, 0) + 1
    for bus_id, c in counts.items():
        if c > 1:
            problems.append(f"duplicate bus id {bus_id} ({c} occurrences)")
    slacks = [b.id for b in network.buses if b.kind is BusKind.SLACK]
    if not slacks:
        problems.append("no slack bus")
    elif len(slacks) > 1:
        problems.append("multiple slack buses: " + ", ".join(str(s) for s in slacks))
    for b in network.buses:
        if b.id <= 0:
            problems.append(f"bus {b.id}: id must be a positive integer")
        if b.q_min > b.q_max:
            problems.append(f"bus {b.id}: q_min {b.q_min:g} > q_max {b.q_max:g}")
        if b.kind is not BusKind.LOAD and not b.v_set > 0:
            problems.append(f"bus {b.id}: v_set must be positive")
        for name in ("p_demand", "q_demand", "p_gen", "v_set", "shunt_b"):
            if not math.isfinite(getattr(b, name)):
                problems.append(f"bus {b.id}: {name} is not finite")
    known = set(counts)
    for k, br in enumerate(network.branches):
        label = f"branch {k + 1} ({br.from_bus}-{br.to_bus})"
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                problems.append(f"{label}: references missing bus {end}")
        if br.from_bus == br.to_bus:
            problems.append(f"{label}: from_bus equals to_bus")
        if br.r < 0:
            problems.append(f"{label}: negative resistance")
        if br.r == 0 and br.x == 0:
            problems.append(f"{label}: zero impedance (r = x = 0)")
        if not br.tap > 0:
            problems.append(f"{label}: tap must be positive")
    if network.buses and not any("references missing" in p for p in problems):
        island = _unreached(network)
        if island:
            problems.append("islanded buses: " + ", ".join(str(i) for i in island))
    return problems


def _unreached(network: Network) -> list[int]:
    adjacency: dict[int, set[int]] = {b.id: set() for b in network.buses}
    for br in network.branches:
        adjacency[br.from_bus].add(br.to_bus)
        adjacency[br.to_bus].add(br.from_bus)
    start = network.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return [b.id for b in network.buses if b.id not in seen]


Source = Union[str, Path, bytes, io.IOBase]


def load_network(source: Source) -> Network:
    """Read, parse and validate a case file.

    ``source`` may be a path, raw bytes or a binary/text stream. Raises
    :class:`CaseFormatError` on malformed input and
    :class:`NetworkValidationError` listing every violated invariant.
    """
    text = _read_text(source)
    network = parse_network(text)
    problems = validate(network)
    if problems:
        raise NetworkValidationError(problems)
    return network


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def ieee30_path() -> Path:
    return Path(str(resources.files("gridloss") / "data" / "ieee30.case"))


def ieee30() -> Network:
    """The bundled IEEE 30-bus case."""
    return load_network(ieee30_path())


def serialize(network: Network) -> str:
    """Render a network in case-file syntax (inverse of :func:`parse_network`)."""
    base = network.base_mva
    lines = ["[system]", f"base_mva={base!r}", "", "[buses]"]
    for b in network.buses:
        lines.append(" ".join([
            str(b.id), b.kind.value,
            *(repr(v * base) for v in (b.p_demand, b.q_demand, b.p_gen)),
            repr(b.v_set),
            *(repr(v * base) for v in (b.q_min, b.q_max, b.shunt_b)),
        ]))
    lines += ["", "[branches]"]
    for br in network.branches:
        row = f"{br.from_bus} {br.to_bus} {br.r!r} {br.x!r} {br.b_charging!r} {br.tap!r}"
        if br.transformer and br.tap == 1.0:
            row += " xfmr"
        lines.append(row)
    return "\n".join(lines) + "\n"


def apply_shunts(network: Network) -> np.ndarray:
    """Per-bus shunt admittance ``j*shunt_b`` (capacitors positive)."""
    return 1j * np.array([b.shunt_b for b in network.buses], dtype=float)
