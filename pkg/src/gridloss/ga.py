"""Binary-coded genetic algorithm minimising total real line loss.

Every candidate is scored by a full Newton-Raphson solve. All random draws
come from one ``numpy.random.Generator`` consumed in a fixed order, and
fitness evaluation is a pure function of the chromosome, so results do not
depend on how many workers evaluate a generation.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .losses import loss_report
from .network import CaseFormatError, Network, iter_sections
from .solver import LoadFlowSolution, SingularJacobianError, SolverOptions, solve

PENALTY_FITNESS = 1e-9


class ControlKind(enum.Enum):
    GENERATOR_VOLTAGE = "voltage"
    GENERATOR_REAL_POWER = "pgen"
    TRANSFORMER_TAP = "tap"


@dataclass(frozen=True)
class ControlVariable:
    kind: ControlKind
    ref: int | tuple[int, int]  # bus id, or (from, to) for taps
    lower: float
    upper: float
    bits: int = 5

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"control {self.name}: lower must be below upper")
        if self.bits < 1:
            raise ValueError(f"control {self.name}: bits must be at least 1")

    @property
    def name(self) -> str:
        ref = f"{self.ref[0]}-{self.ref[1]}" if isinstance(self.ref, tuple) else str(self.ref)
        return f"{self.kind.value}:{ref}"


# Unit limits (MW, on 100 MVA) for the IEEE 30-bus machines at buses 2, 5, 8, 11, 13.
_IEEE30_PMAX = {2: 1.40, 5: 1.00, 8: 1.00, 11: 1.00, 13: 1.00}
_IEEE30_TAPS = ((4, 12), (6, 9), (6, 10), (28, 27))


def ieee30_controls() -> list[ControlVariable]:
    """14-variable control set: 5 voltages, 5 real outputs, 4 taps."""
    controls = [ControlVariable(ControlKind.GENERATOR_VOLTAGE, b, 0.95, 1.10) for b in _IEEE30_PMAX]
    controls += [ControlVariable(ControlKind.GENERATOR_REAL_POWER, b, 0.0, pmax)
                 for b, pmax in _IEEE30_PMAX.items()]
    controls += [ControlVariable(ControlKind.TRANSFORMER_TAP, t, 0.90, 1.10) for t in _IEEE30_TAPS]
    return controls


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    max_generations: int = 100
    crossover_rate: float = 0.9
    mutation_initial: float = 0.9
    beta: float = 0.05
    elite_count: int = 2
    rng_seed: int = 1
    controls: tuple[ControlVariable, ...] = field(default_factory=lambda: tuple(ieee30_controls()))

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be an even integer >= 2")
        if self.max_generations < 0:
            raise ValueError("max_generations must be non-negative")
        for name in ("crossover_rate", "mutation_initial"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not 1 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must satisfy 1 <= elite < population_size")

    @property
    def chromosome_length(self) -> int:
        return sum(c.bits for c in self.controls)


@dataclass
class Generation:
    best_loss_mw: float
    best_fitness: float
    mean_fitness: float


@dataclass
class OpfResult:
    best_chromosome: np.ndarray
    best_controls: list[float]
    best_loss_mw: float
    history: list[Generation]
    solution: LoadFlowSolution | None
    network: Network
    evaluations: int
    seed: int

    @property
    def best_fitness(self) -> float:
        return self.history[-1].best_fitness


# -- encoding ---------------------------------------------------------------

def decode(chromosome: Sequence[int], controls: Sequence[ControlVariable]) -> list[float]:
    """Map each control's bit slice (MSB first) linearly onto [lower, upper]."""
    bits = np.asarray(chromosome, dtype=np.uint8)
    expected = sum(c.bits for c in controls)
    if bits.size != expected:
        raise ValueError(f"chromosome has {bits.size} bits, controls need {expected}")
    values = []
    pos = 0
    for c in controls:
        d = 0
        for bit in bits[pos:pos + c.bits]:
            d = (d << 1) | int(bit)
        pos += c.bits
        values.append(c.lower + (c.upper - c.lower) * d / (2 ** c.bits - 1))
    return values


def apply_controls(network: Network, controls: Sequence[ControlVariable], values: Sequence[float]) -> Network:
    for c, value in zip(controls, values):
        if c.kind is ControlKind.TRANSFORMER_TAP:
            k = network.find_branch(*c.ref)
            branch = network.branches[k]
            network = network.with_branch(k, tap=value, transformer=branch.is_transformer)
        else:
            network.index(c.ref)
            attr = "v_set" if c.kind is ControlKind.GENERATOR_VOLTAGE else "p_gen"
            network = network.with_bus(c.ref, **{attr: value})
    return network


# -- fitness -----------------------------------------------------------------

def _score(network: Network, controls, chromosome, options: SolverOptions):
    candidate = apply_controls(network, controls, decode(chromosome, controls))
    try:
        sol = solve(candidate, options)
    except SingularJacobianError:
        return PENALTY_FITNESS, math.inf, None
    if not sol.converged:
        return PENALTY_FITNESS, math.inf, None
    loss_pu = loss_report(candidate, sol).p_loss_pu
    return 1.0 / (1.0 + loss_pu), loss_pu * network.base_mva, sol


def fitness(network: Network, controls, chromosome, solver_options: SolverOptions = SolverOptions()) -> float:
    """``1 / (1 + loss_pu)`` for a converged candidate, else a tiny penalty."""
    return _score(network, controls, chromosome, solver_options)[0]


# -- operators ---------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def init_population(config: GaConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=(config.population_size, config.chromosome_length), dtype=np.uint8)


def select_index(fitnesses: np.ndarray, rng: np.random.Generator) -> int:
    weights = np.cumsum(fitnesses)
    pick = rng.random() * weights[-1]
    return min(int(np.searchsorted(weights, pick, side="right")), len(weights) - 1)


def select_parent(population: np.ndarray, fitnesses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Roulette-wheel draw: member i with probability f_i / sum(f)."""
    return population[select_index(np.asarray(fitnesses, dtype=float), rng)].copy()


def crossover(parent_a: np.ndarray, parent_b: np.ndarray, rate: float, rng: np.random.Generator,
              cut: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Single-point crossover; ``cut`` forces the split position."""
    a, b = np.array(parent_a, copy=True), np.array(parent_b, copy=True)
    if len(a) != len(b):
        raise ValueError("parents differ in length")
    if rng.random() >= rate or len(a) < 2:
        return a, b
    if cut is None:
        cut = int(rng.integers(1, len(a)))
    a[cut:], b[cut:] = parent_b[cut:], parent_a[cut:]
    return a, b


def mutation_rate(generation: int, config: GaConfig) -> float:
    return config.mutation_initial * math.exp(-config.beta * generation)


def mutate(chromosome: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random(len(chromosome)) < rate
    return np.where(flips, 1 - chromosome, chromosome).astype(np.uint8)


# -- driver ------------------------------------------------------------------

class _Evaluator:
    """Memoised fitness over chromosome bytes."""

    def __init__(self, network, controls, options, workers):
        self.network, self.controls, self.options = network, controls, options
        self.workers = workers
        self.cache: dict[bytes, tuple] = {}

    def __call__(self, population: np.ndarray) -> list[tuple]:
        keys = [row.tobytes() for row in population]
        todo = {}
        for key, row in zip(keys, population):
            if key not in self.cache and key not in todo:
                todo[key] = row
        work = lambda row: _score(self.network, self.controls, row, self.options)
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(work, todo.values()))
        else:
            results = [work(row) for row in todo.values()]
        self.cache.update(zip(todo.keys(), results))
        return [self.cache[k] for k in keys]


def run_ga(network: Network, config: GaConfig = GaConfig(),
           solver_options: SolverOptions = SolverOptions(), workers: int = 1,
           progress=None) -> OpfResult:
    """Evolve for ``config.max_generations`` and return the best individual.

    ``history`` holds one entry for the initial population and one per
    generation thereafter.
    """
    rng = make_rng(config.rng_seed)
    controls = list(config.controls)
    evaluate = _Evaluator(network, controls, solver_options, workers)
    population = init_population(config, rng)
    history: list[Generation] = []
    best = None

    for generation in range(config.max_generations + 1):
        scored = evaluate(population)
        fit = np.array([s[0] for s in scored])
        order = np.argsort(-fit, kind="stable")
        lead = order[0]
        if best is None or fit[lead] > best[0]:
            best = (fit[lead], population[lead].copy(), scored[lead])
        history.append(Generation(best[2][1], float(best[0]), float(fit.mean())))
        if progress is not None:
            progress(generation, history[-1])
        if generation == config.max_generations:
            break
        rate = mutation_rate(generation, config)
        children = [population[k].copy() for k in order[: config.elite_count]]
        while len(children) < config.population_size:
            a = select_parent(population, fit, rng)
            b = select_parent(population, fit, rng)
            a, b = crossover(a, b, config.crossover_rate, rng)
            children.append(mutate(a, rate, rng))
            if len(children) < config.population_size:
                children.append(mutate(b, rate, rng))
        population = np.array(children, dtype=np.uint8)

    fit_value, chromosome, (_, loss_mw, sol) = best
    values = decode(chromosome, controls)
    return OpfResult(
        best_chromosome=chromosome,
        best_controls=values,
        best_loss_mw=loss_mw,
        history=history,
        solution=sol,
        network=apply_controls(network, controls, values),
        evaluations=len(evaluate.cache),
        seed=config.rng_seed,
    )


# -- config file -------------------------------------------------------------

_GA_KEYS = {
    "population": ("population_size", int),
    "generations": ("max_generations", int),
    "crossover": ("crossover_rate", float),
    "mutation_initial": ("mutation_initial", float),
    "beta": ("beta", float),
    "elite": ("elite_count", int),
    "seed": ("rng_seed", int),
}


def _parse_ref(token: str, kind: ControlKind, lineno: int):
    try:
        if kind is ControlKind.TRANSFORMER_TAP:
            f, t = token.split("-")
            return int(f), int(t)
        return int(token)
    except ValueError:
        raise CaseFormatError(f"bad control reference {token!r}", lineno, "ref") from None


def parse_ga_config(text: str) -> GaConfig:
    """Read a ``[ga]`` / ``[controls]`` config; missing keys keep defaults."""
    kwargs = {}
    controls = []
    saw_controls = False
    for section, lineno, tokens in iter_sections(text):
        if not tokens:
            if section not in ("ga", "controls"):
                raise CaseFormatError(f"unknown section [{section}]", lineno)
            saw_controls |= section == "controls"
            continue
        if section == "ga":
            key, sep, value = " ".join(tokens).partition("=")
            key = key.strip()
            if not sep or key not in _GA_KEYS:
                raise CaseFormatError(f"unknown ga setting {key!r}", lineno, key)
            attr, kind = _GA_KEYS[key]
            try:
                kwargs[attr] = kind(value.strip())
            except ValueError:
                raise CaseFormatError(f"cannot parse {value.strip()!r}", lineno, key) from None
        elif section == "controls":
            if len(tokens) not in (4, 5):
                raise CaseFormatError("expected 'kind ref lower upper [bits]'", lineno)
            try:
                kind = ControlKind(tokens[0].lower())
            except ValueError:
                raise CaseFormatError(f"unknown control kind {tokens[0]!r}", lineno, "kind") from None
            ref = _parse_ref(tokens[1], kind, lineno)
            try:
                lower, upper = float(tokens[2]), float(tokens[3])
                bits = int(tokens[4]) if len(tokens) == 5 else 5
                controls.append(ControlVariable(kind, ref, lower, upper, bits))
            except ValueError as exc:
                raise CaseFormatError(str(exc), lineno) from None
        else:
            raise CaseFormatError("data outside a section", lineno)
    if saw_controls:
        kwargs["controls"] = tuple(controls)
    try:
        return GaConfig(**kwargs)
    except ValueError as exc:
        raise CaseFormatError(str(exc)) from None


def load_ga_config(path: str | Path) -> GaConfig:
    return parse_ga_config(Path(path).read_text(encoding="utf-8"))


def format_ga_config(config: GaConfig) -> str:
    lines = ["[ga]"]
    for key, (attr, _) in _GA_KEYS.items():
        lines.append(f"{key}={getattr(config, attr)!r}")
    lines += ["", "[controls]"]
    for c in config.controls:
        ref = f"{c.ref[0]}-{c.ref[1]}" if isinstance(c.ref, tuple) else str(c.ref)
        lines.append(f"{c.kind.value} {ref} {c.lower!r} {c.upper!r} {c.bits}")
    return "\n".join(lines) + "\n"


def ieee30_config_path() -> Path:
    return Path(str(resources.files("gridloss") / "data" / "ieee30_ga.cfg"))
