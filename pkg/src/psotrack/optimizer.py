"""Particle swarm optimization over a box-bounded continuous space.

Fitness is maximized. Each particle owns an independent random substream
spawned from the run seed, so results do not depend on the order or
concurrency with which fitness values are computed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np


class TerminationReason(enum.Enum):
    MAX_ITERATIONS = "MaxIterations"
    STALLED = "Stalled"
    THRESHOLD_REACHED = "ThresholdReached"


@dataclass(frozen=True)
class Topology:
    """Neighbourhood rule: ``global``, ``circle``, ``local`` (k per side) or ``wheel``."""

    kind: str = "global"
    k: int = 1

    def __post_init__(self):
        if self.kind not in ("global", "circle", "local", "wheel"):
            raise ValueError(f"unknown topology {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Topology":
        text = text.strip().lower()
        if text.startswith("local"):
            inner = text[len("local"):].strip("():= ")
            return cls("local", int(inner) if inner else 2)
        return cls(text)

    def __str__(self):
        return f"local({self.k})" if self.kind == "local" else self.kind


GLOBAL = Topology("global")
CIRCLE = Topology("circle")
WHEEL = Topology("wheel")


@dataclass(frozen=True)
class SearchBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("bounds must be equal-length, nonempty vectors")
        if not np.all(lo < hi):
            raise ValueError("every lower bound must be below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, half_widths) -> "SearchBounds":
        h = np.asarray(half_widths, dtype=float)
        return cls(-h, h)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 40
    inertia: float | tuple[float, float] = (0.9, 0.4)
    cognitive_weight: float = 2.0
    social_weight: float = 2.0
    topology: Topology = GLOBAL
    max_iterations: int = 100
    stall_iterations: int = 15
    fitness_threshold: Optional[float] = None
    # an iteration must raise the best fitness by more than this to reset the stall counter
    improvement_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.stall_iterations < 1:
            raise ValueError("stall_iterations must be >= 1")
        if self.improvement_threshold < 0:
            raise ValueError("improvement_threshold must be >= 0")
        if self.topology.kind == "local" and not 1 <= self.topology.k < self.swarm_size:
            raise ValueError("local(k) needs 1 <= k < swarm_size")

    def inertia_at(self, iteration: int) -> float:
        """Inertia for the update that follows ``iteration`` (1-based)."""
        if isinstance(self.inertia, (tuple, list)):
            start, end = self.inertia
            frac = (iteration - 1) / max(self.max_iterations - 1, 1)
            return start + (end - start) * min(frac, 1.0)
        return float(self.inertia)


PRESETS = {
    "common": dict(swarm_size=40, inertia=(0.9, 0.4), cognitive_weight=2.0, social_weight=2.0),
    "trelea": dict(swarm_size=40, inertia=0.6, cognitive_weight=1.7, social_weight=1.7),
}


def preset(name: str, **overrides) -> PsoConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown PSO preset {name!r}; choose from {sorted(PRESETS)}") from None
    return PsoConfig(**{**base, **overrides})


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    personal_best_position: np.ndarray
    personal_best_fitness: float = -math.inf


@dataclass
class Swarm:
    particles: list[Particle]
    rngs: list[np.random.Generator]
    bounds: SearchBounds

    def __len__(self):
        return len(self.particles)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.particles])

    def best_fitnesses(self) -> np.ndarray:
        return np.array([p.personal_best_fitness for p in self.particles])


@dataclass
class OptimizationResult:
    best_position: np.ndarray
    best_fitness: float
    iterations_used: int
    termination_reason: TerminationReason
    trace: list[float] = field(default_factory=list)
    mean_trace: list[float] = field(default_factory=list)

    def trace_rows(self):
        """Rows of (iteration, best_fitness, mean_fitness)."""
        return [(i + 1, b, m) for i, (b, m) in enumerate(zip(self.trace, self.mean_trace))]


def init_swarm(cfg: PsoConfig, bounds: SearchBounds) -> Swarm:
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.swarm_size)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seeds]
    half = bounds.span / 2.0
    particles = []
    for rng in rngs:
        x = rng.uniform(bounds.lower, bounds.upper)
        v = rng.uniform(-half, half)
        particles.append(Particle(x, v, x.copy()))
    return Swarm(particles, rngs, bounds)


def neighbors(n: int, index: int, topology: Topology) -> list[int]:
    """Sorted particle indices whose personal bests particle ``index`` can see."""
    if topology.kind == "global":
        return list(range(n))
    if topology.kind == "wheel":
        return list(range(n)) if index == 0 else [0, index]
    k = 1 if topology.kind == "circle" else topology.k
    return sorted({(index + d) % n for d in range(-k, k + 1)})


def neighborhood_best(swarm: Swarm, index: int, topology: Topology) -> np.ndarray:
    idx = neighbors(len(swarm), index, topology)
    fits = [swarm.particles[j].personal_best_fitness for j in idx]
    # first maximum in index order breaks ties
    return swarm.particles[idx[int(np.argmax(fits))]].personal_best_position


def update_particle(
    p: Particle,
    g: np.ndarray,
    cfg: PsoConfig,
    bounds: SearchBounds,
    rng,
    inertia: float | None = None,
) -> Particle:
    """One velocity/position step, clamped to ``bounds``.

    Clamped dimensions have their velocity zeroed.
    """
    w = cfg.inertia_at(1) if inertia is None else inertia
    k = p.position.size
    sigma_c = rng.random(k)
    sigma_s = rng.random(k)
    v = (
        w * p.velocity
        + cfg.cognitive_weight * sigma_c * (p.personal_best_position - p.position)
        + cfg.social_weight * sigma_s * (np.asarray(g) - p.position)
    )
    x = p.position + v
    clamped = (x < bounds.lower) | (x > bounds.upper)
    x = np.clip(x, bounds.lower, bounds.upper)
    v = np.where(clamped, 0.0, v)
    return Particle(x, v, p.personal_best_position, p.personal_best_fitness)


def _evaluate(fitness, positions, batch, executor) -> np.ndarray:
    if batch:
        fits = np.asarray(fitness(positions), dtype=float).reshape(-1)
        if fits.size != len(positions):
            raise ValueError("batch fitness returned the wrong number of values")
    elif executor is not None:
        fits = np.array(list(executor.map(fitness, list(positions))), dtype=float)
    else:
        fits = np.array([fitness(x) for x in positions], dtype=float)
    return np.where(np.isnan(fits), -math.inf, fits)


def optimize(
    fitness: Callable,
    cfg: PsoConfig,
    bounds: SearchBounds,
    *,
    batch: bool = False,
    executor=None,
    initial_positions=None,
    callback: Callable[[int, Swarm], None] | None = None,
) -> OptimizationResult:
    """Maximize ``fitness`` over ``bounds``.

    ``fitness`` maps a k-vector to a float (``-inf`` marks an invalid point).
    With ``batch=True`` it instead maps an (n, k) array to n values. With an
    ``executor`` the per-particle calls go through ``executor.map``; results
    are identical to the serial schedule as long as ``fitness`` is pure.
    ``initial_positions`` overwrite the first particles' random starts.
    ``callback(iteration, swarm)`` is invoked after each iteration's update.
    """
    swarm = init_swarm(cfg, bounds)
    if initial_positions is not None:
        for p, x0 in zip(swarm.particles, np.atleast_2d(initial_positions)):
            x0 = np.clip(np.asarray(x0, dtype=float), bounds.lower, bounds.upper)
            p.position = x0.copy()
            p.personal_best_position = x0.copy()

    best_fitness = -math.inf
    best_position = swarm.particles[0].position.copy()
    trace: list[float] = []
    mean_trace: list[float] = []
    stall = 0
    reason = TerminationReason.MAX_ITERATIONS
    iteration = 0

    for iteration in range(1, cfg.max_iterations + 1):
        fits = _evaluate(fitness, swarm.positions(), batch, executor)

        for p, f in zip(swarm.particles, fits):
            if f > p.personal_best_fitness:
                p.personal_best_fitness = float(f)
                p.personal_best_position = p.position.copy()

        previous = best_fitness
        j = int(np.argmax(swarm.best_fitnesses()))
        if swarm.particles[j].personal_best_fitness > best_fitness:
            best_fitness = swarm.particles[j].personal_best_fitness
            best_position = swarm.particles[j].personal_best_position.copy()
        improved = best_fitness > previous and (
            previous == -math.inf or best_fitness - previous > cfg.improvement_threshold
        )
        stall = 0 if improved else stall + 1

        trace.append(best_fitness)
        finite = fits[np.isfinite(fits)]
        mean_trace.append(float(finite.mean()) if finite.size else -math.inf)

        if cfg.fitness_threshold is not None and best_fitness >= cfg.fitness_threshold:
            reason = TerminationReason.THRESHOLD_REACHED
            break
        if stall >= cfg.stall_iterations:
            reason = TerminationReason.STALLED
            break
        if iteration == cfg.max_iterations:
            reason = TerminationReason.MAX_ITERATIONS
            break

        w = cfg.inertia_at(iteration)
        guides = [neighborhood_best(swarm, i, cfg.topology).copy() for i in range(len(swarm))]
        swarm.particles = [
            update_particle(p, g, cfg, bounds, rng, w)
            for p, g, rng in zip(swarm.particles, guides, swarm.rngs)
        ]
        if callback is not None:
            callback(iteration, swarm)

    return OptimizationResult(best_position, best_fitness, iteration, reason, trace, mean_trace)


def with_seed(cfg: PsoConfig, seed: int) -> PsoConfig:
    return replace(cfg, seed=seed)
