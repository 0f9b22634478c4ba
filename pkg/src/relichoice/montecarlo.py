"""Monte Carlo lifetimes: an oracle independent of the closed forms.

Each trial draws one exponential lifetime per leaf occurrence (offset by the
component's installation time) and one branch per choice node. A series dies
with its first child; a choice lives exactly as long as the branch it picked.

Randomness is counter-based: the uniform used by node ``slot`` in trial ``i``
is a hash of ``(seed, slot, i)``. Any subset of trials can therefore be
computed in any order, on any number of threads, with identical results.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from relichoice.model import Leaf, ProbChoice, Series, SystemExpr, SystemSpec

BLOCK = 1 << 16
_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SimulationConfig:
    trials: int
    seed: int = 0
    parallel_ok: bool = False
    lanes: int | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed <= _MASK:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.lanes is not None and self.lanes < 1:
            raise ValueError(f"lanes must be >= 1, got {self.lanes}")


@dataclass(frozen=True)
class SimulationEstimate:
    value: float
    std_error: float
    trials: int
    seed: int


def _mix(x: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _mix_int(x: int) -> int:
    x &= _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def uniforms(seed: int, slot: int, trial_index: np.ndarray) -> np.ndarray:
    """Uniform draws in the open interval (0, 1), one per trial index."""
    key = _mix_int(seed ^ _mix_int((slot + 1) * _GOLDEN))
    idx = np.asarray(trial_index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = (idx + np.uint64(1)) * np.uint64(_GOLDEN) + np.uint64(key)
        bits = _mix(_mix(state) ^ np.uint64(key))
    # top 53 bits, centred in their cell so 0 and 1 are unreachable
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


class _Sampler:
    """The expression tree compiled with a slot number per node position."""

    def __init__(self, spec: SystemSpec, seed: int):
        self.seed = seed
        self.n_slots = 0
        self.plan = self._compile(spec.root, spec)

    def _compile(self, expr: SystemExpr, spec: SystemSpec) -> tuple:
        slot = self.n_slots
        self.n_slots += 1
        if isinstance(expr, Leaf):
            comp = spec.components[expr.component]
            return ("leaf", slot, comp.t0, comp.lam)
        children = [self._compile(c, spec) for c in expr.children]
        if isinstance(expr, Series):
            return ("series", slot, children)
        if isinstance(expr, ProbChoice):
            cum = np.cumsum(np.asarray(expr.weights, dtype=np.float64))
            cum[-1] = 1.0
            return ("choice", slot, children, cum)
        raise TypeError(f"expression is not canonical: {expr!r}")

    def times(self, trial_index: np.ndarray) -> np.ndarray:
        return self._times(self.plan, trial_index)

    def _times(self, node: tuple, idx: np.ndarray) -> np.ndarray:
        kind, slot = node[0], node[1]
        if kind == "leaf":
            _, _, t0, lam = node
            return t0 - np.log(uniforms(self.seed, slot, idx)) / lam
        children = node[2]
        if kind == "series":
            out = self._times(children[0], idx)
            for child in children[1:]:
                out = np.minimum(out, self._times(child, idx))
            return out
        cum = node[3]
        pick = np.searchsorted(cum, uniforms(self.seed, slot, idx), side="right")
        pick = np.minimum(pick, len(cum) - 1)
        out = np.empty(len(idx))
        for k, child in enumerate(children):
            chosen = pick == k
            if chosen.any():
                out[chosen] = self._times(child, idx[chosen])
        return out


def sample_failure_time(spec: SystemSpec, trial_index: int, cfg: SimulationConfig) -> float:
    """Failure time of a single trial; equals entry ``trial_index`` of the batch."""
    idx = np.array([trial_index], dtype=np.uint64)
    return float(_Sampler(spec, cfg.seed).times(idx)[0])


def sample_failure_times(spec: SystemSpec, cfg: SimulationConfig) -> np.ndarray:
    """Failure times of trials ``0 .. cfg.trials - 1``, in trial order."""
    sampler = _Sampler(spec, cfg.seed)
    starts = range(0, cfg.trials, BLOCK)

    def block(start: int) -> np.ndarray:
        stop = min(start + BLOCK, cfg.trials)
        return sampler.times(np.arange(start, stop, dtype=np.uint64))

    lanes = 1
    if cfg.parallel_ok:
        lanes = cfg.lanes or os.cpu_count() or 1
    if lanes == 1 or len(starts) == 1:
        parts = [block(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            parts = list(pool.map(block, starts))
    return np.concatenate(parts)


def _proportion(hits: int, cfg: SimulationConfig) -> SimulationEstimate:
    p = hits / cfg.trials
    return SimulationEstimate(p, math.sqrt(p * (1 - p) / cfg.trials), cfg.trials, cfg.seed)


def estimate_survival(spec: SystemSpec, T: float, cfg: SimulationConfig) -> SimulationEstimate:
    """Fraction of trials still working at ``T``."""
    times = sample_failure_times(spec, cfg)
    return _proportion(int(np.count_nonzero(times > T)), cfg)


def estimate_survival_curve(
    spec: SystemSpec, Ts: Sequence[float], cfg: SimulationConfig
) -> list[SimulationEstimate]:
    """Survival at several times from one shared set of trials."""
    times = sample_failure_times(spec, cfg)
    return [_proportion(int(np.count_nonzero(times > T)), cfg) for T in Ts]


def estimate_mttf(spec: SystemSpec, cfg: SimulationConfig) -> SimulationEstimate:
    """Mean sampled failure time with its standard error."""
    times = sample_failure_times(spec, cfg)
    std_error = float(times.std(ddof=1)) / math.sqrt(cfg.trials) if cfg.trials > 1 else 0.0
    return SimulationEstimate(float(times.mean()), std_error, cfg.trials, cfg.seed)
