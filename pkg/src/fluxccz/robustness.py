"""Monte Carlo over fabrication spread of junction critical currents.

Every junction energy scales linearly with its critical current: the small
junction sets each E_J, the array junctions set each fluxonium E_L. Seven
independent uniform factors are drawn per sample; charging energies and
couplings stay at their design values.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .composite import DeviceConfig, LabelingError, coupler_transition_table, dressed_model

FACTOR_NAMES = ("F1.E_J", "F2.E_J", "F3.E_J", "F1.E_L", "F2.E_L", "F3.E_L", "T.E_J")
QUANTITIES = ("zeta_zz_12", "zeta_zz_13", "zeta_zz_23", "zeta_zzz", "delta")


@dataclass(frozen=True)
class MonteCarloSpec:
    epsilon: float
    n_samples: int
    seed: int = 0
    levels_per_subsystem: int = 6
    n_keep: int = 32

    def __post_init__(self):
        if not 0 <= self.epsilon < 0.5:
            raise ValueError("epsilon must lie in [0, 0.5)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class SampleOutcome:
    """Spectrum of one sampled device; zetas in Hz, delta in GHz."""

    index: int
    zeta_zz: np.ndarray
    zeta_zzz: float
    delta: float
    factors: np.ndarray

    def values(self) -> dict[str, float]:
        return dict(zip(QUANTITIES, (*self.zeta_zz, self.zeta_zzz, self.delta)))


@dataclass
class MonteCarloResult:
    spec: MonteCarloSpec
    outcomes: list[SampleOutcome]
    designed: dict[str, float]
    failures: list[tuple[int, str]] = field(default_factory=list)

    def column(self, quantity: str) -> np.ndarray:
        return np.array([o.values()[quantity] for o in self.outcomes])


def sample_factors(spec: MonteCarloSpec, k: int) -> np.ndarray:
    """The seven scale factors of sample ``k``, uniform in ``[1 - eps, 1 + eps]``."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(k,)))
    return rng.uniform(1.0 - spec.epsilon, 1.0 + spec.epsilon, size=len(FACTOR_NAMES))


def apply_factors(config: DeviceConfig, factors: np.ndarray) -> DeviceConfig:
    flux = tuple(
        replace(p, E_J=p.E_J * factors[i], E_L=p.E_L * factors[3 + i])
        for i, p in enumerate(config.fluxoniums)
    )
    transmon = replace(config.transmon, E_J=config.transmon.E_J * factors[6])
    return replace(config, fluxoniums=flux, transmon=transmon)


def sample_device(config: DeviceConfig, spec: MonteCarloSpec, k: int) -> DeviceConfig:
    return apply_factors(config, sample_factors(spec, k))


def _spectrum_values(config: DeviceConfig, spec: MonteCarloSpec):
    dressed = dressed_model(config, spec.levels_per_subsystem, spec.n_keep)
    s = coupler_transition_table(dressed)
    return s.zeta_zz, s.zeta_zzz, s.delta


def evaluate_sample(config: DeviceConfig, spec: MonteCarloSpec, k: int) -> SampleOutcome | tuple[int, str]:
    factors = sample_factors(spec, k)
    try:
        zz, zzz, delta = _spectrum_values(apply_factors(config, factors), spec)
    except LabelingError as exc:
        return (k, str(exc))
    return SampleOutcome(k, zz, zzz, delta, factors)


def _evaluate_star(args):
    return evaluate_sample(*args)


def monte_carlo(config: DeviceConfig, spec: MonteCarloSpec, workers: int | None = None) -> MonteCarloResult:
    """Sample ``spec.n_samples`` devices and compute the coupler spectrum of each.

    Samples whose dressed states cannot be labeled are recorded in ``failures``
    and left out. ``workers > 1`` evaluates samples in worker processes; the
    outcome list is ordered by sample index either way.
    """
    zz, zzz, delta = _spectrum_values(config, spec)
    designed = dict(zip(QUANTITIES, (*zz, zzz, delta)))
    jobs = [(config, spec, k) for k in range(spec.n_samples)]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_evaluate_star, jobs, chunksize=8))
    else:
        results = [_evaluate_star(job) for job in jobs]
    outcomes = [r for r in results if isinstance(r, SampleOutcome)]
    failures = [r for r in results if not isinstance(r, SampleOutcome)]
    return MonteCarloResult(spec, outcomes, designed, failures)


def empirical_cdf(values: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and cumulative probabilities ``(i + 1) / n``."""
    v = np.sort(np.asarray(list(values), dtype=float))
    return v, np.arange(1, len(v) + 1) / len(v)


def cdf_rows(result: MonteCarloResult) -> list[tuple[str, float, float, float, bool]]:
    """Rows ``(quantity, value, cumulative_probability, epsilon, designed)``.

    One designed-value reference row (probability left as NaN) precedes each
    quantity's CDF.
    """
    rows = []
    eps = result.spec.epsilon
    for q in QUANTITIES:
        rows.append((q, result.designed[q], float("nan"), eps, True))
        values, probs = empirical_cdf(result.column(q))
        rows.extend((q, float(v), float(p), eps, False) for v, p in zip(values, probs))
    return rows


def interquartile_range(values) -> float:
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75])
    return float(q3 - q1)
