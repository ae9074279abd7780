"""Pressure, correlation decay, Green-Kubo variance, and CLT diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from .errors import CoboundaryRefusedError
from .maps import MapSpec, orbit_birkhoff_samples
from .operator import EquilibriumState, SpectralTriple

#: Absolute variance floor for the coboundary flag; discretization noise in
#: the Green-Kubo series sits orders of magnitude above the spectral tail
#: bound, so the pure tail-bound rule alone cannot fire.
COBOUNDARY_ABS_TOL = 1e-6


def pressure(lam: float) -> float:
    """Topological pressure log(lambda)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return math.log(lam)


@dataclass(frozen=True)
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    tau_hat: Optional[float]
    prefactor: Optional[float]
    noise_floor: float = 1e-12


@dataclass(frozen=True)
class VarianceReport:
    sigma2: float
    lag_max: int
    tail_bound: Optional[float]
    coboundary: bool
    series: CorrelationSeries
    mean: float


def _normalized_push(state: EquilibriumState, vec, n_steps):
    """Iterates of (A/lambda) applied to an h-weighted density vector."""
    A = state.triple.matrix.A
    lam = state.triple.lam
    out = [vec]
    w = vec
    for _ in range(n_steps):
        w = (A @ w) / lam
        out.append(w)
    return out


def correlations(m: MapSpec, state: EquilibriumState, g: Callable,
                 psi: Callable, n_max: int, noise_floor=1e-12) -> CorrelationSeries:
    """C(k) = int (g o f^k) psi dmu - int g dmu int psi dmu, spectrally.

    Uses int (g o f^k) psi dmu = <nu, g * (A/lambda)^k (psi h)> on the grid,
    so the decay rate reflects the discretized operator rather than Monte
    Carlo noise.  tau_hat is the log-linear fit over lags above the noise
    floor (None when everything is below it).
    """
    x = state.grid
    nu = state.triple.nu
    h = state.triple.h
    gx = np.asarray(g(x), dtype=float)
    psix = np.asarray(psi(x), dtype=float)
    mean_g = float(gx @ state.mu)
    mean_psi = float(psix @ state.mu)
    pushes = _normalized_push(state, psix * h, n_max)
    vals = np.array([float(nu @ (gx * w)) - mean_g * mean_psi for w in pushes])
    lags = np.arange(n_max + 1)

    keep = (lags >= 1) & (np.abs(vals) > noise_floor)
    tau_hat = prefactor = None
    if np.count_nonzero(keep) >= 2:
        slope, intercept = np.polyfit(lags[keep], np.log(np.abs(vals[keep])), 1)
        tau_hat = float(np.exp(slope))
        prefactor = float(np.exp(intercept))
    return CorrelationSeries(lags=lags, values=vals, tau_hat=tau_hat,
                             prefactor=prefactor, noise_floor=noise_floor)


def clt_variance(m: MapSpec, triple: SpectralTriple, psi: Callable,
                 lag_max: int, coboundary_abs_tol=COBOUNDARY_ABS_TOL) -> VarianceReport:
    """Green-Kubo variance sigma^2 = C_v(0) + 2 sum_{j<=lag_max} C_v(j).

    v is psi centered to zero mu-mean.  The spectral tail bound
    gap^(lag_max+1)/(1-gap) * C_v(0) controls the truncated series; the
    coboundary flag fires when sigma^2 falls below 10x that bound or below
    the absolute floor (discretization noise scale).
    """
    if lag_max < 1:
        raise ValueError("lag_max must be >= 1")
    state = _equilibrium(triple)
    x = state.grid
    mean = float(np.asarray(psi(x), dtype=float) @ state.mu)
    v = lambda z, psi=psi, c=mean: np.asarray(psi(z), dtype=float) - c
    series = correlations(m, state, v, v, lag_max)
    c0 = series.values[0]
    sigma2 = float(c0 + 2.0 * np.sum(series.values[1:]))

    gap = triple.gap_ratio
    if gap < 1.0:
        tail = float(abs(c0) * gap ** (lag_max + 1) / (1.0 - gap))
    else:
        tail = None
    flag_level = coboundary_abs_tol if tail is None else max(10.0 * tail, coboundary_abs_tol)
    return VarianceReport(
        sigma2=sigma2,
        lag_max=lag_max,
        tail_bound=tail,
        coboundary=bool(sigma2 < flag_level),
        series=series,
        mean=mean,
    )


def _equilibrium(triple: SpectralTriple) -> EquilibriumState:
    from .operator import equilibrium_measure
    return equilibrium_measure(triple)


def sample_from_state(state: EquilibriumState, size, rng):
    """Draw from mu by inverse CDF over cells with intra-cell uniform jitter."""
    cum = np.cumsum(state.mu)
    cum[-1] = 1.0
    u = rng.random(size)
    cells = np.searchsorted(cum, u, side="right")
    jitter = rng.random(size)
    n = state.mu.size
    return (cells + jitter) / n


def rng_for(master_seed, *counters):
    """Declared seed-splitting rule: spawn_key = the batch counters."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(c) for c in counters)))


@dataclass(frozen=True)
class CltEmpiricalReport:
    ks_statistic: float
    sigma2: float
    n: int
    samples: int
    seed: int
    quantiles: np.ndarray          # (levels, empirical, gaussian)


def clt_empirical(m: MapSpec, state: EquilibriumState, psi: Callable,
                  n: int, samples: int, seed: int,
                  variance: Optional[VarianceReport] = None,
                  batch_size=1 << 16, quantile_levels=99) -> CltEmpiricalReport:
    """KS distance between the law of S_n(v)/sqrt(n) and N(0, sigma^2).

    sigma^2 comes from the Green-Kubo report (computed here when not
    supplied); a flagged-coboundary variance is refused.  Orbits start from
    mu-samples; batches use seeds split from the master seed by counter, so
    the result is bitwise reproducible.
    """
    if variance is None:
        variance = clt_variance(m, state.triple, psi, lag_max=64)
    if variance.coboundary or variance.sigma2 <= 0:
        raise CoboundaryRefusedError(
            f"sigma^2 = {variance.sigma2:.3e} is flagged as a coboundary: "
            "the CLT normalization is degenerate")
    sigma = math.sqrt(variance.sigma2)
    mean = variance.mean
    centered = lambda z: np.asarray(psi(z), dtype=float) - mean

    vals = np.empty(samples)
    done = 0
    batch = 0
    while done < samples:
        take = min(batch_size, samples - done)
        rng = rng_for(seed, batch)
        x0 = sample_from_state(state, take, rng)
        s = orbit_birkhoff_samples(m, x0, n, centered, rng=rng)
        vals[done:done + take] = s / math.sqrt(n)
        done += take
        batch += 1

    ks = float(sps.kstest(vals, "norm", args=(0.0, sigma)).statistic)
    levels = (np.arange(quantile_levels) + 1.0) / (quantile_levels + 1.0)
    emp_q = np.quantile(vals, levels)
    gauss_q = sps.norm.ppf(levels, scale=sigma)
    return CltEmpiricalReport(
        ks_statistic=ks,
        sigma2=variance.sigma2,
        n=n,
        samples=samples,
        seed=seed,
        quantiles=np.column_stack([levels, emp_q, gauss_q]),
    )
