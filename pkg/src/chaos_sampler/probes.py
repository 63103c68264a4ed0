"""Chaos diagnostics evaluated on boson-sampling output distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from chaos_sampler import ensembles
from chaos_sampler.errors import (
    DegenerateSpectrumError,
    InvalidArgumentError,
    NumericFailureError,
    UnderflowError,
)
from chaos_sampler.interferometry import ConfigurationSet, OutputDistribution

UNDERFLOW = 1e-300


@dataclass(frozen=True)
class EnsembleStat:
    """Ensemble mean with its standard error.

    The standard error of a single realization is undefined; it is then
    reported as 0 and ``stderr_defined`` is False.
    """

    mean: float
    stderr: float
    n: int

    @property
    def stderr_defined(self) -> bool:
        return self.n > 1


def ensemble_stat(values: Sequence[float]) -> EnsembleStat:
    """Order-insensitive mean and standard error (compensated sums)."""
    x = [float(v) for v in values]
    n = len(x)
    if n == 0:
        raise InvalidArgumentError("empty ensemble")
    mean = math.fsum(x) / n
    if n == 1:
        return EnsembleStat(mean, 0.0, 1)
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1)
    return EnsembleStat(mean, math.sqrt(var / n), n)


# --------------------------------------------------------------------------
# Porter-Thomas distance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProbabilityPool:
    values: np.ndarray
    n_realizations: int
    d_configs: int


def pool_probabilities(dists: Sequence[OutputDistribution]) -> ProbabilityPool:
    if not dists:
        raise InvalidArgumentError("nothing to pool")
    cfgs = dists[0].configs
    if any(d.configs != cfgs for d in dists[1:]):
        raise InvalidArgumentError("distributions are over different configuration sets")
    values = np.concatenate([d.probs for d in dists])
    return ProbabilityPool(values, len(dists), cfgs.size)


def _pt_antiderivative(u, c, D):
    # antiderivative of c - 1 + exp(-D u)
    return (c - 1.0) * u - np.exp(-D * u) / D


def wasserstein_to_pt(pool: ProbabilityPool | np.ndarray, D: int | None = None) -> float:
    """W1 between the pooled empirical law and ``D exp(-D p)``.

    Integrates ``|F_emp - F_PT|`` exactly segment by segment: on each gap
    between sorted samples the empirical CDF is a constant ``c`` and the
    integrand changes sign at most once, at ``-log(1 - c) / D``.
    """
    if isinstance(pool, ProbabilityPool):
        x = np.sort(pool.values)
        D = pool.d_configs if D is None else D
    else:
        x = np.sort(np.asarray(pool, dtype=float).ravel())
    if D is None:
        raise InvalidArgumentError("D is required for a bare array pool")
    n = x.size
    if n == 0:
        raise InvalidArgumentError("empty pool")
    left = np.concatenate(([0.0], x[:-1]))
    right = x
    c = np.arange(n) / n
    with np.errstate(divide="ignore"):
        cross = -np.log1p(-c) / D
    mid = np.clip(cross, left, right)
    pos = _pt_antiderivative(mid, c, D) - _pt_antiderivative(left, c, D)
    neg = _pt_antiderivative(right, c, D) - _pt_antiderivative(mid, c, D)
    tail = math.exp(-D * x[-1]) / D
    return math.fsum(pos) - math.fsum(neg) + tail


def wasserstein_gradient(values: np.ndarray, D: int) -> np.ndarray:
    """Derivative of :func:`wasserstein_to_pt` w.r.t. each pooled value.

    Used to propagate multinomial shot noise into the distance.
    """
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = xs.size
    f_pt = -np.expm1(-D * xs)
    below = np.arange(n) / n
    above = below + 1.0 / n
    g_sorted = np.abs(below - f_pt) - np.abs(above - f_pt)
    g = np.empty_like(g_sorted)
    g[order] = g_sorted
    return g


# --------------------------------------------------------------------------
# entropy and participation ratios
# --------------------------------------------------------------------------


def _probs(dist) -> np.ndarray:
    return dist.probs if isinstance(dist, OutputDistribution) else np.asarray(dist, dtype=float)


def entropy_of(p: np.ndarray) -> np.ndarray:
    """``-sum p ln p`` along the last axis with ``0 ln 0 = 0``."""
    p = np.asarray(p, dtype=float)
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=-1)


def shannon_entropy(dist) -> float:
    return float(entropy_of(_probs(dist)))


def avg_entropy(dists) -> EnsembleStat:
    return ensemble_stat([shannon_entropy(d) for d in dists])


def haar_entropy(D: int) -> float:
    """Haar-averaged entropy of a ``D``-outcome distribution: ``H_D - 1``."""
    if D < 1:
        raise InvalidArgumentError(f"D must be >= 1, got {D}")
    return math.fsum(1.0 / i for i in range(1, D + 1)) - 1.0


def participation_ratio(dist) -> float:
    p = _probs(dist)
    return float(1.0 / np.dot(p, p))


def avg_participation_ratio(dists) -> EnsembleStat:
    return ensemble_stat([participation_ratio(d) for d in dists])


# --------------------------------------------------------------------------
# OTOC-equivalent observables
# --------------------------------------------------------------------------


def _check_pair(pair, M: int, what: str) -> tuple[int, int]:
    a, b = (int(x) for x in pair)
    if a == b:
        raise InvalidArgumentError(f"{what} repeats mode {a}; collision configurations are not supported")
    if not (0 <= a < M and 0 <= b < M):
        raise InvalidArgumentError(f"{what} {pair} outside 0..{M - 1}")
    return a, b


def otoc_value(u: np.ndarray, in_pair, out_pair) -> float:
    """Four-point OTOC ``|U_ri U_sj + U_si U_rj|^2`` for 0-based pairs.

    Equals the raw (unconditioned) probability of detecting one photon in
    each of ``r, s`` given single photons injected in ``i, j``.
    """
    u = np.asarray(u)
    i, j = _check_pair(in_pair, u.shape[0], "input pair")
    r, s = _check_pair(out_pair, u.shape[0], "output pair")
    return float(abs(u[r, i] * u[s, j] + u[s, i] * u[r, j]) ** 2)


def otoc_samples(spectra, in_pair, out_pair, times) -> np.ndarray:
    """``C4`` for every realization and time, shape ``(L, T)``."""
    spectra = list(spectra)
    if not spectra:
        raise InvalidArgumentError("empty ensemble")
    M = spectra[0].dim
    i, j = _check_pair(in_pair, M, "input pair")
    r, s = _check_pair(out_pair, M, "output pair")
    e = np.stack([sp.eigenvalues for sp in spectra])
    q = np.stack([sp.eigenvectors for sp in spectra])
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise InvalidArgumentError("times must be a non-empty 1-d grid")
    phase = np.exp(-1j * e[:, None, :] * t[None, :, None])  # (L, T, d)

    def amp(a, b):
        return np.einsum("lk,ltk,lk->lt", q[:, a, :], phase, q[:, b, :])

    return np.abs(amp(r, i) * amp(s, j) + amp(s, i) * amp(r, j)) ** 2


@dataclass(frozen=True, eq=False)
class OtocSeries:
    input_pair: tuple[int, int]
    output_pair: tuple[int, int]
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray


def otoc_series(spectra, in_pair, out_pair, times) -> OtocSeries:
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("times must be strictly increasing")
    c = otoc_samples(spectra, in_pair, out_pair, t)
    stats = [ensemble_stat(col) for col in c.T]
    return OtocSeries(
        tuple(int(x) for x in in_pair),
        tuple(int(x) for x in out_pair),
        t,
        np.array([s.mean for s in stats]),
        np.array([s.stderr for s in stats]),
    )


def sector_means(dists: Sequence[OutputDistribution], n_in: Sequence[int]) -> dict[int, float]:
    """Ensemble- and configuration-averaged probability per overlap sector."""
    cfgs = dists[0].configs
    occ = set(i for i, k in enumerate(n_in) if k > 0)
    sectors = np.array([len(occ.intersection(row)) for row in cfgs.mode_indices])
    mean_p = np.mean([d.probs for d in dists], axis=0)
    return {int(k): float(mean_p[sectors == k].mean()) for k in np.unique(sectors)}


def fft_participation_ratio(series, times=None) -> float:
    """Participation ratio of the normalized late-time power spectrum.

    The series is mapped to ``x / mean(x) - 1``, Fourier transformed with a
    rectangular window, and its one-sided power spectrum normalized to unit
    sum; the result ``1 / sum(P**2)`` counts frequency bins.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 32:
        raise InvalidArgumentError("need a 1-d series of at least 32 samples")
    if times is not None:
        dt = np.diff(np.asarray(times, dtype=float))
        if dt.size != x.size - 1 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise InvalidArgumentError("series must be sampled on a uniform grid")
    mean = x.mean()
    if mean == 0 or not math.isfinite(mean):
        raise InvalidArgumentError("temporal mean is zero; cannot normalize")
    y = x / mean - 1.0
    power = np.abs(np.fft.rfft(y)) ** 2
    total = power.sum()
    if not total > 1e-30 * x.size:
        raise DegenerateSpectrumError("series is constant; power spectrum is empty")
    power /= total
    return float(1.0 / np.dot(power, power))


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    t_min: float
    t_max: float
    n_points: int


def short_time_exponent(spectra, in_pair, out_pair, t_grid) -> PowerLawFit:
    """Least-squares slope of ``log <C4>`` against ``log t``.

    Grid points where the ensemble-mean correlator underflows (< 1e-300)
    are dropped; the fit reports the range actually used.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 8:
        raise InvalidArgumentError("need a log-spaced grid of at least 8 times")
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("grid must be positive and strictly increasing")
    ratios = t[1:] / t[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise InvalidArgumentError("grid must be log-spaced")
    if tuple(sorted(in_pair)) == tuple(sorted(out_pair)):
        raise InvalidArgumentError("output pair equals the input pair")
    c = otoc_samples(spectra, in_pair, out_pair, t).mean(axis=0)
    keep = c >= UNDERFLOW
    if keep.sum() < 2:
        raise UnderflowError(
            f"<C4> underflows at {int((~keep).sum())} of {t.size} grid points; nothing to fit"
        )
    lt, lc = np.log(t[keep]), np.log(c[keep])
    slope, intercept = np.polyfit(lt, lc, 1)
    return PowerLawFit(float(slope), float(intercept), float(t[keep][0]), float(t[keep][-1]), int(keep.sum()))


# --------------------------------------------------------------------------
# conditional Porter-Thomas density
# --------------------------------------------------------------------------


def _log_collision_weight(y, N0: int, C: int):
    # log of N0^C (1-y)^(C-1) exp(-N0 (1-y)) / (C-1)!
    z = 1.0 - y
    if z <= 0.0:
        log_z_term = 0.0 if C == 1 else -math.inf
    else:
        log_z_term = (C - 1) * math.log(z)
    return C * math.log(N0) + log_z_term - N0 * z - math.lgamma(C)


def _quad(f, a, b, what: str) -> float:
    val, err = integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-10, limit=400)
    if not math.isfinite(val) or err > 1e-8:
        raise NumericFailureError(f"{what}: quadrature did not converge (error estimate {err:.2e})")
    return val


def _check_counts(N0: int, D: int) -> int:
    if not 1 <= D <= N0:
        raise InvalidArgumentError(f"need 1 <= D <= N0, got D={D}, N0={N0}")
    return N0 - D


def conditional_pt_density(p: float, N0: int, D: int) -> float:
    """Density of a conditioned probability when collisions are discarded.

    For Haar-random dynamics with ``N0`` outcomes of which ``D`` are kept,
    the raw probability is exponential with rate ``N0`` and the kept mass
    ``y`` has a Gamma law in ``1 - y`` with shape ``C = N0 - D``; the
    conditioned value ``p_raw / y`` then has density
    ``int_0^1 y N0 exp(-N0 p y) g(y) dy``.
    """
    C = _check_counts(N0, D)
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    if C == 0:
        return D * math.exp(-D * p)

    def integrand(y):
        return y * N0 * math.exp(-N0 * p * y + _log_collision_weight(y, N0, C))

    return _quad(integrand, 0.0, 1.0, "conditional density")


def conditional_pt_mass(N0: int, D: int) -> float:
    """Total mass of the conditional density over ``p >= 0``.

    This is the Gamma(C, N0) probability that the discarded mass stays
    below 1, so it falls short of 1 when many outcomes are discarded.
    """
    C = _check_counts(N0, D)
    if C == 0:
        return 1.0
    return float(special.gammainc(C, N0))


def conditional_pt_cdf(p: float, N0: int, D: int, normalize: bool = True) -> float:
    """CDF of the conditional density, optionally divided by its total mass."""
    C = _check_counts(N0, D)
    if p <= 0:
        return 0.0
    if C == 0:
        return -math.expm1(-D * p)

    def integrand(y):
        return -math.expm1(-N0 * p * y) * math.exp(_log_collision_weight(y, N0, C))

    val = _quad(integrand, 0.0, 1.0, "conditional cdf")
    return val / conditional_pt_mass(N0, D) if normalize else val


def conditional_pt_w1(N0: int, D: int) -> float:
    """W1 to ``D exp(-D p)`` over the physical range ``0 <= p <= 1``.

    The conditional law keeps weight at vanishing kept mass, so its CDF
    approaches 1 only like ``1/p`` and the distance over the half-line
    diverges logarithmically; a conditioned probability never exceeds 1.
    """
    _check_counts(N0, D)

    def gap(p):
        return abs(conditional_pt_cdf(p, N0, D) + math.expm1(-D * p))

    edges = sorted({0.0, *(min(1.0, s / D) for s in (0.25, 1.0, 3.0, 10.0)), 1.0})
    return math.fsum(_quad(gap, a, b, "conditional W1") for a, b in zip(edges, edges[1:]))
