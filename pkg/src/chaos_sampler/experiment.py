"""End-to-end sampling experiments over integrable and chaotic ensembles.

A run samples ``(H0, V)`` pairs per time point, evolves every Hamiltonian
of every regime to that time, computes the conditional collision-free
output distributions, and reduces the probes over the ensemble. A second,
larger ensemble that is reused across times supplies the spectral form
factor and, optionally, dense-grid "ideal" curves.

Random streams are keyed by purpose and index only, so regimes share the
same ``(H0, V)`` draws and results do not depend on the thread count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from chaos_sampler import __version__
from chaos_sampler import ensembles, interferometry, probes
from chaos_sampler import rng as _rng
from chaos_sampler.errors import InvalidArgumentError

log = logging.getLogger(__name__)

PROBES = ("sff", "pt_distance", "entropy", "participation_ratio", "otoc")
CHARACTERISTIC = {
    "sff_min": ("sff", "min"),
    "entropy_max": ("entropy", "max"),
    "pt_dist_min": ("pt_distance", "min"),
    "pr_max": ("participation_ratio", "max"),
}
FLAT_TOL = 1e-12
BLOCK = 512


@dataclass(frozen=True)
class Regime:
    label: str
    lambda_cap: float


@dataclass(frozen=True)
class GridSpec:
    kind: str = "log"
    start: float = 0.1
    stop: float = 1000.0
    num: int = 200

    def points(self) -> np.ndarray:
        if self.num < 2 or not 0 < self.start < self.stop:
            raise InvalidArgumentError(f"bad grid {self}")
        if self.kind == "log":
            return np.geomspace(self.start, self.stop, self.num)
        if self.kind == "linear":
            return np.linspace(self.start, self.stop, self.num)
        raise InvalidArgumentError(f"unknown grid kind {self.kind!r}")


PROTOCOL_TIMES = (1.0, 1.79, 29.29, 100.0, 1000.0)


def _protocol_realizations() -> dict[str, tuple[int, ...]]:
    return {"integrable": (16, 16, 16, 16, 16), "chaotic": (16, 75, 16, 16, 16)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one run. Mode numbers here are 1-based."""

    modes: int = 8
    photons: int = 2
    input_modes: tuple[int, ...] = (3, 4)
    regimes: tuple[Regime, ...] = (Regime("integrable", 0.01), Regime("chaotic", 1000.0))
    times: tuple[float, ...] = PROTOCOL_TIMES
    realizations: dict = field(default_factory=_protocol_realizations)
    master_seed: int = 0
    shots: int | None = None
    sff_ensemble_size: int = 2000
    sff_k: int = 2
    dense_grid: GridSpec | None = None
    reuse_ensemble: bool = False
    otoc_output_modes: tuple[int, int] = (3, 6)
    probes: tuple[str, ...] = PROBES

    def __post_init__(self):
        M, N = self.modes, self.photons
        if N < 1 or M < 2:
            raise InvalidArgumentError(f"need modes >= 2 and photons >= 1, got M={M}, N={N}")
        if N > M:
            raise InvalidArgumentError(f"photons ({N}) exceed modes ({M})")
        inp = tuple(self.input_modes)
        if len(inp) != N or len(set(inp)) != N:
            raise InvalidArgumentError(f"input_modes {inp} must list {N} distinct modes")
        if any(not 1 <= m <= M for m in inp):
            raise InvalidArgumentError(f"input_modes {inp} outside 1..{M}")
        out = tuple(self.otoc_output_modes)
        if len(out) != 2 or out[0] == out[1] or any(not 1 <= m <= M for m in out):
            raise InvalidArgumentError(f"otoc_output_modes {out} must be two distinct modes in 1..{M}")
        if "otoc" in self.probes and N != 2:
            raise InvalidArgumentError("the otoc probe is defined for two photons")
        t = np.asarray(self.times, dtype=float)
        if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
            raise InvalidArgumentError("times must be positive, finite and strictly increasing")
        labels = [r.label for r in self.regimes]
        if not labels or len(set(labels)) != len(labels):
            raise InvalidArgumentError("regime labels must be unique and non-empty")
        for r in self.regimes:
            if not (r.lambda_cap >= 0 and math.isfinite(r.lambda_cap)):
                raise InvalidArgumentError(f"regime {r.label}: Lambda must be finite and >= 0")
        for label, counts in self.realizations.items():
            if label not in labels:
                raise InvalidArgumentError(f"realizations given for unknown regime {label!r}")
            if len(counts) != t.size or any(int(c) != c or c < 1 for c in counts):
                raise InvalidArgumentError(
                    f"realizations[{label!r}] needs {t.size} positive integers"
                )
        if self.shots is not None and self.shots < 1:
            raise InvalidArgumentError("shots must be positive when given")
        if self.sff_ensemble_size < 1 or self.sff_k < 1:
            raise InvalidArgumentError("sff_ensemble_size and sff_k must be positive")
        unknown = set(self.probes) - set(PROBES)
        if unknown:
            raise InvalidArgumentError(f"unknown probes {sorted(unknown)}")
        if self.dense_grid is not None:
            self.dense_grid.points()
        _rng.check_seed(self.master_seed)

    def counts_for(self, label: str) -> tuple[int, ...]:
        return tuple(int(c) for c in self.realizations.get(label, (16,) * len(self.times)))

    def input_pattern(self) -> tuple[int, ...]:
        return interferometry.pattern_from_modes([m - 1 for m in self.input_modes], self.modes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regimes"] = [asdict(r) for r in self.regimes]
        d["realizations"] = {k: list(v) for k, v in self.realizations.items()}
        for key in ("input_modes", "times", "otoc_output_modes", "probes"):
            d[key] = list(d[key])
        return d


@dataclass
class ProbeSeries:
    probe: str
    times: list[float]
    mean: list[float | None]
    stderr: list[float | None]
    n_realizations: list[int]
    shot_stderr: list[float | None] | None = None

    def to_dict(self) -> dict:
        d = {
            "probe": self.probe,
            "times": self.times,
            "mean": self.mean,
            "stderr": self.stderr,
            "n_realizations": self.n_realizations,
        }
        if self.shot_stderr is not None:
            d["shot_stderr"] = self.shot_stderr
        return d


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    series: dict[str, dict[str, ProbeSeries]]
    characteristic_times: dict[str, dict[str, float | None]]
    exclusions: dict[str, list[dict]]
    sector_means: dict[str, dict[str, list[float | None]]]
    ideal_series: dict[str, dict[str, ProbeSeries]] = field(default_factory=dict)
    ideal_characteristic_times: dict[str, dict[str, float | None]] = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        def dump(block):
            return {
                reg: {name: s.to_dict() for name, s in by_probe.items() if name in self.config.probes}
                for reg, by_probe in block.items()
            }

        return {
            "config": self.config.to_dict(),
            "series": dump(self.series),
            "ideal_series": dump(self.ideal_series),
            "characteristic_times": self.characteristic_times,
            "ideal_characteristic_times": self.ideal_characteristic_times,
            "exclusions": self.exclusions,
            "sector_means": self.sector_means,
            "version": self.version,
        }


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def sample_spectra(
    seed: int, d: int, lambda_cap: float, label: str, prefix: tuple[int, ...], n: int
) -> tuple[np.ndarray, np.ndarray]:
    hs = np.empty((n, d, d))
    for l in range(n):
        s = _rng.stream(seed, label, *prefix, l)
        h0 = ensembles.sample_poisson_diag(d, s)
        v = ensembles.sample_goe(d, s)
        hs[l] = ensembles.build_hamiltonian(h0, v, lambda_cap)
    energies = np.empty((n, d))
    vectors = np.empty((n, d, d))
    # fixed blocks keep the stacked eigensolver inputs independent of threading
    for a in range(0, n, BLOCK):
        energies[a : a + BLOCK], vectors[a : a + BLOCK] = ensembles.diagonalize_many(hs[a : a + BLOCK])
    return energies, vectors


def _fix(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class _PointResult:
    configured: int
    used: int
    entropy: probes.EnsembleStat | None
    pr: probes.EnsembleStat | None
    w1: float | None
    otoc: probes.EnsembleStat | None
    sectors: dict[int, float]
    shot_se: dict[str, float] | None


def _shot_errors(p: np.ndarray, shots: int, D: int) -> dict[str, float]:
    """Delta-method standard errors of ensemble means under multinomial noise."""
    n = p.shape[0]
    safe = np.where(p > 0, p, 1.0)
    lnp = np.log(safe)
    s = -(p * lnp).sum(axis=1)
    var_s = ((p * lnp**2).sum(axis=1) - s**2) / shots
    p2 = (p**2).sum(axis=1)
    p3 = (p**3).sum(axis=1)
    var_pr = 4.0 * (p3 - p2**2) / shots / p2**4
    g = probes.wasserstein_gradient(p.ravel(), D).reshape(p.shape)
    var_w = ((g**2 * p).sum(axis=1) - (g * p).sum(axis=1) ** 2) / shots
    clip = lambda v: math.sqrt(max(math.fsum(np.clip(v, 0, None)), 0.0))
    return {
        "entropy": clip(var_s) / n,
        "participation_ratio": clip(var_pr) / n,
        "pt_distance": clip(var_w),
    }


def _evaluate(
    cfg: ExperimentConfig,
    cfgs: interferometry.ConfigurationSet,
    energies: np.ndarray,
    vectors: np.ndarray,
    t: float,
    shot_key: tuple | None,
) -> _PointResult:
    inp = [m - 1 for m in cfg.input_modes]
    ucols = ensembles.evolve_columns(energies, vectors, t, inp)
    raw = interferometry.raw_probabilities_from_columns(ucols, cfgs)
    mass = raw.sum(axis=1)
    ok = mass >= interferometry.DEGENERATE_MASS
    n_cfg = raw.shape[0]
    n_used = int(ok.sum())
    if n_used == 0:
        return _PointResult(n_cfg, 0, None, None, None, None, {}, None)
    exact = raw[ok] / mass[ok, None]
    used_idx = np.flatnonzero(ok)

    shot_se = None
    if cfg.shots is not None and shot_key is not None:
        emp = np.empty_like(exact)
        for row, l in enumerate(used_idx):
            s = _rng.stream(cfg.master_seed, "shots", *shot_key, int(l))
            emp[row] = s.multinomial(cfg.shots, exact[row] / exact[row].sum()) / cfg.shots
        shot_se = _shot_errors(exact, cfg.shots, cfgs.size)
        probs_used = emp
    else:
        probs_used = exact

    ent = probes.ensemble_stat(probes.entropy_of(probs_used))
    pr = probes.ensemble_stat(1.0 / (probs_used**2).sum(axis=1))
    w1 = probes.wasserstein_to_pt(probs_used.ravel(), cfgs.size)
    otoc = None
    if cfg.photons == 2:
        r, s_ = (m - 1 for m in cfg.otoc_output_modes)
        otoc = probes.ensemble_stat(raw[ok, cfgs.index_of((r, s_))])
    occ = set(inp)
    sectors = np.array([len(occ.intersection(row)) for row in cfgs.mode_indices])
    mean_p = exact.mean(axis=0)
    sec = {int(k): float(mean_p[sectors == k].mean()) for k in np.unique(sectors)}
    return _PointResult(n_cfg, n_used, ent, pr, w1, otoc, sec, shot_se)


def _sff_stat(energies: np.ndarray, t: float, k: int) -> probes.EnsembleStat:
    return probes.ensemble_stat(ensembles.sff_samples(energies, t, k))


def _series_from_points(
    name: str, times: Sequence[float], points: Sequence[_PointResult], with_shots: bool
) -> ProbeSeries:
    attr = {"entropy": "entropy", "participation_ratio": "pr", "otoc": "otoc"}.get(name)
    mean, se, n, shot = [], [], [], []
    for p in points:
        n.append(p.used)
        if name == "pt_distance":
            mean.append(None if p.w1 is None else _fix(p.w1))
            se.append(None)
        else:
            st = getattr(p, attr)
            mean.append(None if st is None else _fix(st.mean))
            se.append(None if st is None or not st.stderr_defined else _fix(st.stderr))
        if with_shots:
            shot.append(None if p.shot_se is None or name not in p.shot_se else _fix(p.shot_se[name]))
    return ProbeSeries(name, [float(t) for t in times], mean, se, n, shot if with_shots else None)


def _sff_series(times, stats: Sequence[probes.EnsembleStat]) -> ProbeSeries:
    return ProbeSeries(
        "sff",
        [float(t) for t in times],
        [_fix(s.mean) for s in stats],
        [_fix(s.stderr) if s.stderr_defined else None for s in stats],
        [s.n for s in stats],
    )


# --------------------------------------------------------------------------
# characteristic times
# --------------------------------------------------------------------------


def argextreme_time(times: Sequence[float], values: Sequence[float | None], mode: str) -> float | None:
    """Grid time of the min/max (earliest on ties); None if flat or empty."""
    pairs = [(t, v) for t, v in zip(times, values) if v is not None and math.isfinite(v)]
    if not pairs:
        return None
    vals = np.array([v for _, v in pairs])
    if vals.max() - vals.min() <= FLAT_TOL:
        return None
    idx = int(np.argmin(vals) if mode == "min" else np.argmax(vals))
    return float(pairs[idx][0])


def extract_characteristic_times(series: dict[str, ProbeSeries]) -> dict[str, float | None]:
    out = {}
    for key, (probe, mode) in CHARACTERISTIC.items():
        s = series.get(probe)
        out[key] = None if s is None else argextreme_time(s.times, s.mean, mode)
    return out


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def _map(threads: int, fn, items):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Run every regime at every configured time; see the module docstring."""
    cfgs = interferometry.enumerate_collision_free(cfg.modes, cfg.photons)
    d = cfg.modes
    times = list(cfg.times)
    labels = [r.label for r in cfg.regimes]

    def point(item):
        regime, k = item
        n = cfg.counts_for(regime.label)[k]
        prefix = (0,) if cfg.reuse_ensemble else (k,)
        e, q = sample_spectra(cfg.master_seed, d, regime.lambda_cap, "hamiltonian", prefix, n)
        shot_key = (_rng.label_key(regime.label), k)
        return _evaluate(cfg, cfgs, e, q, times[k], shot_key)

    items = [(r, k) for r in cfg.regimes for k in range(len(times))]
    log.info("sampling %d (regime, time) points", len(items))
    results = dict(zip([(r.label, k) for r, k in items], _map(threads, point, items)))

    def ideal_ensemble(regime):
        return sample_spectra(
            cfg.master_seed, d, regime.lambda_cap, "ideal", (), cfg.sff_ensemble_size
        )

    log.info("sampling ideal ensembles of %d realizations", cfg.sff_ensemble_size)
    ideal = dict(zip(labels, _map(threads, ideal_ensemble, cfg.regimes)))

    series, chars, excl, sectors = {}, {}, {}, {}
    for r in cfg.regimes:
        pts = [results[(r.label, k)] for k in range(len(times))]
        e_ideal = ideal[r.label][0]
        by_probe = {
            name: _series_from_points(name, times, pts, cfg.shots is not None)
            for name in PROBES
            if name != "sff" and not (name == "otoc" and cfg.photons != 2)
        }
        by_probe["sff"] = _sff_series(times, [_sff_stat(e_ideal, t, cfg.sff_k) for t in times])
        series[r.label] = by_probe
        chars[r.label] = extract_characteristic_times(by_probe)
        excl[r.label] = [
            {"time": float(t), "configured": p.configured, "used": p.used, "excluded": p.configured - p.used}
            for t, p in zip(times, pts)
        ]
        keys = sorted({k for p in pts for k in p.sectors})
        sectors[r.label] = {str(k): [p.sectors.get(k) for p in pts] for k in keys}
        for t, p in zip(times, pts):
            if p.used < p.configured:
                log.warning(
                    "%s t=%g: excluded %d of %d realizations (degenerate conditioning)",
                    r.label, t, p.configured - p.used, p.configured,
                )

    report = ExperimentReport(cfg, series, chars, excl, sectors)
    if cfg.dense_grid is not None:
        grid = cfg.dense_grid.points()
        log.info("evaluating ideal curves on %d grid points", grid.size)
        for r in cfg.regimes:
            e, q = ideal[r.label]
            pts = _map(threads, lambda t: _evaluate(cfg, cfgs, e, q, float(t), None), grid)
            by_probe = {
                name: _series_from_points(name, grid, pts, False)
                for name in PROBES
                if name != "sff" and not (name == "otoc" and cfg.photons != 2)
            }
            by_probe["sff"] = _sff_series(grid, [_sff_stat(e, t, cfg.sff_k) for t in grid])
            report.ideal_series[r.label] = by_probe
            report.ideal_characteristic_times[r.label] = extract_characteristic_times(by_probe)
    return report


@dataclass(frozen=True)
class SweepRow:
    modes: int
    configs: int
    total_configs: int
    haar_entropy: float
    max_entropy: dict[str, float | None]
    characteristic_times: dict[str, dict[str, float | None]]

    def gap(self, label: str) -> float | None:
        m = self.max_entropy.get(label)
        return None if m is None else abs(m - self.haar_entropy)

    def relative_gap(self, label: str) -> float | None:
        g = self.gap(label)
        return None if g is None else g / self.haar_entropy


def scaling_sweep(
    base: ExperimentConfig, mode_list: Iterable[int], threads: int = 1
) -> list[ExperimentReport]:
    """Rerun ``base`` for each mode count with ideal curves switched on."""
    mode_list = list(mode_list)
    for M in mode_list:
        if M < base.photons:
            raise InvalidArgumentError(f"M={M} is smaller than the photon number {base.photons}")
    grid = base.dense_grid or GridSpec()
    reports = []
    for M in mode_list:
        log.info("sweep: M=%d", M)
        reports.append(run_experiment(replace(base, modes=M, dense_grid=grid), threads=threads))
    return reports


def sweep_summary(reports: Sequence[ExperimentReport]) -> list[SweepRow]:
    rows = []
    for rep in reports:
        cfg = rep.config
        D = math.comb(cfg.modes, cfg.photons)
        src = rep.ideal_series or rep.series
        max_s = {}
        for label, by_probe in src.items():
            vals = [v for v in by_probe["entropy"].mean if v is not None]
            max_s[label] = max(vals) if vals else None
        rows.append(
            SweepRow(
                cfg.modes,
                D,
                interferometry.count_total_configs(cfg.modes, cfg.photons),
                probes.haar_entropy(D),
                max_s,
                rep.ideal_characteristic_times or rep.characteristic_times,
            )
        )
    return rows


def grid_step(times: Sequence[float], t: float) -> float:
    """Local spacing of a grid around the grid point nearest ``t``."""
    g = np.asarray(times, dtype=float)
    i = int(np.argmin(np.abs(g - t)))
    steps = []
    if i > 0:
        steps.append(g[i] - g[i - 1])
    if i < g.size - 1:
        steps.append(g[i + 1] - g[i])
    return float(max(steps))


def within_steps(times: Sequence[float], a: float, b: float, steps: int = 1) -> bool:
    """True if grid points ``a`` and ``b`` are at most ``steps`` indices apart."""
    g = list(np.asarray(times, dtype=float))
    ia = int(np.argmin(np.abs(np.asarray(g) - a)))
    ib = int(np.argmin(np.abs(np.asarray(g) - b)))
    return abs(ia - ib) <= steps


def late_time_fft_pr(
    cfg: ExperimentConfig,
    regime: Regime,
    n_realizations: int,
    window: tuple[float, float] = (300.0, 1000.0),
    points: int = 512,
) -> dict[str, float]:
    """Frequency-space participation ratio of every non-input configuration.

    Each configuration's ensemble-mean conditional probability is sampled
    on a uniform grid over ``window`` and passed to
    :func:`probes.fft_participation_ratio`. Keys are 1-based mode labels.
    """
    cfgs = interferometry.enumerate_collision_free(cfg.modes, cfg.photons)
    e, q = sample_spectra(cfg.master_seed, cfg.modes, regime.lambda_cap, "fft", (), n_realizations)
    inp = [m - 1 for m in cfg.input_modes]
    grid = np.linspace(window[0], window[1], points)
    curves = np.empty((points, cfgs.size))
    for k, t in enumerate(grid):
        raw = interferometry.raw_probabilities_from_columns(ensembles.evolve_columns(e, q, t, inp), cfgs)
        mass = raw.sum(axis=1)
        ok = mass >= interferometry.DEGENERATE_MASS
        curves[k] = (raw[ok] / mass[ok, None]).mean(axis=0)
    skip = cfgs.index_of(tuple(sorted(inp)))
    return {
        label: probes.fft_participation_ratio(curves[:, j], grid)
        for j, label in enumerate(cfgs.labels())
        if j != skip
    }
