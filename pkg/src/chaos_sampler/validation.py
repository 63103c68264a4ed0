"""Built-in oracle checks run by ``chaos-sampler validate``.

Each check compares a library routine against an independent route
(brute force, Pade matrix exponential, quadrature, exact rationals) and
returns a :class:`CheckResult`. Library functions are looked up through
their modules at call time so tests can inject faults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, linalg

from chaos_sampler import ensembles, interferometry, probes


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_permanent(seed: int = 101) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (1, 2, 3, 4, 5):
        for _ in range(40):
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            ref = interferometry.permanent_bruteforce(a)
            scale = max(abs(ref), 1e-300)
            for fn in (interferometry.permanent_ryser, interferometry.permanent_glynn, interferometry.permanent):
                worst = max(worst, abs(fn(a) - ref) / scale)
            batched = interferometry.permanents(a[None])[0]
            worst = max(worst, abs(batched - ref) / scale)
    return CheckResult("permanent", worst <= 1e-10, f"max relative error {worst:.2e}")


def check_expm(seed: int = 102) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in (2, 5, 8):
        a = rng.normal(size=(d, d))
        h = (a + a.T) / 2
        spec = ensembles.diagonalize(h)
        for t in (0.0, 0.3, 1.79, 17.0):
            ref = linalg.expm(-1j * h * t)
            worst = max(worst, float(np.max(np.abs(ensembles.evolve(spec, t) - ref))))
    return CheckResult("expm", worst <= 1e-8, f"max |U - expm(-iHt)| = {worst:.2e}")


def _moment_z(x: np.ndarray, var: float) -> tuple[float, float]:
    # z-scores of sample mean and sample variance against a centred normal
    n = x.size
    z_mean = x.mean() / math.sqrt(var / n)
    z_var = (x.var(ddof=1) - var) / math.sqrt(2 * var**2 / (n - 1))
    return abs(z_mean), abs(z_var)


def check_goe_moments(seed: int = 103, samples: int = 4000) -> CheckResult:
    d = 8
    rng = np.random.default_rng(seed)
    mats = np.stack([ensembles.sample_goe(d, rng) for _ in range(samples)])
    iu = np.triu_indices(d, 1)
    diag = mats[:, np.arange(d), np.arange(d)].ravel()
    off = mats[:, iu[0], iu[1]].ravel()
    z = _moment_z(diag, 2 / d) + _moment_z(off, 1 / d)
    sym = all(np.array_equal(m, m.T) for m in mats)
    return CheckResult("goe_moments", max(z) < 4 and sym, f"max |z| = {max(z):.2f}, symmetric={sym}")


def check_poisson_moments(seed: int = 104, samples: int = 4000) -> CheckResult:
    d = 8
    rng = np.random.default_rng(seed)
    mats = np.stack([ensembles.sample_poisson_diag(d, rng) for _ in range(samples)])
    diag = mats[:, np.arange(d), np.arange(d)].ravel()
    off_zero = bool(np.all(mats[:, ~np.eye(d, dtype=bool)] == 0))
    z = _moment_z(diag, 1.0)
    return CheckResult("poisson_moments", max(z) < 4 and off_zero, f"max |z| = {max(z):.2f}")


def check_densities() -> CheckResult:
    mass, _ = integrate.quad(lambda p: probes.conditional_pt_density(p, 36, 28), 0, 1, limit=200)
    haar = probes.haar_entropy(28)
    exact = float(sum(Fraction(1, i) for i in range(1, 29)) - 1)
    counts_ok = (
        interferometry.count_total_configs(8, 2) == 36
        and interferometry.enumerate_collision_free(8, 2).size == 28
    )
    ok = abs(mass - 1) <= 1e-6 and abs(haar - exact) <= 1e-14 and counts_ok
    return CheckResult(
        "densities", ok, f"conditional mass {mass:.9f}, Haar entropy error {abs(haar - exact):.1e}"
    )


def check_wasserstein(seed: int = 105) -> CheckResult:
    rng = np.random.default_rng(seed)
    D = 28
    x = np.sort(rng.exponential(1 / D, size=40))
    fast = probes.wasserstein_to_pt(x, D)

    def gap(u):
        return abs(np.searchsorted(x, u, side="right") / x.size + math.expm1(-D * u))

    pts = np.concatenate(([0.0], x))
    slow = sum(integrate.quad(gap, a, b)[0] for a, b in zip(pts, pts[1:]))
    slow += integrate.quad(gap, x[-1], np.inf)[0]
    err = abs(fast - slow)
    return CheckResult("wasserstein", err <= 1e-9, f"closed form vs quadrature: {err:.1e}")


CHECKS = {
    "permanent": check_permanent,
    "expm": check_expm,
    "goe_moments": check_goe_moments,
    "poisson_moments": check_poisson_moments,
    "densities": check_densities,
    "wasserstein": check_wasserstein,
}


def run_checks(only=None) -> list[CheckResult]:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for name in names:
        try:
            results.append(CHECKS[name]())
        except Exception as exc:  # a crashing oracle is a failing oracle
            results.append(CheckResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results
