import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from chaos_sampler import ensembles as ens
from chaos_sampler import interferometry as itf
from chaos_sampler import probes
from chaos_sampler.errors import (
    DegenerateSpectrumError,
    InvalidArgumentError,
    UnderflowError,
)
from conftest import haar_unitary

CFGS = itf.enumerate_collision_free(8, 2)


def dist_of(p, cfgs=CFGS, kind=itf.EXACT):
    return itf.OutputDistribution(cfgs, np.asarray(p, dtype=float), kind)


def delta(k=0):
    p = np.zeros(CFGS.size)
    p[k] = 1.0
    return dist_of(p)


UNIFORM = dist_of(np.full(28, 1 / 28))
HALF = dist_of([0.5, 0.5] + [0.0] * 26)

probability_vectors = st.lists(st.floats(0, 1), min_size=28, max_size=28).filter(lambda v: sum(v) > 1e-3)


def normalized(v):
    p = np.asarray(v, dtype=float)
    return p / p.sum()


# -- pooling and W1 -----------------------------------------------------------------


def test_pool_shapes():
    pool = probes.pool_probabilities([delta()])
    assert pool.values.tolist() == [1.0] + [0.0] * 27
    pool = probes.pool_probabilities([UNIFORM, UNIFORM])
    assert pool.values.size == 56 and np.all(pool.values == 1 / 28)
    pool = probes.pool_probabilities([UNIFORM] * 16)
    assert pool.values.size == 448 and pool.n_realizations == 16 and pool.d_configs == 28


def test_pool_rejects_mixed_sets():
    other = itf.OutputDistribution(itf.enumerate_collision_free(7, 2), np.full(21, 1 / 21))
    with pytest.raises(InvalidArgumentError):
        probes.pool_probabilities([UNIFORM, other])
    with pytest.raises(InvalidArgumentError):
        probes.pool_probabilities([])


def _w1_quadrature(values, D):
    x = np.sort(np.asarray(values, dtype=float))

    def gap(u):
        return abs(np.searchsorted(x, u, side="right") / x.size - (1 - math.exp(-D * u)))

    edges = np.unique(np.concatenate(([0.0], x)))
    total = sum(integrate.quad(gap, a, b, epsabs=1e-13)[0] for a, b in zip(edges, edges[1:]))
    return total + integrate.quad(gap, x[-1], np.inf, epsabs=1e-13)[0]


def test_w1_all_mass_at_uniform_value():
    D = 28
    got = probes.wasserstein_to_pt(probes.pool_probabilities([UNIFORM]))
    assert got == pytest.approx(_w1_quadrature(np.full(28, 1 / D), D), abs=1e-10)
    # closed form of the same integral
    assert got == pytest.approx(2 / (math.e * D), rel=1e-12)


def test_w1_matches_quadrature_on_random_pools(rng):
    for D in (3, 28, 120):
        values = rng.exponential(1 / D, size=50)
        assert probes.wasserstein_to_pt(values, D) == pytest.approx(_w1_quadrature(values, D), abs=1e-9)


def test_w1_of_pt_sample_is_small():
    D = 28
    values = np.random.default_rng(11).exponential(1 / D, size=10**6)
    assert probes.wasserstein_to_pt(values, D) <= 0.002 / D


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(0, 1), min_size=1, max_size=60), D=st.integers(1, 200))
def test_w1_positive_for_finite_pools(v, D):
    assert probes.wasserstein_to_pt(np.array(v), D) > 0


def test_w1_needs_D_for_arrays():
    with pytest.raises(InvalidArgumentError):
        probes.wasserstein_to_pt(np.array([0.1]))


def test_w1_gradient_matches_finite_difference(rng):
    D = 28
    x = rng.exponential(1 / D, size=40)
    g = probes.wasserstein_gradient(x, D)
    h = 1e-9
    for k in range(0, 40, 7):
        xp = x.copy()
        xp[k] += h
        fd = (probes.wasserstein_to_pt(xp, D) - probes.wasserstein_to_pt(x, D)) / h
        assert g[k] == pytest.approx(fd, abs=1e-5)


# -- entropy -----------------------------------------------------------------------


def test_entropy_examples():
    assert probes.shannon_entropy(delta()) == 0.0
    assert probes.shannon_entropy(UNIFORM) == pytest.approx(math.log(28), rel=1e-14)
    assert round(probes.shannon_entropy(UNIFORM), 4) == 3.3322
    assert probes.shannon_entropy(HALF) == pytest.approx(math.log(2), rel=1e-14)


def test_avg_entropy():
    stat = probes.avg_entropy([HALF] * 5)
    assert stat.mean == pytest.approx(math.log(2)) and stat.stderr == 0 and stat.n == 5
    single = probes.avg_entropy([HALF])
    assert single.stderr == 0 and not single.stderr_defined


def test_ensemble_stat_order_insensitive(rng):
    x = rng.normal(size=1001) * 1e3
    a = probes.ensemble_stat(x)
    b = probes.ensemble_stat(x[::-1])
    assert a.mean == b.mean
    assert abs(a.stderr - b.stderr) <= 1e-12 * a.stderr
    assert a.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(x.size), rel=1e-12)


def test_haar_entropy_values():
    assert probes.haar_entropy(1) == 0.0
    exact = sum(Fraction(1, i) for i in range(1, 29)) - 1
    assert probes.haar_entropy(28) == float(exact)
    assert probes.haar_entropy(28) == pytest.approx(2.927171038966368, abs=1e-15)


@pytest.mark.parametrize("D", [100, 1000, 10_000])
def test_haar_entropy_asymptotics(D):
    approx = -1 + math.log(D) + 0.5772156649015329
    assert abs(probes.haar_entropy(D) - approx) <= 1 / (2 * D) + 1e-3


@settings(max_examples=50, deadline=None)
@given(D=st.integers(2, 5000))
def test_haar_entropy_below_maximum(D):
    assert probes.haar_entropy(D) < math.log(D)


def test_haar_entropy_is_the_haar_average():
    # Monte Carlo: entropy of |psi|^2 for Haar-random states in dimension 28
    r = np.random.default_rng(5)
    z = r.normal(size=(20000, 28)) + 1j * r.normal(size=(20000, 28))
    p = np.abs(z) ** 2
    p /= p.sum(axis=1, keepdims=True)
    s = probes.entropy_of(p)
    assert abs(s.mean() - probes.haar_entropy(28)) <= 4 * s.std() / math.sqrt(s.size)


# -- participation ratio -----------------------------------------------------------------


def test_participation_ratio_examples():
    assert probes.participation_ratio(delta()) == 1.0
    assert probes.participation_ratio(UNIFORM) == pytest.approx(28)
    assert probes.participation_ratio(HALF) == 2.0
    stat = probes.avg_participation_ratio([UNIFORM, HALF])
    assert stat.mean == pytest.approx(15)


@settings(max_examples=100, deadline=None)
@given(v=probability_vectors, seed=st.integers(0, 2**32 - 1))
def test_entropy_and_pr_properties(v, seed):
    p = normalized(v)
    perm = np.random.default_rng(seed).permutation(p.size)
    s, pr = probes.shannon_entropy(p), probes.participation_ratio(p)
    assert probes.shannon_entropy(p[perm]) == pytest.approx(s, abs=1e-12)
    assert probes.participation_ratio(p[perm]) == pytest.approx(pr, rel=1e-12)
    assert -1e-12 <= s <= math.log(28) + 1e-12
    assert 1 - 1e-12 <= pr <= math.exp(s) * (1 + 1e-12)
    assert math.exp(s) <= 28 * (1 + 1e-12)


# -- OTOC ------------------------------------------------------------------------------


def test_otoc_identity():
    assert probes.otoc_value(np.eye(8), (2, 3), (2, 3)) == 1.0
    assert probes.otoc_value(np.eye(8), (2, 3), (3, 2)) == 1.0
    assert probes.otoc_value(np.eye(8), (2, 3), (0, 5)) == 0.0


def test_otoc_rejects_repeated_modes():
    with pytest.raises(InvalidArgumentError):
        probes.otoc_value(np.eye(4), (1, 1), (0, 2))
    with pytest.raises(InvalidArgumentError):
        probes.otoc_value(np.eye(4), (0, 1), (2, 2))
    with pytest.raises(InvalidArgumentError):
        probes.otoc_value(np.eye(4), (0, 1), (2, 4))


def test_otoc_matches_permanent_probability(rng):
    for _ in range(100):
        u = haar_unitary(8, rng)
        i, j = sorted(rng.choice(8, 2, replace=False))
        r, s = sorted(rng.choice(8, 2, replace=False))
        n_in = itf.pattern_from_modes([i, j], 8)
        n_out = itf.pattern_from_modes([r, s], 8)
        assert abs(probes.otoc_value(u, (i, j), (r, s)) - itf.raw_probability(u, n_in, n_out)) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_otoc_sum_is_collision_free_mass(seed):
    r = np.random.default_rng(seed)
    u = haar_unitary(8, r)
    total = math.fsum(probes.otoc_value(u, (2, 3), tuple(row)) for row in CFGS.mode_indices)
    mass = itf.raw_collision_free_mass(u, itf.pattern_from_modes([2, 3], 8), CFGS)
    assert abs(total - mass) <= 1e-10


def _ensemble(lambda_cap, n, seed=0, d=8):
    r = np.random.default_rng(seed)
    return [
        ens.diagonalize(ens.build_hamiltonian(ens.sample_poisson_diag(d, r), ens.sample_goe(d, r), lambda_cap))
        for _ in range(n)
    ]


def test_otoc_series_at_time_zero():
    spectra = _ensemble(1000, 10)
    same = probes.otoc_series(spectra, (2, 3), (2, 3), [0.0, 1.0, 2.0])
    other = probes.otoc_series(spectra, (2, 3), (0, 5), [0.0, 1.0, 2.0])
    assert same.values[0] == pytest.approx(1.0, abs=1e-12)
    assert other.values[0] == pytest.approx(0.0, abs=1e-24)
    assert np.all((same.values >= 0) & (same.values <= 1 + 1e-12))


def test_otoc_series_matches_direct_evolution():
    spectra = _ensemble(3.0, 5, seed=2)
    times = [0.5, 4.0]
    series = probes.otoc_series(spectra, (1, 4), (0, 6), times)
    for k, t in enumerate(times):
        vals = [probes.otoc_value(ens.evolve(s, t), (1, 4), (0, 6)) for s in spectra]
        assert series.values[k] == pytest.approx(np.mean(vals), rel=1e-10)


def test_otoc_series_requires_increasing_times():
    with pytest.raises(InvalidArgumentError):
        probes.otoc_series(_ensemble(1, 2), (0, 1), (2, 3), [1.0, 0.5])


def test_sector_means():
    n_in = itf.pattern_from_modes([2, 3], 8)
    means = probes.sector_means([UNIFORM, UNIFORM], n_in)
    assert set(means) == {0, 1, 2}
    assert all(v == pytest.approx(1 / 28) for v in means.values())
    means = probes.sector_means([dist_of(np.eye(28)[CFGS.index_of((2, 3))])], n_in)
    assert means[2] == 1.0 and means[0] == 0.0


def _sector_ratio(lambda_cap, times):
    # mean probability of a sector-0 config over a sector-1 config, late times
    spectra = _ensemble(lambda_cap, 400, seed=8)
    n_in = itf.pattern_from_modes([2, 3], 8)
    out = {}
    for t in times:
        dists = [itf.output_distribution(ens.evolve(s, t), n_in, CFGS) for s in spectra]
        out[t] = probes.sector_means(dists, n_in)
    return out


def test_sector_structure_integrable_vs_chaotic():
    late = [100.0, 1000.0]
    integ = _sector_ratio(0.01, [1.0] + late)
    chaos = _sector_ratio(1000.0, late)
    assert integ[1.0][1] > integ[1.0][0]
    for t in late:
        r_integ = integ[t][0] / integ[t][1]
        r_chaos = chaos[t][0] / chaos[t][1]
        assert abs(math.log(r_chaos)) < abs(math.log(r_integ))


# -- FFT participation ratio --------------------------------------------------------


def _direct_dft_pr(x):
    # explicit one-sided DFT sum, independent of numpy.fft
    n = len(x)
    y = [v / (sum(x) / n) - 1 for v in x]
    power = []
    for k in range(n // 2 + 1):
        re = sum(y[m] * math.cos(2 * math.pi * k * m / n) for m in range(n))
        im = -sum(y[m] * math.sin(2 * math.pi * k * m / n) for m in range(n))
        power.append(re * re + im * im)
    total = sum(power)
    return 1 / sum((p / total) ** 2 for p in power)


def test_fft_pr_integer_sinusoid_is_one_bin():
    n = np.arange(512)
    x = 3.0 + np.sin(2 * np.pi * 17 * n / 512)
    assert probes.fft_participation_ratio(x) == pytest.approx(1.0, abs=1e-12)


def test_fft_pr_off_grid_sinusoid_matches_direct_dft():
    n = np.arange(64)
    x = 2.0 + 0.7 * np.cos(2 * np.pi * 5.3 * n / 64 + 0.4)
    got = probes.fft_participation_ratio(x)
    assert got == pytest.approx(_direct_dft_pr(list(x)), rel=1e-10)
    assert 1.0 <= got <= 2.5


def test_fft_pr_white_noise_is_broad():
    r = np.random.default_rng(3)
    sinus = probes.fft_participation_ratio(2.0 + np.sin(2 * np.pi * 9.5 * np.arange(512) / 512))
    prs = {L: np.mean([probes.fft_participation_ratio(1.0 + 0.1 * r.normal(size=L)) for _ in range(20)]) for L in (64, 512)}
    assert prs[512] > prs[64]
    assert prs[512] >= 5 * sinus


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_fft_pr_scale_invariant(seed, c):
    x = 1.0 + np.random.default_rng(seed).random(128)
    assert probes.fft_participation_ratio(c * x) == pytest.approx(probes.fft_participation_ratio(x), rel=1e-9)


def test_fft_pr_errors():
    with pytest.raises(InvalidArgumentError):
        probes.fft_participation_ratio(np.ones(16))
    with pytest.raises(InvalidArgumentError):
        probes.fft_participation_ratio(np.tile([1.0, -1.0], 32))
    with pytest.raises(DegenerateSpectrumError):
        probes.fft_participation_ratio(np.full(64, 0.3))
    with pytest.raises(InvalidArgumentError):
        probes.fft_participation_ratio(np.ones(64) + np.arange(64), times=np.arange(64) ** 2)


# -- short-time exponents ----------------------------------------------------------------


T_SHORT = np.geomspace(1e-3, 1e-1, 25)


def test_short_time_exponents_chaotic():
    spectra = _ensemble(1000, 50, seed=4)
    one = probes.short_time_exponent(spectra, (2, 3), (3, 6), T_SHORT)
    zero = probes.short_time_exponent(spectra, (2, 3), (0, 6), T_SHORT)
    assert one.slope == pytest.approx(2.0, abs=0.2)
    assert zero.slope == pytest.approx(4.0, abs=0.3)
    assert one.n_points == 25 and one.t_min == T_SHORT[0]


def test_short_time_underflow_on_diagonal_hamiltonian():
    spectra = [ens.diagonalize(np.diag(np.arange(8.0)))]
    with pytest.raises(UnderflowError):
        probes.short_time_exponent(spectra, (2, 3), (0, 6), T_SHORT)


def test_short_time_grid_checks():
    spectra = _ensemble(1000, 2)
    with pytest.raises(InvalidArgumentError):
        probes.short_time_exponent(spectra, (2, 3), (0, 6), T_SHORT[:5])
    with pytest.raises(InvalidArgumentError):
        probes.short_time_exponent(spectra, (2, 3), (0, 6), np.linspace(1e-3, 1e-1, 20))
    with pytest.raises(InvalidArgumentError):
        probes.short_time_exponent(spectra, (2, 3), (3, 2), T_SHORT)


# -- conditional Porter-Thomas density ----------------------------------------------------


@pytest.mark.parametrize("N0,D", [(36, 28), (36, 3), (10, 9), (55, 45)])
def test_conditional_density_total_mass(N0, D):
    mass = integrate.quad(lambda p: probes.conditional_pt_density(p, N0, D), 0, 1, limit=200)[0]
    assert mass == pytest.approx(probes.conditional_pt_cdf(1.0, N0, D, normalize=False), abs=1e-8)
    assert mass <= probes.conditional_pt_mass(N0, D) + 1e-12


def test_conditional_density_normalized_for_experiment_counts():
    mass = integrate.quad(lambda p: probes.conditional_pt_density(p, 36, 28), 0, 1, limit=200)[0]
    assert abs(mass - 1) <= 1e-6


def test_conditional_density_without_collisions_is_pt():
    for p in (0.0, 0.01, 0.2):
        assert probes.conditional_pt_density(p, 28, 28) == pytest.approx(28 * math.exp(-28 * p))


def test_conditional_cdf_matches_monte_carlo():
    # p = x / y with x ~ Exp(rate N0) and 1 - y ~ Gamma(C, rate N0), y > 0
    N0, D = 36, 28
    r = np.random.default_rng(9)
    n = 2_000_000
    x = r.exponential(1 / N0, n)
    z = r.gamma(N0 - D, 1 / N0, n)
    p = x[z < 1] / (1 - z[z < 1])
    kept = np.count_nonzero(z < 1) / n
    assert abs(probes.conditional_pt_mass(N0, D) - kept) <= 5 * math.sqrt(kept * (1 - kept) / n) + 1 / n
    for p0 in (0.01, 0.03, 0.1, 0.3):
        mc = np.count_nonzero(p <= p0) / n
        se = math.sqrt(mc * (1 - mc) / n)
        assert abs(probes.conditional_pt_cdf(p0, N0, D, normalize=False) - mc) <= 5 * se


def test_conditional_w1_ordering():
    good = probes.conditional_pt_w1(36, 28)
    poor = probes.conditional_pt_w1(36, 3)
    assert good < 0.1 / 28
    assert poor * 3 >= 5 * good * 28


def test_conditional_density_errors():
    with pytest.raises(InvalidArgumentError):
        probes.conditional_pt_density(0.1, 36, 40)
    with pytest.raises(InvalidArgumentError):
        probes.conditional_pt_density(1.5, 36, 28)
    with pytest.raises(InvalidArgumentError):
        probes.conditional_pt_density(0.1, 36, 0)
