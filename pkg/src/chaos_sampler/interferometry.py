"""Fock-state boson sampling through a linear interferometer.

Conventions: the photon entering mode ``c`` leaves in mode ``r`` with
amplitude ``U[r, c]``. The ``N x N`` transfer submatrix repeats row ``r``
``n_out[r]`` times and column ``c`` ``n_in[c]`` times. Modes are 0-based
inside the library and 1-based in everything written to disk.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from chaos_sampler.errors import (
    DegenerateConditioningError,
    EmptyRecordError,
    InvalidArgumentError,
    UnsupportedSizeError,
)

MAX_PERMANENT_SIZE = 30
DEGENERATE_MASS = 1e-12
EXACT = "exact-conditional"
EMPIRICAL = "empirical-counts"


# --------------------------------------------------------------------------
# occupation patterns and configuration sets
# --------------------------------------------------------------------------


def pattern_from_modes(modes: Sequence[int], n_modes: int) -> tuple[int, ...]:
    """Occupation vector from 0-based occupied mode indices (repeats allowed)."""
    occ = [0] * n_modes
    for m in modes:
        if not 0 <= m < n_modes:
            raise InvalidArgumentError(f"mode {m} outside 0..{n_modes - 1}")
        occ[m] += 1
    return tuple(occ)


def occupied_modes(pattern: Sequence[int]) -> tuple[int, ...]:
    """0-based mode list, each mode repeated by its occupation."""
    out = []
    for m, n in enumerate(pattern):
        if n < 0:
            raise InvalidArgumentError("occupations must be non-negative")
        out.extend([m] * int(n))
    return tuple(out)


def shared_modes(n_in: Sequence[int], n_out: Sequence[int]) -> int:
    """Number of occupied modes two patterns have in common (overlap sector)."""
    return sum(1 for a, b in zip(n_in, n_out) if a > 0 and b > 0)


@dataclass(frozen=True)
class ConfigurationSet:
    """All collision-free ``N``-photon patterns over ``M`` modes.

    Ordered lexicographically by occupied-mode tuple, so for ``M=8, N=2``
    entry 0 is modes (1, 2) and entry 27 is modes (7, 8) in 1-based labels.
    """

    modes: int
    photons: int
    mode_indices: np.ndarray = field(compare=False, repr=False)

    @property
    def size(self) -> int:
        return self.mode_indices.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def configs(self) -> list[tuple[int, ...]]:
        return [pattern_from_modes(row, self.modes) for row in self.mode_indices]

    def index_of(self, modes: Sequence[int]) -> int:
        """Position of the configuration occupying the given 0-based modes."""
        target = tuple(sorted(int(m) for m in modes))
        hits = np.flatnonzero((self.mode_indices == target).all(axis=1))
        if hits.size == 0:
            raise InvalidArgumentError(f"{target} is not a collision-free configuration")
        return int(hits[0])

    def labels(self) -> list[str]:
        return [";".join(str(m + 1) for m in row) for row in self.mode_indices]


def enumerate_collision_free(M: int, N: int) -> ConfigurationSet:
    if N < 1 or M < 1:
        raise InvalidArgumentError(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    if N > M:
        raise InvalidArgumentError(f"no collision-free outcomes for N={N} > M={M}")
    rows = np.array(list(itertools.combinations(range(M), N)), dtype=int)
    return ConfigurationSet(M, N, rows)


def count_total_configs(M: int, N: int) -> int:
    """Number of ``N``-photon patterns over ``M`` modes, collisions included."""
    return math.comb(M + N - 1, N)


# --------------------------------------------------------------------------
# permanents
# --------------------------------------------------------------------------


def _check_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n < 1:
        raise InvalidArgumentError("permanent of an empty matrix is not supported")
    if n > MAX_PERMANENT_SIZE:
        raise UnsupportedSizeError(f"n={n} exceeds the supported bound {MAX_PERMANENT_SIZE}")
    return a


def permanent_bruteforce(a) -> complex:
    """Sum over all ``n!`` permutations. Oracle only."""
    a = _check_square(a)
    n = a.shape[0]
    rows = np.arange(n)
    return complex(sum(np.prod(a[rows, list(p)]) for p in itertools.permutations(range(n))))


def permanent_ryser(a) -> complex:
    """Ryser's inclusion-exclusion formula, subsets visited in Gray-code order."""
    a = _check_square(a)
    n = a.shape[0]
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    gray_prev = 0
    for k in range(1, 2**n):
        gray = k ^ (k >> 1)
        col = (gray ^ gray_prev).bit_length() - 1
        if gray & (1 << col):
            row_sums += a[:, col]
        else:
            row_sums -= a[:, col]
        gray_prev = gray
        sign = -1 if (bin(gray).count("1") & 1) else 1
        total += sign * np.prod(row_sums)
    return complex((-1) ** n * total)


def permanent_glynn(a) -> complex:
    """Glynn's formula with Gray-code sign flips (first sign fixed to +1)."""
    a = _check_square(a)
    n = a.shape[0]
    if n == 1:
        return complex(a[0, 0])
    col_sums = a.sum(axis=0)
    total = np.prod(col_sums)
    sign = 1
    gray_prev = 0
    for k in range(1, 2 ** (n - 1)):
        gray = k ^ (k >> 1)
        bit = (gray ^ gray_prev).bit_length() - 1
        row = bit + 1
        if gray & (1 << bit):
            col_sums -= 2 * a[row]
        else:
            col_sums += 2 * a[row]
        gray_prev = gray
        sign = -sign
        total += sign * np.prod(col_sums)
    return complex(total / 2 ** (n - 1))


def permanent(a) -> complex:
    a = _check_square(a)
    n = a.shape[0]
    if n == 1:
        return complex(a[0, 0])
    if n == 2:
        return complex(a[0, 0] * a[1, 1] + a[0, 1] * a[1, 0])
    return permanent_ryser(a)


def _subset_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    masks = np.arange(1, 2**n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    signs = np.where(bits.sum(axis=1) % 2 == n % 2, 1.0, -1.0)
    return bits, signs


def permanents(a: np.ndarray) -> np.ndarray:
    """Permanents of a stack of matrices with shape ``(..., n, n)``.

    Vectorized Ryser over all column subsets; intended for the small ``n``
    of the sampling experiments (memory grows as ``2^n``).
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[-1]
    if a.shape[-2] != n or n < 1:
        raise InvalidArgumentError(f"expected stacked square matrices, got shape {a.shape}")
    if n == 1:
        return a[..., 0, 0].copy()
    if n == 2:
        return a[..., 0, 0] * a[..., 1, 1] + a[..., 0, 1] * a[..., 1, 0]
    if n > 16:
        flat = a.reshape(-1, n, n)
        return np.array([permanent_ryser(m) for m in flat]).reshape(a.shape[:-2])
    bits, signs = _subset_table(n)
    row_sums = a @ bits.T  # (..., n, 2^n - 1)
    return (np.prod(row_sums, axis=-2) * signs).sum(axis=-1)


# --------------------------------------------------------------------------
# output distributions
# --------------------------------------------------------------------------


def _check_unitary_shape(u) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise InvalidArgumentError(f"expected a square unitary, got shape {u.shape}")
    return u


def build_submatrix(u, n_in: Sequence[int], n_out: Sequence[int]) -> np.ndarray:
    u = _check_unitary_shape(u)
    if len(n_in) != u.shape[0] or len(n_out) != u.shape[0]:
        raise InvalidArgumentError("occupation patterns must have one entry per mode")
    if sum(n_in) != sum(n_out):
        raise InvalidArgumentError(
            f"photon number mismatch: {sum(n_in)} in, {sum(n_out)} out"
        )
    rows = list(occupied_modes(n_out))
    cols = list(occupied_modes(n_in))
    return u[np.ix_(rows, cols)]


def raw_probability(u, n_in: Sequence[int], n_out: Sequence[int]) -> float:
    """Unconditioned probability of ``n_out`` given ``n_in``."""
    sub = build_submatrix(u, n_in, n_out)
    norm = math.prod(math.factorial(k) for k in n_out) * math.prod(
        math.factorial(k) for k in n_in
    )
    return abs(permanent(sub)) ** 2 / norm


def _input_columns(n_in: Sequence[int], cfgs: ConfigurationSet) -> list[int]:
    if len(n_in) != cfgs.modes:
        raise InvalidArgumentError(
            f"input pattern has {len(n_in)} modes, configuration set has {cfgs.modes}"
        )
    cols = list(occupied_modes(n_in))
    if len(cols) != cfgs.photons:
        raise InvalidArgumentError(
            f"input carries {len(cols)} photons, configuration set expects {cfgs.photons}"
        )
    if any(k > 1 for k in n_in):
        raise InvalidArgumentError("input pattern must be collision-free")
    return cols


def raw_probabilities_from_columns(u_cols: np.ndarray, cfgs: ConfigurationSet) -> np.ndarray:
    """Raw collision-free probabilities from the input columns of ``U``.

    ``u_cols`` has shape ``(..., M, N)``: column ``k`` is the column of ``U``
    for the ``k``-th occupied input mode. Returns shape ``(..., D)``.
    """
    sub = u_cols[..., cfgs.mode_indices, :]  # (..., D, N, N)
    return np.abs(permanents(sub)) ** 2


def raw_probabilities(u, n_in: Sequence[int], cfgs: ConfigurationSet) -> np.ndarray:
    u = _check_unitary_shape(u)
    if u.shape[0] != cfgs.modes:
        raise InvalidArgumentError(f"unitary is {u.shape[0]}-dimensional, need {cfgs.modes}")
    cols = _input_columns(n_in, cfgs)
    return raw_probabilities_from_columns(u[:, cols], cfgs)


def raw_collision_free_mass(u, n_in: Sequence[int], cfgs: ConfigurationSet) -> float:
    return math.fsum(raw_probabilities(u, n_in, cfgs))


def all_patterns(M: int, N: int) -> list[tuple[int, ...]]:
    """Every ``N``-photon pattern over ``M`` modes, collisions included."""
    return [
        pattern_from_modes(c, M)
        for c in itertools.combinations_with_replacement(range(M), N)
    ]


@dataclass(frozen=True, eq=False)
class OutputDistribution:
    configs: ConfigurationSet
    probs: np.ndarray
    kind: str = EXACT

    def __post_init__(self):
        if self.probs.shape != (self.configs.size,):
            raise InvalidArgumentError(
                f"expected {self.configs.size} probabilities, got shape {self.probs.shape}"
            )
        if np.any(self.probs < 0):
            raise InvalidArgumentError("probabilities must be non-negative")
        if self.kind == EXACT and abs(math.fsum(self.probs) - 1.0) > 1e-10:
            raise InvalidArgumentError("exact conditional distribution does not sum to 1")


def condition(raw: np.ndarray, threshold: float = DEGENERATE_MASS) -> np.ndarray:
    """Renormalize raw collision-free probabilities (last axis) to unit sum."""
    mass = raw.sum(axis=-1, keepdims=True)
    if np.any(mass < threshold):
        raise DegenerateConditioningError(float(np.min(mass)), threshold)
    return raw / mass


def output_distribution(u, n_in: Sequence[int], cfgs: ConfigurationSet) -> OutputDistribution:
    """Conditional distribution over collision-free outputs.

    Raises :class:`DegenerateConditioningError` when the collision-free raw
    mass is below ``1e-12`` (e.g. exact Hong-Ou-Mandel cancellation).
    """
    raw = raw_probabilities(u, n_in, cfgs)
    return OutputDistribution(cfgs, condition(raw), EXACT)


@dataclass(frozen=True, eq=False)
class CountRecord:
    configs: ConfigurationSet
    counts: np.ndarray
    shots_retained: int
    shots_total: int

    def __post_init__(self):
        if int(self.counts.sum()) != self.shots_retained:
            raise InvalidArgumentError("counts do not sum to shots_retained")
        if self.shots_retained > self.shots_total:
            raise InvalidArgumentError("more retained shots than total shots")


def draw_counts(dist: OutputDistribution, shots: int, stream: np.random.Generator) -> CountRecord:
    """Multinomial coincidence counts over the collision-free outputs."""
    if dist.kind != EXACT:
        raise InvalidArgumentError("can only sample from an exact conditional distribution")
    if shots < 1:
        raise InvalidArgumentError(f"shots must be positive, got {shots}")
    p = np.clip(dist.probs, 0.0, None)
    counts = stream.multinomial(int(shots), p / p.sum())
    return CountRecord(dist.configs, counts.astype(np.int64), int(shots), int(shots))


def empirical_distribution(c: CountRecord) -> OutputDistribution:
    if c.shots_retained < 1:
        raise EmptyRecordError("no retained shots")
    return OutputDistribution(c.configs, c.counts / c.shots_retained, EMPIRICAL)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def write_distribution_csv(dist: OutputDistribution, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_id", "occupied_modes", "prob"])
        for i, (label, p) in enumerate(zip(dist.configs.labels(), dist.probs), start=1):
            w.writerow([i, label, repr(float(p))])


def read_distribution_csv(path, kind: str = EXACT) -> OutputDistribution:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    modes = [[int(m) - 1 for m in r["occupied_modes"].split(";")] for r in rows]
    n = len(modes[0])
    m = max(max(r) for r in modes) + 1
    # the largest occupied mode is M only for complete sets, which is what we write
    cfgs = enumerate_collision_free(m, n)
    if [list(r) for r in cfgs.mode_indices] != modes:
        raise InvalidArgumentError(f"{path}: rows are not a complete ordered configuration set")
    probs = np.array([float(r["prob"]) for r in rows])
    return OutputDistribution(cfgs, probs, kind)
