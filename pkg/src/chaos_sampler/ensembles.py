"""Random-matrix Hamiltonians, their spectra, and time evolution.

Hamiltonians are plain real symmetric ``numpy`` arrays and unitaries are
complex arrays; :class:`Spectrum` carries the eigendecomposition that
every time-evolution call reuses.

The tunable family interpolates between a diagonal Gaussian (Poissonian
levels) and a GOE matrix::

    H = (H0 + lam * V) / sqrt(1 + lam**2),   lam = sqrt(2*pi*Lambda/d)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from chaos_sampler import rng as _rng
from chaos_sampler.errors import (
    InvalidArgumentError,
    InvalidDimensionError,
    NumericFailureError,
)

ORTHOGONALITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8
UNITARITY_TOL = 1e-8


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and orthogonal eigenvectors (as columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


@dataclass(frozen=True)
class EnsembleSpec:
    dim: int
    lambda_cap: float
    n_realizations: int
    master_seed: int = 0

    def __post_init__(self):
        _check_dim(self.dim)
        if not (self.lambda_cap >= 0 and math.isfinite(self.lambda_cap)):
            raise InvalidArgumentError(f"Lambda must be finite and >= 0, got {self.lambda_cap}")
        if self.n_realizations < 1:
            raise InvalidArgumentError("n_realizations must be positive")
        _rng.check_seed(self.master_seed)

    @property
    def coupling(self) -> float:
        return coupling_from_lambda_cap(self.lambda_cap, self.dim)


def _check_dim(d: int) -> int:
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {d}")
    return int(d)


def coupling_from_lambda_cap(lambda_cap: float, d: int) -> float:
    """Invert ``Lambda = lam**2 d / (2 pi)`` for the coupling ``lam``."""
    if lambda_cap < 0:
        raise InvalidArgumentError(f"Lambda must be >= 0, got {lambda_cap}")
    return math.sqrt(2.0 * math.pi * lambda_cap / d)


def sample_poisson_diag(d: int, stream: np.random.Generator) -> np.ndarray:
    """Diagonal matrix with i.i.d. N(0, 1) entries."""
    d = _check_dim(d)
    return np.diag(stream.standard_normal(d))


def sample_goe(d: int, stream: np.random.Generator) -> np.ndarray:
    """GOE matrix: diagonal variance 2/d, off-diagonal variance 1/d."""
    d = _check_dim(d)
    a = stream.standard_normal((d, d))
    # a + a.T is exactly symmetric in floating point
    return (a + a.T) / math.sqrt(2.0 * d)


def build_hamiltonian(h0: np.ndarray, v: np.ndarray, lambda_cap: float) -> np.ndarray:
    h0 = np.asarray(h0, dtype=float)
    v = np.asarray(v, dtype=float)
    if h0.shape != v.shape or h0.ndim != 2 or h0.shape[0] != h0.shape[1]:
        raise InvalidArgumentError(f"shape mismatch: {h0.shape} vs {v.shape}")
    lam = coupling_from_lambda_cap(lambda_cap, h0.shape[0])
    if lam == 0.0:
        return h0.copy()
    return (h0 + lam * v) / math.sqrt(1.0 + lam * lam)


def sample_hamiltonian(
    d: int, lambda_cap: float, stream: np.random.Generator
) -> np.ndarray:
    """Draw ``H0`` then ``V`` from one stream and combine them."""
    h0 = sample_poisson_diag(d, stream)
    v = sample_goe(d, stream)
    return build_hamiltonian(h0, v, lambda_cap)


def sample_pair(spec: EnsembleSpec, label: str, index: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``(H0, V)`` pair of one realization of ``spec``."""
    s = _rng.stream(spec.master_seed, label, index)
    return sample_poisson_diag(spec.dim, s), sample_goe(spec.dim, s)


def _fix_signs(q: np.ndarray) -> np.ndarray:
    # largest-magnitude component of each column made positive; argmax
    # returns the lowest index on ties
    idx = np.argmax(np.abs(q), axis=-2)
    pivots = np.take_along_axis(q, idx[..., None, :], axis=-2)
    signs = np.where(pivots < 0, -1.0, 1.0)
    return q * signs


def diagonalize(h: np.ndarray) -> Spectrum:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {h.shape}")
    _check_dim(h.shape[0])
    if not np.array_equal(h, h.T):
        raise InvalidArgumentError("Hamiltonian is not symmetric")
    try:
        if not np.all(np.isfinite(h)):
            raise np.linalg.LinAlgError("non-finite entries")
        w, q = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        finite = bool(np.all(np.isfinite(h)))
        norm = float(np.max(np.abs(h))) if finite else float("nan")
        raise NumericFailureError(
            f"eigensolver failed ({exc}); max|H|={norm:.3e}, all finite={finite}"
        ) from exc
    return Spectrum(w, _fix_signs(q))


def diagonalize_many(hs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked version of :func:`diagonalize` returning ``(E, Q)`` arrays."""
    hs = np.asarray(hs, dtype=float)
    try:
        w, q = np.linalg.eigh(hs)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(f"eigensolver failed on stacked input: {exc}") from exc
    return w, _fix_signs(q)


def evolve(s: Spectrum, t: float) -> np.ndarray:
    """``U(t) = exp(-i H t)`` assembled from the stored eigendecomposition."""
    t = float(t)
    if not math.isfinite(t):
        raise InvalidArgumentError(f"time must be finite, got {t}")
    q = s.eigenvectors
    return (q * np.exp(-1j * s.eigenvalues * t)) @ q.T


def evolve_columns(
    energies: np.ndarray, vectors: np.ndarray, t: float, columns: Sequence[int]
) -> np.ndarray:
    """Selected columns of ``U(t)`` for a stack of spectra.

    ``energies`` has shape ``(L, d)`` and ``vectors`` ``(L, d, d)``; the
    result has shape ``(L, d, len(columns))``.
    """
    phases = np.exp(-1j * energies * t)
    cols = np.asarray(columns, dtype=int)
    return (vectors * phases[:, None, :]) @ np.swapaxes(vectors[:, cols, :], -1, -2)


def _eigenvalue_stack(spectra: Iterable[Spectrum] | np.ndarray) -> np.ndarray:
    if isinstance(spectra, np.ndarray):
        e = spectra
        if e.ndim == 1:
            e = e[None, :]
    else:
        e = [s.eigenvalues for s in spectra]
        if not e:
            raise InvalidArgumentError("empty ensemble")
        dims = {len(x) for x in e}
        if len(dims) != 1:
            raise InvalidArgumentError(f"spectra have different dimensions: {sorted(dims)}")
        e = np.stack(e)
    if e.shape[0] == 0:
        raise InvalidArgumentError("empty ensemble")
    return e


def sff_samples(spectra, t, k: int = 2) -> np.ndarray:
    """Per-realization ``|Tr U(t)|^(2k) / d^(2k)``, shape ``(L,)`` or ``(L, T)``."""
    if int(k) != k or k < 1:
        raise InvalidArgumentError(f"k must be a positive integer, got {k}")
    e = _eigenvalue_stack(spectra)
    d = e.shape[1]
    t_arr = np.asarray(t, dtype=float)
    tr = np.exp(-1j * e[..., None] * t_arr.reshape(-1)).sum(axis=1) / d
    vals = np.abs(tr) ** (2 * int(k))
    return vals.reshape((e.shape[0],) + t_arr.shape)


def sff(spectra, t, k: int = 2):
    """Ensemble-averaged spectral form factor, normalized to 1 at ``t = 0``.

    ``t`` may be a scalar (float returned) or an array of times.
    """
    vals = sff_samples(spectra, t, k)
    mean = vals.mean(axis=0)
    return float(mean) if np.ndim(mean) == 0 else mean
