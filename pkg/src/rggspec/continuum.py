"""Continuum reference: Dirichlet spectrum of ``-sigma_bar * Laplacian`` on the unit cube.

Eigenfunctions are ``psi_n(y) = 2**(d/2) * prod_i sin(n_i pi y_i)`` with
eigenvalue ``sigma_bar * pi**2 * |n|**2``. On the dilated cube ``[0, 3**m]^d``
they are sampled as ``psi_n(x / 3**m)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import InsufficientDepth


@dataclass(frozen=True)
class SpectrumEntry:
    lam: float
    multi_index: tuple
    class_id: int


@dataclass(frozen=True)
class ContinuumSpectrum:
    """First ``k_max`` Dirichlet eigenpairs, indexed from 1 like the physics.

    ``levels`` holds every distinct ``|n|^2`` up to the enumeration depth and
    ``level_sizes`` their full multiplicities; the depth always reaches one
    level past the last reported entry, so gaps are certified.
    """

    dim: int
    sigma_bar: float
    entries: tuple
    levels: tuple
    level_sizes: tuple

    def __len__(self):
        return len(self.entries)

    def entry(self, k: int) -> SpectrumEntry:
        if not 1 <= k <= len(self.entries):
            raise InsufficientDepth(f"k={k} outside enumerated range 1..{len(self.entries)}")
        return self.entries[k - 1]

    def lam(self, k: int) -> float:
        return self.entry(k).lam

    def class_members(self, k: int) -> list[int]:
        """1-based indices of all eigenvalues equal to ``lam(k)``.

        May run past ``len(self)`` when ``k_max`` cuts a class in half.
        """
        cid = self.entry(k).class_id
        first = next(i for i, e in enumerate(self.entries, 1) if e.class_id == cid)
        return list(range(first, first + self.level_sizes[cid]))

    def evaluator(self, k: int) -> "EigenfunctionEvaluator":
        return EigenfunctionEvaluator(self.entry(k).multi_index, self.sigma_bar)

    def to_json(self) -> str:
        return json.dumps([{"lambda": e.lam, "multi_index": list(e.multi_index),
                            "class_id": e.class_id} for e in self.entries])


def _enumerate(dim, bound):
    top = int(math.isqrt(bound))
    out = []
    for n in itertools.product(range(1, top + 1), repeat=dim):
        s = sum(v * v for v in n)
        if s <= bound:
            out.append((s, n))
    out.sort()
    return out


def continuum_spectrum(dim: int, sigma_bar: float, k_max: int) -> ContinuumSpectrum:
    """Ascending Dirichlet spectrum, ties in lexicographic multi-index order."""
    if not sigma_bar > 0:
        raise ValueError("sigma_bar must be positive")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    bound = dim + 3
    while True:
        idx = _enumerate(dim, bound)
        # every index with |n|^2 <= bound is present, so the first k_max are
        # final once at least one strictly larger level is also present
        if len(idx) > k_max and idx[-1][0] > idx[k_max - 1][0]:
            break
        bound *= 2
    sq = [s for s, _ in idx]
    levels = sorted(set(sq))
    sizes = [sq.count(v) for v in levels]
    cls = {v: i for i, v in enumerate(levels)}
    scale = sigma_bar * math.pi ** 2
    entries = tuple(SpectrumEntry(scale * s, n, cls[s]) for s, n in idx[:k_max])
    return ContinuumSpectrum(dim=dim, sigma_bar=float(sigma_bar), entries=entries,
                             levels=tuple(levels), level_sizes=tuple(sizes))


@dataclass(frozen=True)
class EigenfunctionEvaluator:
    multi_index: tuple
    sigma_bar: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.multi_index)

    @property
    def normalization(self) -> float:
        return 2.0 ** (self.dim / 2)

    @property
    def lam(self) -> float:
        return self.sigma_bar * math.pi ** 2 * sum(v * v for v in self.multi_index)

    def psi(self, y) -> np.ndarray:
        """Value on the unit cube, vectorized over rows of ``y``."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        w = np.pi * np.asarray(self.multi_index, dtype=np.float64)
        return self.normalization * np.prod(np.sin(w * y), axis=1)

    def evaluate(self, x, m: int) -> dict:
        """Value, gradient and Hessian diagonal of ``psi(x / 3**m)``.

        ``x`` is a point or an ``(N, d)`` array in ``[0, 3**m]^d``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        side = 3.0 ** m
        if x.shape[1] != self.dim:
            raise ValueError(f"points have dimension {x.shape[1]}, expected {self.dim}")
        if np.any(x < 0) or np.any(x > side):
            raise ValueError(f"point outside [0, {side:g}]^{self.dim}")
        w = np.pi * np.asarray(self.multi_index, dtype=np.float64) / side
        s = np.sin(w * x)
        c = np.cos(w * x)
        value = self.normalization * np.prod(s, axis=1)
        grad = np.empty_like(x)
        for i in range(self.dim):
            others = np.prod(np.delete(s, i, axis=1), axis=1)
            grad[:, i] = self.normalization * w[i] * c[:, i] * others
        hess = -(w ** 2)[None, :] * value[:, None]
        return {"value": value, "gradient": grad, "hessian_diag": hess}


def spectral_gap(spec: ContinuumSpectrum, k: int) -> float:
    """Distance from ``lam(k)`` to the nearest different eigenvalue."""
    cid = spec.entry(k).class_id
    if cid + 1 >= len(spec.levels):
        raise InsufficientDepth(f"no level beyond class {cid} was enumerated")
    scale = spec.sigma_bar * math.pi ** 2
    here = spec.levels[cid]
    gaps = [spec.levels[cid + 1] - here]
    if cid > 0:
        gaps.append(here - spec.levels[cid - 1])
    return scale * min(gaps)


def moser_ratio(spec: ContinuumSpectrum, k: int) -> float:
    """``||psi_k||_inf / lam_k^(d/4)`` for the unit-mean-square eigenfunction."""
    return 2.0 ** (spec.dim / 2) / spec.lam(k) ** (spec.dim / 4)


def moser_check(spec: ContinuumSpectrum, k: int) -> dict:
    """Sup-norm bound with the constant fixed by the principal eigenpair."""
    ratio = moser_ratio(spec, k)
    return {"ratio": ratio, "bound_ok": bool(ratio <= moser_ratio(spec, 1) * (1 + 1e-14))}


def admissible(m: int, k: int, spec: ContinuumSpectrum, c_adm: float = 1.0) -> bool:
    """Scale-separation condition between ``3**m`` and the mode's wavelength."""
    if not c_adm > 0:
        raise ValueError("c_adm must be positive")
    q = 3.0 ** (-m) * math.sqrt(spec.lam(k))
    if spec.dim == 2:
        q *= math.sqrt(m)
    return q < 1.0 / c_adm


# quadrature on the unit cube

def gauss_legendre_average(func, dim: int, nodes: int = 64) -> float:
    """Tensor Gauss-Legendre approximation of the average of ``func`` over ``[0,1]^dim``.

    ``func`` receives an ``(N, dim)`` array and returns ``N`` values.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts *= g.ravel()
    return float(np.sum(wts * func(pts)))


def psi_moment(multi_index, power: int, nodes: int | None = None) -> float:
    """Average of ``psi_n ** power`` over the unit cube by quadrature."""
    ev = EigenfunctionEvaluator(tuple(multi_index))
    if nodes is None:
        nodes = 4 * power * max(multi_index) + 16
    return gauss_legendre_average(lambda y: ev.psi(y) ** power, ev.dim, nodes)


# finite-difference oracle

def fd_laplacian(dim: int, n_grid: int) -> sparse.csr_matrix:
    """Standard (2 dim + 1)-point ``-Laplacian`` on the interior nodes of a uniform grid.

    ``n_grid`` intervals per side, mesh width ``1 / n_grid``; boundary nodes
    are eliminated (homogeneous Dirichlet).
    """
    h = 1.0 / n_grid
    p = n_grid - 1
    t = sparse.diags([-np.ones(p - 1), 2 * np.ones(p), -np.ones(p - 1)], [-1, 0, 1]) / h ** 2
    eye = sparse.identity(p)
    out = sparse.csr_matrix((p ** dim, p ** dim))
    for i in range(dim):
        term = None
        for j in range(dim):
            f = t if j == i else eye
            term = f if term is None else sparse.kron(term, f)
        out = out + term
    return out.tocsc()


def fd_eigenvalues(dim: int, n_grid: int, count: int) -> np.ndarray:
    """Smallest ``count`` eigenvalues of :func:`fd_laplacian` (shift-invert Lanczos)."""
    a = fd_laplacian(dim, n_grid)
    vals = spla.eigsh(a, k=count, sigma=0.0, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def fd_richardson(dim: int, count: int, coarse: int = 200, fine: int = 400) -> np.ndarray:
    """Richardson extrapolation of the second-order FD eigenvalues over two grids."""
    lc = fd_eigenvalues(dim, coarse, count)
    lf = fd_eigenvalues(dim, fine, count)
    r = (fine / coarse) ** 2
    return (r * lf - lc) / (r - 1.0)
