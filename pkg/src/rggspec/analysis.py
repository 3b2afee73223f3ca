"""Discrete vs continuum comparison: alignment, error functionals, Monte-Carlo
checks and log-scale rate fits."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .continuum import (ContinuumSpectrum, EigenfunctionEvaluator, admissible, psi_moment,
                        spectral_gap)
from .eigen import EigenSet
from .errors import DegenerateAlignmentFailure, InsufficientDepth
from .geometry import Cluster, build_graph, extract_cluster, sample_poisson
from .homogenize import bulk_mask
from .operators import ClusterFunction, DirichletOperator, dual_norm
from .seeding import split_seed

log = logging.getLogger(__name__)

ALIGN_THRESHOLD = 0.1
BULK_MARGIN = 0.25


@dataclass
class PairError:
    m: int
    k: int
    trial: int
    seed: int
    lambda_scaled: float
    lambda_cont: float
    rel_eig_err: float
    gap: float
    l2_vec_err: float
    linf_vec_err_bulk: float
    normalization_inner: float
    abs_eig_err: float = 0.0
    l2_vec_err_paper: float = 0.0
    l2_vec_err_avsum: float = 0.0

    def as_dict(self):
        return asdict(self)


@dataclass
class RateFit:
    k: int
    model: str
    slope: float
    intercept: float
    r_squared: float
    points: list
    metric: str = "rel_eig_err"

    def as_dict(self):
        return asdict(self)


@dataclass
class ConcentrationRecord:
    m: int
    k: int
    trials: int
    deviations: list
    threshold: float
    empirical_exceed_rate: float
    bernstein_bound: float
    sigma2: float = 0.0
    cluster_size_min: int = 0
    failures: int = 0

    def as_dict(self):
        return asdict(self)


@dataclass
class AlignedPair:
    """Aligned discrete and continuum functions; unpacks as ``(phi_m, phi_0)``."""

    phi_m: ClusterFunction
    phi_0: ClusterFunction
    inner: float
    members: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.phi_m, self.phi_0))


def restrict_continuum(ev: EigenfunctionEvaluator, cluster: Cluster, m: int) -> ClusterFunction:
    """Continuum eigenfunction sampled at every cluster vertex."""
    if not math.isclose(cluster.box_side, 3.0 ** m, rel_tol=1e-12):
        raise ValueError(f"cluster box side {cluster.box_side} is not 3^{m}")
    return ClusterFunction(cluster, ev.evaluate(cluster.points, m)["value"])


def _extend(cluster: Cluster, interior_values):
    v = np.asarray(interior_values, dtype=np.float64)
    out = np.zeros(cluster.size if v.ndim == 1 else (cluster.size, v.shape[1]))
    out[cluster.interior_mask] = v
    return out


def align_and_normalize(eig: EigenSet, k: int, spec: ContinuumSpectrum, cluster: Cluster,
                        m: int) -> AlignedPair:
    """Pick and scale the discrete mode matching continuum mode ``k``.

    For a multiple continuum eigenvalue the discrete vector is the
    least-squares projection of the continuum function onto the span of the
    discrete eigenvectors with the same indices. The result is rescaled so
    that ``avsum(phi_0 * phi_m) = 1``.
    """
    if not admissible(m, k, spec):
        log.info("pair (m=%d, k=%d) is outside the admissible range", m, k)
    members = spec.class_members(k)
    if members[-1] > len(eig):
        raise InsufficientDepth(f"mode class {members} needs {members[-1]} discrete pairs, "
                                f"got {len(eig)}")
    phi0 = restrict_continuum(spec.evaluator(k), cluster, m).values
    basis = _extend(cluster, eig.vectors[:, [j - 1 for j in members]])
    if len(members) == 1:
        raw = basis[:, 0]
    else:
        coef, *_ = np.linalg.lstsq(basis, phi0, rcond=None)
        raw = basis @ coef
    norm = math.sqrt(float(np.mean(raw * raw)))
    if norm == 0.0:
        raise DegenerateAlignmentFailure("discrete mode vanishes")
    inner = float(np.mean(phi0 * raw)) / norm
    if abs(inner) < ALIGN_THRESHOLD:
        raise DegenerateAlignmentFailure(
            f"k={k}: |avsum(phi_0 phi_m)| = {abs(inner):.3g} < {ALIGN_THRESHOLD}")
    phi_m = raw / (norm * inner)
    return AlignedPair(ClusterFunction(cluster, phi_m), ClusterFunction(cluster, phi0),
                       abs(inner), members)


def pair_errors(phi_m, phi_0, eig: EigenSet, spec: ContinuumSpectrum, cluster: Cluster,
                m: int, k: int, trial: int = 0, seed: int = 0,
                normalization_inner: float = float("nan"),
                margin: float = BULK_MARGIN) -> PairError:
    """Eigenvalue and eigenvector errors for one aligned pair.

    ``l2_vec_err`` divides the squared error sum by the Lebesgue volume
    ``3**(m*d)``; ``l2_vec_err_paper`` further divides by ``lambda_cont``.
    """
    pm = phi_m.values if isinstance(phi_m, ClusterFunction) else np.asarray(phi_m)
    p0 = phi_0.values if isinstance(phi_0, ClusterFunction) else np.asarray(phi_0)
    lam_s = 3.0 ** (2 * m) * float(eig.values[k - 1])
    lam_c = spec.lam(k)
    diff = pm - p0
    sq = float(np.sum(diff * diff))
    l2 = math.sqrt(sq / 3.0 ** (m * cluster.dim))
    bulk = bulk_mask(cluster.points, cluster.box_side, margin)
    linf = float(np.max(np.abs(diff[bulk]))) if bulk.any() else float("nan")
    return PairError(m=m, k=k, trial=trial, seed=seed, lambda_scaled=lam_s, lambda_cont=lam_c,
                     rel_eig_err=abs(lam_s - lam_c) / lam_c, gap=spectral_gap(spec, k),
                     l2_vec_err=l2, linf_vec_err_bulk=linf,
                     normalization_inner=float(normalization_inner),
                     abs_eig_err=abs(lam_s - lam_c), l2_vec_err_paper=l2 / lam_c,
                     l2_vec_err_avsum=math.sqrt(sq / cluster.size))


def concentration_threshold(dim: int, m: int, lam: float) -> float:
    t = 3.0 ** (-m) * math.sqrt(lam)
    return t * math.sqrt(m) if dim == 2 else t


def concentration_sample(multi_index, dim: int, alpha: float, m: int, seed: int,
                         func=None) -> tuple:
    """``(avsum of phi_0^2, cluster size)`` for one fresh cloud."""
    cloud = sample_poisson(dim, 3.0 ** m, alpha, seed)
    cl = extract_cluster(build_graph(cloud))
    if func is None:
        ev = EigenfunctionEvaluator(tuple(multi_index), 1.0)
        vals = ev.evaluate(cl.points, m)["value"] ** 2
    else:
        vals = np.asarray(func(cl.points), dtype=np.float64)
    return float(np.mean(vals)), cl.size


def concentration_check(spec_entry, dim: int, alpha: float, m: int, trials: int, seed: int,
                        func=None, samples=None) -> ConcentrationRecord:
    """Deviation of ``avsum(phi_0^2)`` from 1 over fresh clouds.

    Trial ``t`` samples with ``split_seed(seed, m, t)``; precomputed
    ``samples`` from :func:`concentration_sample` (``None`` for a failed
    trial) may be passed instead. ``func`` replaces the squared eigenfunction
    (maps an ``(N, d)`` point array to values) for testing. The Bernstein
    bound uses the smallest cluster of the batch, so it holds for every trial.
    """
    if trials < 20:
        raise ValueError("concentration_check needs at least 20 trials")
    if samples is None:
        samples = []
        for t in range(trials):
            try:
                samples.append(concentration_sample(spec_entry.multi_index, dim, alpha, m,
                                                    split_seed(seed, m, t), func))
            except Exception as exc:  # noqa: BLE001 - counted, never fatal
                log.warning("concentration trial %d failed: %s", t, exc)
                samples.append(None)
    good = [s for s in samples if s is not None]
    devs = np.array([abs(s[0] - 1.0) for s in good])
    sizes = [s[1] for s in good]
    thr = concentration_threshold(dim, m, spec_entry.lam)
    rate = float(np.mean(devs >= thr)) if good else float("nan")
    sigma2 = psi_moment(spec_entry.multi_index, 4) - 1.0 if func is None else 0.0
    n_min = min(sizes) if sizes else 0
    if sigma2 > 0:
        bound = min(1.0, 2.0 * math.exp(-n_min * thr * thr / (2.0 * sigma2)))
    else:
        bound = 0.0
    return ConcentrationRecord(m=m, k=0, trials=len(samples), deviations=devs.tolist(),
                               threshold=thr, empirical_exceed_rate=rate, bernstein_bound=bound,
                               sigma2=float(sigma2), cluster_size_min=int(n_min),
                               failures=len(samples) - len(good))


def mc2_check(cluster: Cluster, f: ClusterFunction, op: DirichletOperator, lam: float,
              m: int, continuum_mean_sq: float = 1.0, tol: float = 1e-10,
              preconditioner=None) -> dict:
    """Monte-Carlo error of ``avsum(u_0 f)`` against a dual-norm scale.

    ``f`` is a restricted continuum eigenfunction with eigenvalue ``lam`` on
    the unit cube, so ``u_0 = 3**(2m) / lam * f`` solves the continuum
    Dirichlet problem on ``U_m`` and ``avg(u_0 f) = 3**(2m) / lam`` times
    ``continuum_mean_sq`` (the continuum mean of ``f**2``, 1 for a
    normalized eigenfunction).
    """
    vals = f.values
    scale = 3.0 ** (2 * m) / lam if lam > 0 else 0.0
    mc = scale * float(np.mean(vals * vals))
    exact = scale * continuum_mean_sq
    lhs = abs(mc - exact)
    rhs = (dual_norm(op, op.restrict(vals), tol=tol, preconditioner=preconditioner)
           if np.any(vals) else 0.0)
    return {"lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs)}


def fit_rate(points, model: str = "plain", k: int = 0, metric: str = "rel_eig_err") -> RateFit:
    """Least-squares fit of ``log(error)`` against ``log(3**-m)``.

    ``sqrt_m_corrected`` divides each error by ``sqrt(m)`` first. The slope is
    the exponent ``p`` in ``error ~ C * (3**-m)**p``.
    """
    if model not in ("plain", "sqrt_m_corrected"):
        raise ValueError(f"unknown model {model!r}")
    pts = sorted((int(m), float(e)) for m, e in points)
    ms = np.array([p[0] for p in pts], dtype=np.float64)
    err = np.array([p[1] for p in pts], dtype=np.float64)
    if np.unique(ms).size < 3:
        raise ValueError("rate fit needs at least 3 distinct m values")
    if np.any(~(err > 0)):
        raise ValueError("errors must be positive for a log fit")
    if model == "sqrt_m_corrected":
        err = err / np.sqrt(ms)
    x = -ms * math.log(3.0)
    y = np.log(err)
    design = np.column_stack([x, np.ones_like(x)])
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate design matrix")
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(k=k, model=model, slope=float(slope), intercept=float(intercept),
                   r_squared=r2, points=[(int(a), float(b)) for a, b in pts], metric=metric)
