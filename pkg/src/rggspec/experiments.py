"""Batch drivers behind the command-line interface.

Work is split into independent ``(m, trial)`` units seeded with
``split_seed(master_seed, m, trial)``. Units may run in worker processes; the
results are sorted by ``(m, trial)`` before any aggregation, so the output
never depends on completion order or worker count.
"""

from __future__ import annotations

import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis, continuum, eigen, geometry, homogenize, operators
from .config import ExperimentConfig
from .seeding import split_seed

log = logging.getLogger(__name__)


def worker_count() -> int:
    env = os.environ.get("SPL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SPL_THREADS=%r", env)
    return os.cpu_count() or 1


def _limited(func, arg):
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        return func(arg)


def parallel_map(func, items, workers=None):
    """``[func(x) for x in items]``, possibly across processes, in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(_limited, [func] * len(items), items))


def _sample_cluster(dim, alpha, m, seed):
    cloud = geometry.sample_poisson(dim, 3.0 ** m, alpha, seed)
    return cloud, geometry.extract_cluster(geometry.build_graph(cloud))


# converge

def _converge_unit(args):
    cfg, m, trial = args
    seed = split_seed(cfg.master_seed, m, trial)
    out = {"m": m, "trial": trial, "seed": seed, "pairs": [], "errors": []}
    try:
        cloud, cl = _sample_cluster(cfg.dim, cfg.alpha, m, seed)
        op = operators.assemble(cl)
        # shape of the spectrum does not depend on sigma_bar
        shape = continuum.continuum_spectrum(cfg.dim, 1.0, cfg.k_max)
        k_need = min(shape.class_members(cfg.k_max)[-1], op.interior_count)
        eig = eigen.smallest_eigenpairs(op, k_need, tol=cfg.tol_eig)
        dirs = np.eye(cfg.dim)
        u = [homogenize.affine_harmonic(cl, e, tol=cfg.tol_solver, op=op) for e in dirs]
        sig = [homogenize.dirichlet_energy(cl, ui) for ui in u]
    except Exception as exc:  # noqa: BLE001 - per-unit failures are counted
        log.warning("m=%d trial=%d failed: %s", m, trial, exc)
        out["errors"].append(f"m={m} trial={trial}: {exc}")
        return out
    out.update(n_points=len(cloud), n_cluster=cl.size, n_interior=op.interior_count,
               sigma_dirs=sig, eigenvalues=eig.values.tolist())
    correctors = None
    for k in range(1, cfg.k_max + 1):
        try:
            ap = analysis.align_and_normalize(eig, k, shape, cl, m)
            pe = analysis.pair_errors(ap.phi_m, ap.phi_0, eig, shape, cl, m, k, trial, seed,
                                      normalization_inner=ap.inner, margin=cfg.bulk_margin)
        except Exception as exc:  # noqa: BLE001
            log.warning("m=%d trial=%d k=%d failed: %s", m, trial, k, exc)
            out["errors"].append(f"m={m} trial={trial} k={k}: {exc}")
            continue
        rec = pe.as_dict()
        if cfg.two_scale and k == 1:
            if correctors is None:
                correctors = []
                for e, ui in zip(dirs, u):
                    phi = ui - cl.points @ e
                    correctors.append(homogenize.CorrectorField(cl, tuple(e),
                                                                phi - phi.mean()))
            tsr = homogenize.two_scale_residual(cl, ap.phi_m.values, shape.evaluator(1),
                                                correctors, m, margin=cfg.bulk_margin)
            rec.update(tsr)
        out["pairs"].append(rec)
    return out


def _sigma_bar(cfg, units):
    if cfg.sigma_mode == "fixed":
        return float(cfg.sigma_value), {"mode": "fixed", "value": float(cfg.sigma_value)}
    m_top = max(u["m"] for u in units if "sigma_dirs" in u) if any(
        "sigma_dirs" in u for u in units) else None
    if m_top is None:
        raise RuntimeError("no successful trial to estimate sigma_bar from")
    per_dir = np.array([u["sigma_dirs"] for u in units if u["m"] == m_top and "sigma_dirs" in u])
    n = per_dir.shape[0]
    means = per_dir.mean(axis=0)
    stderr = per_dir.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(means)
    value = float(means.mean())
    info = {"mode": "estimate", "value": value, "m": m_top, "box_side": 3.0 ** m_top,
            "trials": n, "per_direction": means.tolist(), "stderr": stderr.tolist()}
    return value, info


def run_converge(cfg: ExperimentConfig, workers=None) -> dict:
    units = parallel_map(_converge_unit,
                         [(cfg, m, t) for m in cfg.m_list for t in range(cfg.trials)], workers)
    units.sort(key=lambda u: (u["m"], u["trial"]))
    failures = [e for u in units for e in u["errors"]]
    sigma, sigma_info = _sigma_bar(cfg, units)
    spec = continuum.continuum_spectrum(cfg.dim, sigma, cfg.k_max)
    records = []
    for u in units:
        for rec in u["pairs"]:
            m, k = rec["m"], rec["k"]
            if not continuum.admissible(m, k, spec, cfg.c_admissibility):
                continue
            lam_c = spec.lam(k)
            rec = dict(rec)
            rec.update(dim=cfg.dim, alpha=cfg.alpha, n_points=u["n_points"],
                       n_cluster=u["n_cluster"], n_interior=u["n_interior"],
                       lambda_cont=lam_c, gap=continuum.spectral_gap(spec, k),
                       abs_eig_err=abs(rec["lambda_scaled"] - lam_c),
                       rel_eig_err=abs(rec["lambda_scaled"] - lam_c) / lam_c,
                       l2_vec_err_paper=rec["l2_vec_err"] / lam_c,
                       sigma_hat=float(np.mean(u["sigma_dirs"])))
            records.append(rec)
    fits = rate_fits(records)
    return {"config": cfg.as_dict(), "sigma_bar": sigma_info, "records": records,
            "fits": fits, "concentration": [], "failures": failures,
            "failure_count": len(failures)}


def rate_fits(records, metrics=("rel_eig_err", "l2_vec_err")) -> list:
    by = defaultdict(lambda: defaultdict(list))
    for r in records:
        for metric in metrics:
            by[(metric, r["k"])][r["m"]].append(r[metric])
    fits = []
    for (metric, k), per_m in sorted(by.items()):
        pts = [(m, float(np.median(v))) for m, v in sorted(per_m.items())]
        if len(pts) < 3 or any(not e > 0 for _, e in pts):
            continue
        for model in ("plain", "sqrt_m_corrected"):
            fits.append(analysis.fit_rate(pts, model, k=k, metric=metric).as_dict())
    return fits


def medians(records, metric, key=("m", "k")) -> dict:
    by = defaultdict(list)
    for r in records:
        by[tuple(r[x] for x in key)].append(r[metric])
    return {kk: float(np.median(v)) for kk, v in sorted(by.items())}


# probe / homogenize / spectrum / mc-check

def run_probe(cfg: ExperimentConfig) -> list:
    rows = geometry.percolation_probe(cfg.dim, cfg.alpha_grid, cfg.probe_side, cfg.trials,
                                      cfg.master_seed)
    return [{"alpha": a, "spanning_fraction": f, "side": cfg.probe_side, "trials": cfg.trials}
            for a, f in rows]


def run_homogenize(cfg: ExperimentConfig) -> list:
    out = []
    for d in cfg.directions:
        e = np.asarray(d, dtype=np.float64)
        e = e / np.linalg.norm(e)
        est = homogenize.estimate_sigma(cfg.dim, cfg.alpha, cfg.homog_box_side, e, cfg.trials,
                                        cfg.master_seed, tol=cfg.tol_solver)
        out.append({"direction": " ".join(repr(float(v)) for v in est.direction),
                    "sigma_hat": est.sigma_hat, "sigma_stderr": est.stderr,
                    "box_side": est.box_side, "alpha": est.alpha, "trials": est.trials})
    return out


def run_spectrum(cfg: ExperimentConfig, m: int | None = None, seed: int | None = None) -> dict:
    m = cfg.m_list[0] if m is None else m
    seed = split_seed(cfg.master_seed, m, 0) if seed is None else seed
    cloud, cl = _sample_cluster(cfg.dim, cfg.alpha, m, seed)
    op = operators.assemble(cl)
    shape = continuum.continuum_spectrum(cfg.dim, 1.0, cfg.k_max)
    k_need = min(shape.class_members(cfg.k_max)[-1], op.interior_count)
    eig = eigen.smallest_eigenpairs(op, k_need, tol=cfg.tol_eig)
    if cfg.sigma_mode == "fixed":
        sigma = float(cfg.sigma_value)
    else:
        sigma = float(np.mean([homogenize.sigma_from_cluster(cl, e, tol=cfg.tol_solver)
                               for e in np.eye(cfg.dim)]))
    spec = continuum.continuum_spectrum(cfg.dim, sigma, cfg.k_max)
    scaled = (3.0 ** (2 * m)) * eig.values[:cfg.k_max]
    return {"m": m, "seed": seed, "n_points": len(cloud), "n_cluster": cl.size,
            "n_interior": op.interior_count, "sigma_bar": sigma,
            "eigenvalues": eig.values.tolist(), "residuals": eig.residuals.tolist(),
            "lambda_scaled": scaled.tolist(),
            "lambda_cont": [spec.lam(k) for k in range(1, len(scaled) + 1)],
            "continuum": [{"lambda": e.lam, "multi_index": list(e.multi_index),
                           "class_id": e.class_id} for e in spec.entries]}


def _mc_unit(args):
    cfg, multi_index, m, trial = args
    try:
        return analysis.concentration_sample(multi_index, cfg.dim, cfg.alpha, m,
                                             split_seed(cfg.master_seed, m, trial))
    except Exception as exc:  # noqa: BLE001
        log.warning("mc m=%d trial=%d failed: %s", m, trial, exc)
        return None


def run_mc_check(cfg: ExperimentConfig, workers=None) -> list:
    """Concentration records for every ``m`` in the config, mode ``mc_k``."""
    if cfg.sigma_mode == "fixed":
        sigma = float(cfg.sigma_value)
    else:
        sigma = 1.0
        log.info("mc-check uses sigma_bar = 1 unless sigma_mode = 'fixed'")
    spec = continuum.continuum_spectrum(cfg.dim, sigma, cfg.mc_k)
    entry = spec.entry(cfg.mc_k)
    out = []
    for m in cfg.m_list:
        samples = parallel_map(_mc_unit, [(cfg, entry.multi_index, m, t)
                                          for t in range(cfg.trials)], workers)
        rec = analysis.concentration_check(entry, cfg.dim, cfg.alpha, m, cfg.trials,
                                           cfg.master_seed, samples=samples)
        rec.k = cfg.mc_k
        out.append(rec)
    return out
