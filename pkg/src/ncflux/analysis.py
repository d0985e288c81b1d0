"""Convergence studies: mesh hierarchies, error norms, order fitting.

A study runs one manufactured problem over a hierarchy of meshes, solves
on each level, and records four L2 errors per level: the solution error,
the raw flux error, the distance of the corrected flux to the canonical
facet-flux interpolant of the exact flux (the supercloseness quantity),
and the error of the averaged, recovered flux. Orders are least-squares
slopes in log-log, fitted after dropping the preasymptotic levels.

Box hierarchies refine by interval halving and then randomly perturb the
gridlines of every level after the first, so the superconvergence is
exercised on meshes with no special structure. Triangular hierarchies
use the uniformly refined same-diagonal pattern that the edge-averaging
theory requires; perturbation does not apply there.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import assemble, reconstruct_field
from .cr import (CRField, assemble_cr, cell_means, corrected_flux_cr,
                 edge_midpoint_average, rt_interpolate_tri)
from .elements import cell_quadrature, tri_quadrature
from .mesh import (TensorMesh, TriMesh, build_uniform_parallel, perturb,
                   refine_midpoint)
from .problems import Problem, REGISTRY
from .recovery import corrected_flux, midpoint_average, rt_interpolate
from .sparse_solve import DENSE_LIMIT, SolverError, dense_lu, solve

COLUMNS = ("err_u", "err_flux_raw", "err_superclose", "err_recovered")

_AUTO_SKIP = {"ncrt2d": 3, "ncrt3d": 2, "cr": 0}


def l2_error(mesh, exact, approx=None) -> float:
    """L2 norm of exact - approx over the mesh (of exact when approx is None).

    exact is a callable on quadrature points; approx is a discrete field
    (anything with eval_at or values taking the same points) or a plain
    callable. Scalar and vector integrands are both accepted.
    """
    if isinstance(mesh, TensorMesh):
        pts, wts = cell_quadrature(mesh)
    elif isinstance(mesh, TriMesh):
        pts, wts = tri_quadrature(mesh)
    else:
        raise TypeError(f"unsupported mesh type {type(mesh).__name__}")
    vals = np.asarray(exact(pts), dtype=float)
    if approx is not None:
        vals = vals - _eval_discrete(approx, pts)
    sq = vals ** 2 if vals.ndim == wts.ndim else (vals ** 2).sum(axis=-1)
    return float(np.sqrt(np.sum(wts * sq)))


def _eval_discrete(obj, pts):
    if hasattr(obj, "eval_at"):
        return obj.eval_at(pts)
    if hasattr(obj, "values") and callable(obj.values):
        return obj.values(pts)
    return obj(pts)


def fit_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.shape != err.shape or h.size < 2:
        raise ValueError("need two or more (h, err) pairs")
    if np.any(h <= 0) or np.any(err <= 0):
        raise ValueError("h and err must be positive")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass(frozen=True)
class LevelRecord:
    """Errors on one level of a study."""

    ne: int
    h: float
    err_u: float
    err_flux_raw: float
    err_superclose: float
    err_recovered: float


@dataclass(frozen=True)
class StudyConfig:
    """Everything a convergence study depends on.

    element is "ncrt2d" or "ncrt3d" (box meshes, facet-mean dofs) or
    "cr" (triangles). skip counts the leading levels excluded from the
    order fit; None picks the element default. perturb is the gridline
    perturbation fraction for box hierarchies, ignored with a warning on
    triangular ones. cr_initial is the per-side cell count of the first
    triangular level. custom supplies the Problem when problem="custom".
    """

    problem: str = "p1"
    element: str = "ncrt2d"
    levels: int = 7
    perturb: float = 0.2
    seed: int = 0
    skip: Optional[int] = None
    solver: str = "bicgstab"
    tol: float = 1e-10
    cr_initial: int = 8
    custom: Optional[Problem] = None


@dataclass
class StudyResult:
    config: StudyConfig
    records: list
    orders: dict
    solver_reports: list


def _resolve_problem(config: StudyConfig) -> Problem:
    if config.problem == "custom":
        if config.custom is None:
            raise ValueError('problem "custom" requires a Problem instance')
        return config.custom
    factory = REGISTRY.get(config.problem)
    if factory is None:
        known = ", ".join(sorted(REGISTRY))
        raise ValueError(f"unknown problem {config.problem!r} "
                         f"(known: {known}, custom)")
    return factory()


def _check_config(config: StudyConfig, problem: Problem) -> int:
    need_dim = {"ncrt2d": 2, "ncrt3d": 3, "cr": 2}.get(config.element)
    if need_dim is None:
        raise ValueError(f"unknown element {config.element!r}")
    if problem.dim != need_dim:
        raise ValueError(f"element {config.element} needs a {need_dim}d "
                         f"problem, got {problem.dim}d")
    if config.levels < 1:
        raise ValueError("need at least one level")
    skip = _AUTO_SKIP[config.element] if config.skip is None else config.skip
    if skip < 0:
        raise ValueError("skip must be nonnegative")
    return skip


def _solve_system(matrix, rhs, config: StudyConfig):
    if config.solver == "dense":
        return dense_lu(matrix, rhs)
    try:
        return solve(matrix, rhs, method=config.solver, tol=config.tol)
    except SolverError:
        if matrix.shape[0] <= DENSE_LIMIT:
            return dense_lu(matrix, rhs)
        raise


def _tensor_meshes(problem: Problem, config: StudyConfig):
    if problem.initial_gridlines is None:
        raise ValueError(f"problem {problem.name!r} has no initial gridlines; "
                         "box studies need them")
    seeds = np.random.SeedSequence(config.seed).generate_state(config.levels)
    mesh = TensorMesh(problem.initial_gridlines)
    yield mesh
    for k in range(1, config.levels):
        mesh = refine_midpoint(mesh)
        if config.perturb > 0.0:
            mesh = perturb(mesh, config.perturb, int(seeds[k]))
        yield mesh


def _exact_flux(problem: Problem):
    def flux(pts):
        return problem.a(pts)[..., None] * problem.grad_u(pts)
    return flux


def _tensor_level(mesh: TensorMesh, problem: Problem,
                  config: StudyConfig):
    system = assemble(mesh, problem)
    x, report = _solve_system(system.matrix, system.rhs, config)
    field = reconstruct_field(mesh, system.full_dofs(x))
    aflux = _exact_flux(problem)

    sigma = corrected_flux(field, problem)
    interp = rt_interpolate(mesh, aflux)
    recovered = midpoint_average(sigma)

    def raw(pts):
        return problem.a(pts)[..., None] * field.gradients(pts)

    record = LevelRecord(
        ne=mesh.ne, h=mesh.h,
        err_u=l2_error(mesh, problem.u, field),
        err_flux_raw=l2_error(mesh, aflux, raw),
        err_superclose=l2_error(mesh, (sigma - interp).eval_at),
        err_recovered=l2_error(mesh, aflux, recovered))
    return record, report


def _cr_level(mesh: TriMesh, problem: Problem, config: StudyConfig):
    system = assemble_cr(mesh, problem)
    x, report = _solve_system(system.matrix, system.rhs, config)
    field = CRField(mesh, system.full_dofs(x))
    aflux = _exact_flux(problem)

    sigma = corrected_flux_cr(field, problem)
    interp = rt_interpolate_tri(mesh, aflux)
    grad = field.gradients()
    recovered = edge_midpoint_average(
        mesh, cell_means(mesh, problem.a)[:, None] * grad)

    def raw(pts):
        return problem.a(pts)[..., None] * grad[:, None, :]

    def superclose(pts):
        return sigma.eval_at(pts) - interp.eval_at(pts)

    record = LevelRecord(
        ne=mesh.nt, h=mesh.h,
        err_u=l2_error(mesh, problem.u, field),
        err_flux_raw=l2_error(mesh, aflux, raw),
        err_superclose=l2_error(mesh, superclose),
        err_recovered=l2_error(mesh, aflux, recovered))
    return record, report


def run_study(config: StudyConfig,
              progress: Optional[Callable] = None) -> StudyResult:
    """Run a convergence study and fit orders over the asymptotic levels."""
    problem = _resolve_problem(config)
    skip = _check_config(config, problem)

    records, reports = [], []
    if config.element == "cr":
        if config.perturb > 0.0:
            warnings.warn("gridline perturbation does not apply to "
                          "triangular studies; ignoring it", stacklevel=2)
        for k in range(config.levels):
            n = config.cr_initial * 2 ** k
            mesh = build_uniform_parallel(n, n)
            record, report = _cr_level(mesh, problem, config)
            records.append(record)
            reports.append(report)
            if progress is not None:
                progress(record)
    else:
        for mesh in _tensor_meshes(problem, config):
            record, report = _tensor_level(mesh, problem, config)
            records.append(record)
            reports.append(report)
            if progress is not None:
                progress(record)

    orders = {}
    if len(records) - skip >= 2:
        h = np.array([r.h for r in records[skip:]])
        for col in COLUMNS:
            err = np.array([getattr(r, col) for r in records[skip:]])
            orders[col] = fit_order(h, err)
    return StudyResult(config=config, records=records, orders=orders,
                       solver_reports=reports)


def emit_report(result: StudyResult, format: str = "csv") -> str:
    """Render a study as CSV rows or a structured JSON document.

    Floats are rendered with repr, so equal studies produce identical
    bytes.
    """
    if format == "csv":
        lines = ["ne,h," + ",".join(COLUMNS)]
        for r in result.records:
            lines.append(",".join(
                [str(r.ne), repr(r.h)]
                + [repr(getattr(r, col)) for col in COLUMNS]))
        return "\n".join(lines) + "\n"
    if format == "structured":
        cfg = result.config
        doc = {
            "config": {
                "problem": cfg.problem,
                "element": cfg.element,
                "levels": cfg.levels,
                "perturb": cfg.perturb,
                "seed": cfg.seed,
                "skip": cfg.skip,
                "solver": cfg.solver,
                "tol": cfg.tol,
                "cr_initial": cfg.cr_initial,
            },
            "levels": [
                {"ne": r.ne, "h": r.h,
                 **{col: getattr(r, col) for col in COLUMNS}}
                for r in result.records
            ],
            "orders": {col: result.orders.get(col)
                       for col in COLUMNS if col in result.orders},
            "solver": [
                {"method": rep.method, "converged": rep.converged,
                 "iterations": rep.iterations, "residual": rep.residual,
                 "dim": rep.dim}
                for rep in result.solver_reports
            ],
        }
        return json.dumps(doc, indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}")
