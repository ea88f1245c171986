"""Newton solver for the coupled space-time system.

Convergence is measured in the 2-norm of the row-scaled residual (mass rows
divided by pore volume, constitutive rows by face measure), so tolerances
mean the same thing across mesh sizes. Updates are damped so no saturation
moves more than a fixed amount per iteration, then saturations are clamped
to [0, 1].
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .errors import NewtonError, SingularMatrixError

logger = logging.getLogger(__name__)

MAX_DS = 0.2


@dataclass
class NewtonStats:
    iterations: int = 0
    converged: bool = False
    residual_history: list[float] = field(default_factory=list)
    t_assembly: float = 0.0
    t_linear: float = 0.0


def _gmres(op, rhs, rtol, restart, maxiter, M):
    try:
        return spla.gmres(op, rhs, rtol=rtol, atol=0.0, restart=restart,
                          maxiter=maxiter, M=M)
    except TypeError:  # older scipy spells the relative tolerance "tol"
        return spla.gmres(op, rhs, tol=rtol, atol=0.0, restart=restart,
                          maxiter=maxiter, M=M)


def linear_solve(mat, rhs, method: str = "direct"):
    """Solve one Newton correction system.

    direct: sparse LU. gmres: restarted GMRES with an incomplete-LU
    preconditioner (drop tolerance 1e-6, fill factor 30; weaker settings
    need hundreds of iterations on the larger meshes), falling back to
    sparse LU when the incomplete factorization breaks down or the
    iteration stagnates; degenerate mobility states produce zero pivots
    that ILU dropping cannot reorder around.
    """
    mat = mat.tocsc()
    if method == "direct":
        try:
            lu = spla.splu(mat)
        except RuntimeError as exc:
            if "singular" in str(exc).lower():
                raise SingularMatrixError(f"linear system is singular: {exc}") from exc
            raise
        return lu.solve(rhs)
    if method == "gmres":
        try:
            ilu = spla.spilu(mat, drop_tol=1e-6, fill_factor=30)
        except RuntimeError:
            logger.debug("ILU breakdown, using a complete factorization")
            return linear_solve(mat, rhs, method="direct")
        M = spla.LinearOperator(mat.shape, ilu.solve)
        x, info = _gmres(mat, rhs, rtol=1e-9, restart=50, maxiter=40, M=M)
        if info != 0:
            logger.debug("GMRES stagnated (info=%s), using a complete factorization",
                         info)
            return linear_solve(mat, rhs, method="direct")
        return x
    raise ValueError(f"unknown linear solver {method!r}")


def correction_solve(plan: assembly.AssemblyPlan, jac, r, method: str = "direct"):
    """Solve jac @ dx = -r with the flux unknowns eliminated first.

    Every flux constitutive row has a unit coefficient on its own unknown,
    so the flux block is diagonal and those unknowns condense out exactly.
    The remaining pressure/saturation system is a third the size and has
    the plain finite-volume stencil structure incomplete factorizations
    handle well. Rows are scaled by plan.row_scale before the inner solve.
    Falls back to the monolithic system if the flux block is not diagonal.
    """
    n2 = 2 * plan.n_el
    scale = plan.row_scale
    jac = jac.tocsr()
    flux_block = jac[n2:, n2:]
    d = flux_block.diagonal()
    if flux_block.nnz != np.count_nonzero(d) or np.any(d == 0.0):
        return linear_solve(sp.diags(scale) @ jac, -(r * scale), method=method)
    back = sp.diags(1.0 / d) @ jac[n2:, :n2]
    coupling = jac[:n2, n2:]
    reduced = jac[:n2, :n2] - coupling @ back
    ru = r[n2:] / d
    rhs = -r[:n2] + coupling @ ru
    sx = scale[:n2]
    dx_el = linear_solve(sp.diags(sx) @ reduced, sx * rhs, method=method)
    dx_flux = -ru - back @ dx_el
    return np.concatenate([dx_el, dx_flux])


def newton_solve(
    plan: assembly.AssemblyPlan,
    x0: np.ndarray,
    tol_rel: float = 1e-6,
    tol_abs: float = 1e-9,
    max_iter: int = 20,
    max_ds: float = MAX_DS,
    linear_solver: str = "direct",
):
    """Damped Newton from x0; returns (x, NewtonStats).

    A state that already satisfies the tolerance costs one residual
    evaluation and reports zero iterations. Raises NewtonError with the
    residual history when max_iter is exhausted.
    """
    n = plan.n_el
    scale = plan.row_scale
    stats = NewtonStats()
    x = x0.copy()

    t0 = time.perf_counter()
    r = assembly.assemble_residual(plan, x)
    stats.t_assembly += time.perf_counter() - t0
    nrm0 = float(np.linalg.norm(r * scale))
    stats.residual_history.append(nrm0)
    if nrm0 <= tol_abs:
        stats.converged = True
        return x, stats

    for it in range(1, max_iter + 1):
        t0 = time.perf_counter()
        r, jac = assembly.assemble_jacobian(plan, x)
        stats.t_assembly += time.perf_counter() - t0

        t0 = time.perf_counter()
        dx = correction_solve(plan, jac, r, method=linear_solver)
        stats.t_linear += time.perf_counter() - t0

        ds_max = float(np.max(np.abs(dx[n:2 * n]))) if n else 0.0
        fac = 1.0 if ds_max <= max_ds else max_ds / ds_max

        # backtrack only when the step makes the scaled norm worse; if every
        # halving does (the capillary curve has a sharp regularization kink),
        # take the least-bad one rather than stalling
        nrm_prev = stats.residual_history[-1]
        best = None
        for cut in range(4):
            t0 = time.perf_counter()
            x_try = x + (fac / 2**cut) * dx
            np.clip(x_try[n:2 * n], 0.0, 1.0, out=x_try[n:2 * n])
            r_try = assembly.assemble_residual(plan, x_try)
            stats.t_assembly += time.perf_counter() - t0
            nrm_try = float(np.linalg.norm(r_try * scale))
            if best is None or nrm_try < best[0]:
                best = (nrm_try, x_try, r_try)
            if nrm_try <= nrm_prev:
                break
        nrm, x, r = best
        stats.residual_history.append(nrm)
        stats.iterations = it
        if nrm <= tol_rel * nrm0 + tol_abs:
            stats.converged = True
            return x, stats

    raise NewtonError(
        f"Newton did not converge in {max_iter} iterations "
        f"(residual {stats.residual_history[-1]:.3e}, started at {nrm0:.3e})",
        residual_history=stats.residual_history,
    )
