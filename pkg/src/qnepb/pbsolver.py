"""Nonlinear Poisson-Boltzmann solver on MAC grids.

Solves the cell-centered problem

    -(div(c grad phi))_K + exp(phi_K) = r_K

for a positive face coefficient field c (a plain squared Debye length for
the standalone problem, or the stabilised combination used inside the
time stepper).  A damped Newton iteration is the primary path; a Picard
fixed point in the variable z = exp(phi) serves as fallback for pure
Neumann problems with positive right side, where its iterates provably
stay inside [min r, max r].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg, spsolve

from .discops import half_distance, log_mean
from .mesh import Array, FaceField, MacMesh, VarBC

logger = logging.getLogger(__name__)

# exp() overflow guard; the admissible potentials in practice are O(10^3).
_EXP_CAP = 700.0


class SolverError(RuntimeError):
    """Raised when the nonlinear solve fails; carries the last residual."""

    def __init__(self, message: str, residual: float = np.nan):
        super().__init__(message)
        self.residual = residual


@dataclass
class EllipticProblem:
    """One discrete Poisson-Boltzmann problem.

    ``coeff`` must be positive on every face entering the stencil.  With a
    pure Neumann boundary the right side must be strictly positive, which
    guarantees the bounds ln(min r) <= phi <= ln(max r).
    """

    mesh: MacMesh
    coeff: FaceField
    rhs: Array
    bc: VarBC
    newton_tol: float = 1e-10
    linear_rtol: float = 1e-12
    max_newton: int = 50
    max_picard: int = 200

    def __post_init__(self) -> None:
        self.rhs = np.asarray(self.rhs, dtype=float)
        for axis, (lo, hi) in enumerate(self.bc):
            for side in (lo, hi):
                if side.kind == "no_slip":
                    raise ValueError("no_slip is not a potential boundary kind")

    @property
    def pure_neumann(self) -> bool:
        return all(side.kind in ("neumann_zero", "extrapolate_zero_order")
                   for lo, hi in self.bc for side in (lo, hi))

    @property
    def residual_scale(self) -> float:
        return max(float(np.max(np.abs(self.rhs))), 1e-300)


@dataclass
class LinearSystem:
    """Sparse SPD stencil system A x = b (volume-scaled rows)."""

    matrix: sp.spmatrix
    rhs: Array
    rtol: float = 1e-12


def _exp(phi: Array) -> Array:
    return np.exp(np.minimum(phi, _EXP_CAP))


def _cg_compat(A, b, x0, M, rtol, maxiter):
    try:
        return cg(A, b, x0=x0, M=M, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # older scipy spells the relative tolerance "tol"
        return cg(A, b, x0=x0, M=M, tol=rtol, atol=0.0, maxiter=maxiter)


def solve_linear(system: LinearSystem) -> Array:
    """Solve an SPD stencil system to a relative residual <= rtol.

    Tridiagonal systems go through banded elimination; otherwise a
    diagonally preconditioned conjugate gradient is tried with a direct
    sparse factorisation as fallback.
    """
    A = system.matrix.tocsr()
    b = np.asarray(system.rhs, dtype=float)
    n = A.shape[0]
    coo = A.tocoo()
    bandwidth = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    if bandwidth <= 1:
        ab = np.zeros((3, n))
        ab[1] = A.diagonal()
        if bandwidth == 1:
            ab[0, 1:] = A.diagonal(1)
            ab[2, :-1] = A.diagonal(-1)
        x = solve_banded((1, 1), ab, b)
    else:
        diag = A.diagonal()
        if np.any(diag <= 0.0):
            raise SolverError("linear system has a non-positive diagonal")
        precond = sp.diags(1.0 / diag)
        x, info = _cg_compat(A, b, None, precond, system.rtol, maxiter=5000)
        if info != 0:
            x = spsolve(A, b)
    scale = max(float(np.linalg.norm(b)), 1e-300)
    res = float(np.linalg.norm(A @ x - b)) / scale
    if res > max(10.0 * system.rtol, 1e-11):
        x = spsolve(A, b)
        res = float(np.linalg.norm(A @ x - b)) / scale
        if res > max(10.0 * system.rtol, 1e-11):
            raise SolverError(f"linear solve stagnated at residual {res:.3e}",
                              residual=res)
    return x


class _Diffusion:
    """Assembled volume-scaled diffusion operator.

    apply(phi) returns  -|K| (div(c grad phi))_K - b_K  where b collects
    the dirichlet boundary-value contributions, so that the discrete
    equation reads  apply(phi) + |K| exp(phi) = |K| r.  In 1D without a
    periodic wrap the operator is kept in banded form for speed.
    """

    def __init__(self, mesh: MacMesh, coeff: FaceField, bc: VarBC):
        self.mesh = mesh
        self.n = mesh.n_cells
        shape = mesh.shape
        idx = np.arange(self.n).reshape(shape)
        rows: list[Array] = []
        cols: list[Array] = []
        vals: list[Array] = []
        diag = np.zeros(self.n)
        const = np.zeros(self.n)

        for axis in range(mesh.dim):
            c = np.asarray(coeff[axis], dtype=float)
            area = mesh.face_area[axis]
            dist = half_distance(mesh, axis)
            sel = mesh.interior_faces(axis)
            t = (c[sel] * area[sel] / dist[sel]).ravel()
            if np.any(t <= 0.0):
                raise ValueError("diffusion coefficient must be positive "
                                 "on interior faces")
            lo = [slice(None)] * mesh.dim
            hi = [slice(None)] * mesh.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            left = idx[tuple(lo)].ravel()
            right = idx[tuple(hi)].ravel()
            np.add.at(diag, left, t)
            np.add.at(diag, right, t)
            rows.append(left)
            cols.append(right)
            vals.append(-t)
            rows.append(right)
            cols.append(left)
            vals.append(-t)

            lo_bc, hi_bc = bc[axis]
            if lo_bc.kind == "periodic":
                w = mesh.widths[axis]
                wrap_dist = 0.5 * (w[0] + w[-1])
                c_wrap = np.take(c, 0, axis=axis)
                a_wrap = np.take(area, 0, axis=axis)
                t_wrap = np.atleast_1d(c_wrap * a_wrap / wrap_dist).ravel()
                first = np.atleast_1d(np.take(idx, 0, axis=axis)).ravel()
                last = np.atleast_1d(np.take(idx, -1, axis=axis)).ravel()
                np.add.at(diag, first, t_wrap)
                np.add.at(diag, last, t_wrap)
                rows.append(first)
                cols.append(last)
                vals.append(-t_wrap)
                rows.append(last)
                cols.append(first)
                vals.append(-t_wrap)
            else:
                for side, side_bc in enumerate((lo_bc, hi_bc)):
                    if side_bc.kind != "dirichlet":
                        continue
                    target = mesh.boundary_faces(axis, side)
                    t_ext = np.atleast_1d(
                        c[target] * area[target] / dist[target]).ravel()
                    cells = np.atleast_1d(
                        np.take(idx, 0 if side == 0 else -1, axis=axis)).ravel()
                    np.add.at(diag, cells, t_ext)
                    np.add.at(const, cells, t_ext * side_bc.value)

        self.const = const
        self._banded = mesh.dim == 1 and all(
            bc[a][0].kind != "periodic" for a in range(mesh.dim))
        if self._banded:
            lower = np.zeros(self.n)
            upper = np.zeros(self.n)
            for r, c_, v in zip(rows, cols, vals):
                for ri, ci, vi in zip(r, c_, v):
                    if ci == ri + 1:
                        upper[ri] = vi
                    else:
                        lower[ci] = vi
            self._diag = diag
            self._lower = lower  # entry i couples cell i+1 -> i is lower[i]
            self._upper = upper
            self.matrix = None
        else:
            row = np.concatenate(rows) if rows else np.empty(0, dtype=int)
            col = np.concatenate(cols) if cols else np.empty(0, dtype=int)
            val = np.concatenate(vals) if vals else np.empty(0)
            A = sp.coo_matrix(
                (np.concatenate([val, diag]),
                 (np.concatenate([row, np.arange(self.n)]),
                  np.concatenate([col, np.arange(self.n)]))),
                shape=(self.n, self.n))
            self.matrix = A.tocsr()

    def apply(self, phi_flat: Array) -> Array:
        if self._banded:
            out = self._diag * phi_flat
            out[:-1] += self._upper[:-1] * phi_flat[1:]
            out[1:] += self._lower[:-1] * phi_flat[:-1]
            return out - self.const
        return self.matrix @ phi_flat - self.const

    def magnitude(self, phi_flat: Array) -> Array:
        """Per-cell sum of the absolute values of the terms entering
        apply(); bounds the rounding error of a residual evaluation."""
        a = np.abs(phi_flat)
        if self._banded:
            out = self._diag * a
            out[:-1] += np.abs(self._upper[:-1]) * a[1:]
            out[1:] += np.abs(self._lower[:-1]) * a[:-1]
            return out + np.abs(self.const)
        return np.abs(self.matrix) @ a + np.abs(self.const)

    def solve_shifted(self, shift: Array, rhs: Array, rtol: float) -> Array:
        """Solve (L + diag(shift)) x = rhs for positive shift."""
        if self._banded:
            ab = np.zeros((3, self.n))
            ab[0, 1:] = self._upper[:-1]
            ab[1] = self._diag + shift
            ab[2, :-1] = self._lower[:-1]
            return solve_banded((1, 1), ab, rhs)
        A = self.matrix + sp.diags(shift)
        return solve_linear(LinearSystem(matrix=A, rhs=rhs, rtol=rtol))


def _residual(problem: EllipticProblem, diff: _Diffusion, phi_flat: Array,
              r_flat: Array, vol_flat: Array) -> Array:
    """PDE-form residual -(div c grad phi) + exp(phi) - r, per cell."""
    return diff.apply(phi_flat) / vol_flat + _exp(phi_flat) - r_flat


def _default_init(problem: EllipticProblem) -> Array:
    r = problem.rhs
    pos = r[r > 0.0]
    if pos.size == 0:
        return np.zeros(problem.mesh.shape)
    return np.log(np.clip(r, pos.min(), pos.max()))


def newton_step(phi: Array, problem: EllipticProblem) -> tuple[Array, float]:
    """One damped Newton step; returns the new iterate and its residual
    max-norm (PDE form, unscaled)."""
    mesh = problem.mesh
    diff = _Diffusion(mesh, problem.coeff, problem.bc)
    return _newton_step_assembled(phi, problem, diff)


def _newton_step_assembled(phi: Array, problem: EllipticProblem,
                           diff: _Diffusion) -> tuple[Array, float]:
    mesh = problem.mesh
    vol = mesh.cell_vol.ravel()
    r = problem.rhs.ravel()
    phi_flat = np.asarray(phi, dtype=float).ravel()
    res = _residual(problem, diff, phi_flat, r, vol)
    res_norm = float(np.max(np.abs(res)))
    shift = vol * _exp(phi_flat)
    delta = diff.solve_shifted(shift, -res * vol, problem.linear_rtol)
    lam = 1.0
    best = phi_flat
    best_norm = res_norm
    for _ in range(40):
        cand = phi_flat + lam * delta
        cand_res = _residual(problem, diff, cand, r, vol)
        cand_norm = float(np.max(np.abs(cand_res)))
        if np.isfinite(cand_norm) and cand_norm < res_norm:
            best = cand
            best_norm = cand_norm
            break
        lam *= 0.5
    return best.reshape(mesh.shape), best_norm


def picard_solve(problem: EllipticProblem) -> Array:
    """Fixed-point solve in z = exp(phi) for pure Neumann problems.

    Each sweep solves the linear M-matrix system
        -(div((c / z_sigma) grad u))_K + u_K = r_K
    with z_sigma the logarithmic interface mean of the previous iterate;
    the iterates remain inside [min r, max r].
    """
    if not problem.pure_neumann:
        raise SolverError("picard fallback requires pure Neumann boundaries")
    r = problem.rhs
    if np.any(r <= 0.0):
        raise SolverError("picard fallback requires a positive right side")
    mesh = problem.mesh
    vol = mesh.cell_vol.ravel()
    lo, hi = float(np.min(r)), float(np.max(r))
    v = np.clip(r, lo, hi).copy()
    rtol = problem.newton_tol
    for _ in range(problem.max_picard):
        scaled = FaceField(tuple(
            np.asarray(problem.coeff[a], dtype=float) / _interface_mean(v, mesh, a)
            for a in range(mesh.dim)))
        diff = _Diffusion(mesh, scaled, problem.bc)
        u = diff.solve_shifted(vol, vol * r.ravel(), problem.linear_rtol)
        u = u.reshape(mesh.shape)
        change = float(np.max(np.abs(u - v) / np.abs(v)))
        v = u
        if change <= rtol:
            return np.log(v)
    raise SolverError(
        f"picard iteration stagnated after {problem.max_picard} sweeps "
        f"(last relative change {change:.3e})", residual=change)


def _interface_mean(v: Array, mesh: MacMesh, axis: int) -> Array:
    """Logarithmic interface mean of a positive cell field on one face
    family, with adjacent-cell values on external faces."""
    face = np.empty(mesh.face_shape(axis))
    lo = [slice(None)] * mesh.dim
    hi = [slice(None)] * mesh.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    face[mesh.interior_faces(axis)] = log_mean(v[tuple(lo)], v[tuple(hi)])
    face[mesh.boundary_faces(axis, 0)] = np.take(v, 0, axis=axis)
    face[mesh.boundary_faces(axis, 1)] = np.take(v, -1, axis=axis)
    return face


def _roundoff_floor(diff: _Diffusion, phi_flat: Array, r_flat: Array,
                    vol_flat: Array) -> float:
    """Smallest residual max-norm distinguishable from rounding noise
    when the residual is evaluated at this iterate (large Dirichlet data
    can put this above any fixed absolute tolerance)."""
    scale = (diff.magnitude(phi_flat) / vol_flat + _exp(phi_flat)
             + np.abs(r_flat))
    return 8.0 * np.finfo(float).eps * float(np.max(scale))


def solve_pb(problem: EllipticProblem, phi_init: Array | None = None) -> Array:
    """Solve the discrete Poisson-Boltzmann problem.

    Newton with backtracking is run from ``phi_init`` (defaults to the log
    of the clipped right side); on failure the Picard fallback is tried
    where applicable.  The returned potential satisfies the equation to a
    max-norm residual of newton_tol * max|r|, or to the rounding floor of
    the residual evaluation when that is the larger of the two.
    """
    mesh = problem.mesh
    if problem.pure_neumann and np.any(problem.rhs <= 0.0):
        raise SolverError("Neumann Poisson-Boltzmann problem requires a "
                          "strictly positive right side")
    diff = _Diffusion(mesh, problem.coeff, problem.bc)
    vol = mesh.cell_vol.ravel()
    r = problem.rhs.ravel()
    atol = problem.newton_tol * problem.residual_scale

    phi = _default_init(problem) if phi_init is None else \
        np.array(phi_init, dtype=float, copy=True)
    res_norm = float(np.max(np.abs(_residual(problem, diff, phi.ravel(),
                                             r, vol))))
    for _ in range(problem.max_newton):
        if res_norm <= atol:
            return phi
        phi, res_norm = _newton_step_assembled(phi, problem, diff)
    if res_norm <= max(atol, _roundoff_floor(diff, phi.ravel(), r, vol)):
        return phi

    if problem.pure_neumann:
        logger.warning("newton stalled at residual %.3e, trying picard",
                       res_norm)
        phi = picard_solve(problem)
        res_norm = float(np.max(np.abs(_residual(problem, diff, phi.ravel(),
                                                 r, vol))))
        # Picard controls the increment, not the residual; polish by Newton.
        for _ in range(problem.max_newton):
            if res_norm <= atol:
                return phi
            phi, res_norm = _newton_step_assembled(phi, problem, diff)
        if res_norm <= max(atol, _roundoff_floor(diff, phi.ravel(), r, vol)):
            return phi
    raise SolverError(f"Poisson-Boltzmann solve failed, residual {res_norm:.3e}"
                      f" (tolerance {atol:.3e})", residual=res_norm)
