"""Finite-volume solvers for the pressureless Euler-Poisson-Boltzmann
system on staggered grids: a semi-implicit scheme uniformly stable in
the scaled Debye length, its quasineutral-limit companion, an explicit
collocated reference, closed-form solutions, diagnostics and a
benchmark registry.

The subpackage imports are lazy so the command-line front end can cap
thread pools before any numerical library loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "BoundarySpec": "mesh",
    "FaceField": "mesh",
    "MacMesh": "mesh",
    "build_mesh": "mesh",
    "project_initial": "mesh",
    "gradient": "discops",
    "divergence": "discops",
    "laplacian": "discops",
    "log_mean": "discops",
    "interface_density": "discops",
    "EllipticProblem": "pbsolver",
    "SolverError": "pbsolver",
    "solve_pb": "pbsolver",
    "State": "apscheme",
    "SchemeConfig": "apscheme",
    "PositivityError": "apscheme",
    "compute_dt": "apscheme",
    "step": "apscheme",
    "IceState": "refschemes",
    "CollocatedState": "refschemes",
    "ice_step": "refschemes",
    "rusanov_step": "refschemes",
    "solve_um": "analytic",
    "shock_speed": "analytic",
    "ice_riemann_exact": "analytic",
    "child_langmuir": "analytic",
    "total_energy": "diagnostics",
    "quasineutrality_residual": "diagnostics",
    "sheath_edge": "diagnostics",
    "CaseSpec": "bench",
    "case": "bench",
    "case_names": "bench",
    "closed_variant": "bench",
    "write_snapshot": "output",
    "RunConfig": "cli",
    "main": "cli",
}

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute "
                             f"{name!r}") from None
    return getattr(import_module(f".{module}", __name__), name)


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
