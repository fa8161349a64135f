"""Command-line front end.

Verbs: ``run`` (execute one scheme on one registered case and write
snapshots plus a diagnostics CSV), ``verify`` (built-in property suites
with machine-readable PASS/FAIL lines), ``list-cases``.

Configuration is a JSON document mirroring :class:`RunConfig`; flags
override file keys.  ``QNEPB_THREADS`` caps the BLAS/OpenMP thread
pools; it is applied before the numerical modules are imported, so the
heavy imports happen inside the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

SCHEMES = ("ap", "rusanov", "ice")

_THREAD_ENV_KEYS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")

#: Steps smaller than this fraction of the final time abort the run.
DT_UNDERFLOW = 1e-14


def apply_thread_cap() -> None:
    """Export QNEPB_THREADS to the BLAS/OpenMP pool variables (only the
    ones the user did not already set)."""
    cap = os.environ.get("QNEPB_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise SystemExit(f"QNEPB_THREADS must be a positive integer, "
                         f"got {cap!r}")
    for key in _THREAD_ENV_KEYS:
        os.environ.setdefault(key, cap)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; unset overrides fall back to the case."""

    case: str
    scheme: str = "ap"
    eps: float | None = None
    cells: tuple[int, ...] | None = None
    n_r: float | None = None
    t_final: float | None = None
    gamma: float | None = None
    theta_cfl: float | None = None
    dt_max: float | None = None
    newton_tol: float | None = None
    linear_rtol: float | None = None
    out: str = "runs/latest"
    snapshot_times: tuple[float, ...] | None = None
    fmt: str | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.fmt not in (None, "csv", "vtk"):
            raise ValueError(f"unknown format {self.fmt!r}")
        if self.cells is not None:
            object.__setattr__(self, "cells",
                               tuple(int(c) for c in self.cells))
        if self.snapshot_times is not None:
            object.__setattr__(self, "snapshot_times",
                               tuple(float(t) for t in self.snapshot_times))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_mapping(data: dict) -> "RunConfig":
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**data)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        return RunConfig.from_mapping(json.loads(text))


def _case_overrides(config: RunConfig) -> dict:
    overrides = {}
    for key, value in (("eps", config.eps), ("cells", config.cells),
                       ("t_final", config.t_final), ("n_r", config.n_r)):
        if value is not None:
            overrides[key] = value
    return overrides


def resolve_case(config: RunConfig):
    from . import bench

    try:
        return bench.case(config.case, **_case_overrides(config))
    except TypeError as exc:
        raise ValueError(
            f"case {config.case!r} does not accept these overrides: {exc}"
        ) from None


def _scheme_config(spec, config: RunConfig):
    from .apscheme import SchemeConfig

    kwargs = {}
    for name in ("gamma", "theta_cfl", "dt_max", "newton_tol",
                 "linear_rtol"):
        value = getattr(config, name)
        if value is not None:
            kwargs[name] = value
    return SchemeConfig(eps=spec.eps, bc=spec.bc, **kwargs)


def _faces_from_cells(vel, mesh, bc_velocity):
    """Interpolate cell-centered velocity components to faces (reference
    scheme output only)."""
    import numpy as np

    from .mesh import FaceField, apply_velocity_bc

    comps = []
    for axis in range(mesh.dim):
        comp = np.zeros(mesh.face_shape(axis))
        lo = [slice(None)] * mesh.dim
        hi = [slice(None)] * mesh.dim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        comp[mesh.interior_faces(axis)] = 0.5 * (
            vel[axis][tuple(lo)] + vel[axis][tuple(hi)])
        comps.append(comp)
    field = FaceField(comps)
    apply_velocity_bc(field, mesh, bc_velocity)
    return field


def _make_driver(scheme: str, spec, cfg, mesh):
    """Initial state plus an ``advance(state, cap) -> (state, diag)`` and
    a ``view(state) -> State`` used for snapshots."""
    import numpy as np

    from .apscheme import State, StepDiagnostics, step
    from .diagnostics import total_energy
    from .mesh import project_initial
    from .refschemes import (IceState, ice_dt, ice_step, project_collocated,
                             rusanov_dt, rusanov_step)

    def monitors(view_state, dt, eps):
        energy = total_energy(view_state, mesh, eps, cfg.bc)
        return StepDiagnostics(
            t=view_state.t, dt=dt,
            mass=float(np.sum(mesh.cell_vol * view_state.rho)),
            min_rho=float(np.min(view_state.rho)),
            e_kin=energy.kinetic, e_boltz=energy.boltzmann,
            e_field=energy.field, e_total=energy.total,
            qn_residual=float(np.max(np.abs(
                view_state.rho - np.exp(view_state.phi)))),
            boundary_mass_flux=float("nan"),
            max_density_ratio=float("nan"))

    if scheme == "ap":
        state = project_initial(mesh, spec.rho0, spec.u0, spec.bc, spec.eps,
                                spec.phi0, newton_tol=cfg.newton_tol)

        def advance(st, cap):
            return step(st, mesh, cfg, dt_cap=cap)

        return state, advance, lambda st: st

    if scheme == "rusanov":
        state = project_collocated(mesh, spec.rho0, spec.u0, spec.eps,
                                   spec.bc, newton_tol=cfg.newton_tol,
                                   phi0=spec.phi0)

        def view(st):
            return State(t=st.t, rho=st.rho,
                         u=_faces_from_cells(st.vel, mesh, cfg.bc.velocity),
                         phi=st.phi)

        def advance(st, cap):
            dt = min(rusanov_dt(st, cfg, mesh), cap)
            new = rusanov_step(st, dt, cfg, mesh)
            return new, monitors(view(new), dt, cfg.eps)

        return state, advance, view

    start = project_initial(mesh, spec.rho0, spec.u0, spec.bc, 0.0,
                            spec.phi0, newton_tol=cfg.newton_tol)
    state = IceState(t=start.t, rho=start.rho, u=start.u)

    def view(st):
        return State(t=st.t, rho=st.rho, u=st.u, phi=np.log(st.rho))

    def advance(st, cap):
        dt = min(ice_dt(st, cfg, mesh), cap)
        new = ice_step(st, dt, cfg, mesh)
        return new, monitors(view(new), dt, 0.0)

    return state, advance, view


def _snapshot_paths(outdir: Path, spec, config: RunConfig, t: float):
    fmt = config.fmt or ("csv" if spec.dim == 1 else "vtk")
    tag = f"{t:.6g}".replace("-", "m")
    return outdir / f"fields_t{tag}.{fmt}", fmt


def run_config(config: RunConfig) -> int:
    """Execute one run; returns the process exit status."""
    from . import analytic, output
    from .apscheme import PositivityError
    from .diagnostics import DiagSeries
    from .mesh import build_mesh
    from .pbsolver import SolverError

    spec = resolve_case(config)
    cfg = _scheme_config(spec, config)
    mesh = build_mesh(spec.bounds, spec.cells)
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)

    snapshot_times = (config.snapshot_times if config.snapshot_times
                      is not None else spec.snapshot_times)
    targets = sorted({float(t) for t in snapshot_times
                      if 0.0 < t <= spec.t_final} | {spec.t_final})
    t_tol = 1e-12 * max(1.0, spec.t_final)

    series = DiagSeries()
    written: list[str] = []
    status = "ok"
    manifest_path = outdir / "MANIFEST.json"

    def write_outputs(state, t):
        path, fmt = _snapshot_paths(outdir, spec, config, t)
        exact = None
        if spec.reference == "ice-exact" and spec.dim == 1 and t > 0.0:
            exact = analytic.ice_riemann_exact(spec.params["n_r"], t,
                                               mesh.centers[0])
        output.write_snapshot(state, mesh, fmt, path, exact=exact)
        written.append(path.name)
        if spec.cut == "radial" and t == spec.t_final:
            cut = output.write_radial_cut(state, mesh,
                                          outdir / "radial_cut.csv")
            written.append(cut.name)

    try:
        state, advance, view = _make_driver(config.scheme, spec, cfg, mesh)
        for target in targets:
            while target - state.t > t_tol:
                state, diag = advance(state, target - state.t)
                series.append(diag)
                if diag.dt < DT_UNDERFLOW * spec.t_final:
                    raise SolverError(
                        f"time step collapsed to {diag.dt:.3e} "
                        f"at t = {state.t:.6g}")
            write_outputs(view(state), target)
    except (SolverError, PositivityError) as exc:
        status = f"failed: {exc}"

    diag_path = outdir / "diagnostics.csv"
    series.write_csv(diag_path)
    written.append(diag_path.name)
    output.write_manifest(manifest_path, {
        "case": spec.name,
        "scheme": config.scheme,
        "status": status,
        "config": json.loads(config.to_json()),
        "cells": list(spec.cells),
        "bounds": [list(b) for b in spec.bounds],
        "eps": spec.eps,
        "t_final": spec.t_final,
        "steps": len(series),
        "files": written,
    })
    if status != "ok":
        print(f"error: {status}", file=sys.stderr)
        return 3
    return 0


def _config_from_args(args) -> RunConfig:
    data: dict = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    flag_map = {
        "case": args.case, "scheme": args.scheme, "eps": args.eps,
        "cells": tuple(args.cells) if args.cells else None,
        "n_r": args.nr, "t_final": args.tfinal, "gamma": args.gamma,
        "theta_cfl": args.theta_cfl, "dt_max": args.dt_max,
        "newton_tol": args.newton_tol, "linear_rtol": args.linear_rtol,
        "out": args.out, "snapshot_times":
            tuple(args.snapshots) if args.snapshots else None,
        "fmt": args.format,
    }
    for key, value in flag_map.items():
        if value is not None:
            data[key] = value
    if "case" not in data:
        raise SystemExit("a case is required (--case or config file)")
    return RunConfig.from_mapping(data)


# ---------------------------------------------------------------------------
# verify suites


def _report(lines, name, ok, detail) -> bool:
    lines.append(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return ok


def _suite_operators(lines) -> bool:
    import numpy as np

    from .discops import duality_residual, gradient, log_mean
    from .mesh import BoundarySpec, FaceField, build_mesh

    rng = np.random.default_rng(2024)
    ok = True
    worst_dual = 0.0
    for dim, cells in ((1, (23,)), (2, (9, 7))):
        mesh = build_mesh(((0.0, 1.3),) * dim, cells,
                          grading=lambda s: s ** 1.3)
        for _ in range(20):
            q = rng.uniform(0.5, 2.0, mesh.shape)
            comps = []
            for axis in range(dim):
                comp = np.zeros(mesh.face_shape(axis))
                comp[mesh.interior_faces(axis)] = rng.standard_normal(
                    comp[mesh.interior_faces(axis)].shape)
                comps.append(comp)
            worst_dual = max(worst_dual, abs(
                duality_residual(q, FaceField(comps), mesh)))
    ok &= _report(lines, "operators.duality", worst_dual <= 1e-12,
                  f"max_residual={worst_dual:.3e}")

    a = rng.uniform(0.1, 10.0, 1000)
    b = a * (1.0 + rng.uniform(-1e-9, 1e-9, 1000))
    sym = np.max(np.abs(log_mean(a, b) - log_mean(b, a)))
    near = np.max(np.abs(log_mean(a, b) / a - 1.0))
    ok &= _report(lines, "operators.log_mean", sym == 0.0 and near < 1e-8,
                  f"near_equal_defect={near:.3e}")

    mesh = build_mesh(((0.0, 1.0),), (17,))
    bc = BoundarySpec.make(1).potential
    q = rng.uniform(1.0, 2.0, mesh.shape)
    g = gradient(q, mesh, bc)
    expect = (q[1:] - q[:-1]) / (0.5 * (mesh.widths[0][1:]
                                        + mesh.widths[0][:-1]))
    defect = float(np.max(np.abs(g[0][1:-1] - expect)))
    ok &= _report(lines, "operators.gradient", defect <= 1e-14,
                  f"interior_defect={defect:.3e}")
    return ok


def _suite_pbsolver(lines) -> bool:
    import numpy as np

    from .mesh import BoundarySpec, FaceField, build_mesh
    from .pbsolver import EllipticProblem, picard_solve, solve_pb

    rng = np.random.default_rng(7)
    mesh = build_mesh(((0.0, 1.0),), (40,))
    bc = BoundarySpec.make(1).potential
    coeff = FaceField([np.full(41, 1e-4)])
    ok = True

    problem = EllipticProblem(mesh=mesh, coeff=coeff,
                              rhs=np.full(40, 2.5), bc=bc)
    phi = solve_pb(problem)
    defect = float(np.max(np.abs(phi - np.log(2.5))))
    ok &= _report(lines, "pbsolver.constant", defect <= 1e-10,
                  f"defect={defect:.3e}")

    worst = 0.0
    for _ in range(20):
        rhs = rng.uniform(0.2, 3.0, 40)
        phi = solve_pb(EllipticProblem(mesh=mesh, coeff=coeff, rhs=rhs,
                                       bc=bc))
        lo, hi = np.log(rhs.min()), np.log(rhs.max())
        worst = max(worst, float(max(lo - phi.min(), phi.max() - hi, 0.0)))
    ok &= _report(lines, "pbsolver.bounds", worst <= 1e-10,
                  f"overshoot={worst:.3e}")

    rhs = rng.uniform(0.5, 2.0, 40)
    problem = EllipticProblem(mesh=mesh, coeff=coeff, rhs=rhs, bc=bc)
    gap = float(np.max(np.abs(solve_pb(problem) - picard_solve(problem))))
    ok &= _report(lines, "pbsolver.newton_vs_picard", gap <= 1e-8,
                  f"gap={gap:.3e}")
    return ok


def _suite_energy(lines) -> bool:
    import numpy as np

    from . import bench
    from .apscheme import SchemeConfig, step
    from .diagnostics import total_energy
    from .mesh import build_mesh, project_initial

    spec = bench.closed_variant(bench.case("five_branch", eps=1.0,
                                           t_final=0.2))
    mesh = build_mesh(spec.bounds, spec.cells)
    cfg = SchemeConfig(eps=spec.eps, bc=spec.bc)
    state = project_initial(mesh, spec.rho0, spec.u0, spec.bc, spec.eps)
    mass0 = float(np.sum(mesh.cell_vol * state.rho))
    prev = total_energy(state, mesh, spec.eps, spec.bc).total
    e0 = abs(prev)
    worst_rise, worst_drift = 0.0, 0.0
    while state.t < spec.t_final:
        state, diag = step(state, mesh, cfg,
                           dt_cap=spec.t_final - state.t)
        worst_rise = max(worst_rise, diag.e_total - prev)
        prev = diag.e_total
        worst_drift = max(worst_drift, abs(diag.mass - mass0) / mass0)
    ok = _report(lines, "energy.monotone", worst_rise <= 1e-10 * e0,
                 f"max_rise={worst_rise:.3e}")
    ok &= _report(lines, "energy.mass", worst_drift <= 1e-11,
                  f"max_drift={worst_drift:.3e}")
    return ok


def _suite_analytic(lines) -> bool:
    import numpy as np

    from .analytic import (_g, child_langmuir, ice_riemann_exact,
                           shock_speed, solve_um)

    ok = True
    worst = max(abs(_g(solve_um(n_r), n_r))
                for n_r in (0.5, 0.75, 0.95))
    ok &= _report(lines, "analytic.um_residual", worst <= 1e-12,
                  f"max|G(u_m)|={worst:.3e}")

    u_m = solve_um(0.5)
    u_s = shock_speed(u_m, 0.5)
    t = 7.0
    xs = np.array([-t - 1e-9, -t + 1e-9,
                   (u_m - 1.0) * t - 1e-9, (u_m - 1.0) * t + 1e-9])
    rho, u = ice_riemann_exact(0.5, t, xs)
    jump = max(abs(rho[1] - rho[0]), abs(u[1] - u[0]),
               abs(rho[3] - rho[2]), abs(u[3] - u[2]))
    ok &= _report(lines, "analytic.riemann_continuity",
                  jump <= 1e-6 and u_s > u_m,
                  f"branch_jump={jump:.3e}")

    s = child_langmuir(500.0, 1.25, 1e-2)
    ok &= _report(lines, "analytic.child_langmuir", abs(s - 0.375) <= 2e-3,
                  f"s={s:.5f}")
    return ok


def _suite_limit(lines) -> bool:
    import numpy as np

    from .apscheme import SchemeConfig, State, step
    from .mesh import (BoundarySpec, FaceField, apply_velocity_bc,
                       build_mesh)
    from .refschemes import IceState, ice_step

    rng = np.random.default_rng(11)
    mesh = build_mesh(((0.0, 1.0),), (30,))
    bc = BoundarySpec.make(1, density="neumann_zero", velocity="no_slip",
                           potential="neumann_zero")
    # Tight solver tolerances so both elliptic solves stop at the same
    # iterate and the comparison probes the algebraic identity.
    cfg = SchemeConfig(eps=0.0, bc=bc, newton_tol=1e-14, linear_rtol=1e-14)
    rho = rng.uniform(0.5, 2.0, 30)
    u = FaceField([rng.standard_normal(31)])
    apply_velocity_bc(u, mesh, bc.velocity)
    dt = 1e-3
    ap_state = State(t=0.0, rho=rho.copy(), u=u.copy(), phi=np.log(rho))
    new_ap, _ = step(ap_state, mesh, cfg, dt=dt)
    new_ice = ice_step(IceState(t=0.0, rho=rho.copy(), u=u.copy()), dt,
                       cfg, mesh)
    gap = max(float(np.max(np.abs(new_ap.rho - new_ice.rho))),
              float(np.max(np.abs(new_ap.u[0] - new_ice.u[0]))))
    return _report(lines, "limit.eps_zero_step", gap <= 1e-12,
                   f"gap={gap:.3e}")


_SUITES = {
    "operators": _suite_operators,
    "pbsolver": _suite_pbsolver,
    "energy": _suite_energy,
    "analytic": _suite_analytic,
    "limit": _suite_limit,
}


def cmd_verify(args) -> int:
    names = [args.suite] if args.suite else list(_SUITES)
    lines: list[str] = []
    all_ok = True
    for name in names:
        if name not in _SUITES:
            raise SystemExit(f"unknown suite {name!r} "
                             f"(known: {', '.join(_SUITES)})")
        all_ok &= _SUITES[name](lines)
    for line in lines:
        print(line)
    return 0 if all_ok else 1


def cmd_list_cases(_args) -> int:
    from . import bench

    for name in bench.case_names():
        spec = bench.case(name)
        cells = "x".join(str(c) for c in spec.cells)
        print(f"{name:24s} dim={spec.dim} cells={cells:9s} "
              f"eps={spec.eps:g} T={spec.t_final:g} "
              f"reference={spec.reference}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qn-epb",
        description="Finite-volume solver for the pressureless "
                    "Euler-Poisson-Boltzmann system on staggered grids.")
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="execute a benchmark case")
    run.add_argument("--case", help="registered case name")
    run.add_argument("--scheme", choices=SCHEMES, default=None)
    run.add_argument("--eps", type=float, default=None,
                     help="scaled Debye length override")
    run.add_argument("--cells", type=int, nargs="+", default=None,
                     help="mesh resolution override (one value per axis)")
    run.add_argument("--nr", type=float, default=None,
                     help="right-state density (riemann case)")
    run.add_argument("--tfinal", type=float, default=None)
    run.add_argument("--gamma", type=float, default=None,
                     help="stabilisation safety factor (> 1)")
    run.add_argument("--theta-cfl", dest="theta_cfl", type=float,
                     default=None)
    run.add_argument("--dt-max", dest="dt_max", type=float, default=None)
    run.add_argument("--newton-tol", dest="newton_tol", type=float,
                     default=None)
    run.add_argument("--linear-rtol", dest="linear_rtol", type=float,
                     default=None)
    run.add_argument("--snapshots", type=float, nargs="+", default=None,
                     help="output times (final time always added)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--config", default=None, help="JSON config file")
    run.add_argument("--format", choices=("csv", "vtk"), default=None)
    run.set_defaults(handler=lambda a: run_config(_config_from_args(a)))

    verify = sub.add_parser("verify", help="run built-in property suites")
    verify.add_argument("--suite", choices=tuple(_SUITES), default=None)
    verify.set_defaults(handler=cmd_verify)

    lc = sub.add_parser("list-cases", help="print the case registry")
    lc.set_defaults(handler=cmd_list_cases)
    return parser


def main(argv=None) -> int:
    apply_thread_cap()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
