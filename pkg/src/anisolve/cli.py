"""Command line drivers: single solves, CFL sweeps, model tables and
simulated weak scaling.  All output is CSV plus a one-line summary.

Configuration is taken from defaults, then an optional ``key = value`` file
(``--config``; ``#`` starts a comment), then command-line flags, each layer
overriding the previous one.  ``ANISOLVE_THREADS`` caps the number of solves
that ``sweep-cfl`` runs concurrently.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cg import cg_solve
from .errors import AnisolveError, HarnessError, ParameterError, ShapeError, TopologyError
from .geometry import DEFAULT_H, DEFAULT_NU_CFL, DEFAULT_NZ, flat_box_geometry
from .grid import Field, GridShape
from .multigrid import MultigridHierarchy, coarse_smooths_for, mg_solve
from .operator import StencilOperator
from .parallel import (DEFAULT_TIMEOUT, Communicator, RankTopology, assemble_global,
                       exchange_byte_count, run_ranks)
from .perfmodel import (FINE_COMPOSITIONS, TABLE3_GOLDEN, TABLE3_SIZES, PerfCounters,
                        cost_table, global_dof, ratio_R, validate_counters,
                        write_cost_csv, write_ratio_csv)
from .smoother import BlockJacobiPreconditioner

__all__ = ["RunConfig", "SolveResult", "read_config_file", "make_rhs", "manufactured_solution",
           "run_solve", "cmd_solve", "cmd_sweep_cfl", "cmd_perf_tables", "cmd_weak_scale",
           "build_parser", "main"]

THREADS_ENV = "ANISOLVE_THREADS"
RHS_MODES = ("random", "manufactured", "zero")


class ConfigError(AnisolveError, ValueError):
    pass


@dataclass
class RunConfig:
    solver: str = "mg"
    n_x: int = 128
    n_z: int = DEFAULT_NZ
    nu_cfl: float = DEFAULT_NU_CFL
    epsilon: float = 1e-5
    L: int = 5
    ranks: int = 1
    max_iter: int | None = None
    seed: int = 0
    rhs: str = "random"
    output: str | None = None
    coarse_smooths: int | None = None
    pre_smooth: int = 1
    post_smooth: int = 1
    rho_relax: float = 2.0 / 3.0
    prolongation: str = "dirichlet"
    depth: float = DEFAULT_H
    timeout: float = DEFAULT_TIMEOUT

    def validate(self) -> "RunConfig":
        if self.solver not in ("cg", "mg"):
            raise ConfigError(f"solver must be 'cg' or 'mg', got {self.solver!r}")
        if self.rhs not in RHS_MODES:
            raise ConfigError(f"rhs must be one of {', '.join(RHS_MODES)}")
        if self.prolongation not in ("dirichlet", "constant"):
            raise ConfigError("prolongation must be 'dirichlet' or 'constant'")
        if self.n_x < 1 or self.n_z < 1:
            raise ConfigError("grid sizes must be positive")
        if not self.nu_cfl > 0 or not self.epsilon > 0 or not self.depth > 0:
            raise ConfigError("nu_cfl, epsilon and depth must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        s = math.isqrt(self.ranks)
        if self.ranks < 1 or s * s != self.ranks:
            raise ConfigError(f"ranks must be a perfect square, got {self.ranks}")
        if self.n_x % s:
            raise ConfigError(f"n_x={self.n_x} is not divisible by {s} ranks per side")
        if self.solver == "mg":
            if self.L < 1:
                raise ConfigError("L must be >= 1")
            if (self.n_x // s) % 2 ** (self.L - 1):
                raise ConfigError(f"local n_x={self.n_x // s} cannot be coarsened "
                                  f"{self.L - 1} times")
            if self.coarse_smooths is not None and self.coarse_smooths < 1:
                raise ConfigError("coarse_smooths must be >= 1")
        return self

    @property
    def iteration_cap(self) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 2000 if self.solver == "cg" else 200

    @property
    def n_coarse_smooth(self) -> int:
        if self.coarse_smooths is not None:
            return self.coarse_smooths
        return coarse_smooths_for(self.nu_cfl, self.L)


_ALIASES = {"nx": "n_x", "nz": "n_z", "cfl": "nu_cfl", "levels": "L", "l": "L",
            "max-iter": "max_iter", "coarse-smooths": "coarse_smooths",
            "pre-smooth": "pre_smooth", "post-smooth": "post_smooth",
            "rho-relax": "rho_relax"}
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: str):
    if value.lower() in ("none", ""):
        return None
    if key in ("max_iter", "coarse_smooths"):
        return int(value)
    default = _FIELDS[key].default
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = _ALIASES.get(key.lower(), key.lower().replace("-", "_"))
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _coerce(key, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


def _config_from(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig(**values).validate()


# problem set-up

def manufactured_solution(n_x: int, n_z: int) -> np.ndarray:
    """``sin(pi x) sin(pi y) cos(pi z / H)`` at cell centres, as ``(n_x, n_x, n_z)``."""
    c = (np.arange(n_x) + 0.5) / n_x
    zeta = (np.arange(n_z) + 0.5) / n_z
    sx = np.sin(np.pi * c)
    return sx[:, None, None] * sx[None, :, None] * np.cos(np.pi * zeta)[None, None, :]


def make_rhs(config: RunConfig) -> np.ndarray:
    """Global right-hand side ``(n_x, n_x, n_z)``; independent of the rank count."""
    n, nz = config.n_x, config.n_z
    if config.rhs == "zero":
        return np.zeros((n, n, nz))
    if config.rhs == "random":
        return np.random.default_rng(config.seed).standard_normal((n, n, nz))
    geo = flat_box_geometry(n, nz, config.nu_cfl, config.depth)
    A = StencilOperator(geo, GridShape(n, n, nz))
    return A.interior_product(Field.from_interior(manufactured_solution(n, nz)))


@dataclass
class SolveResult:
    config: RunConfig
    history: object
    u: np.ndarray
    counters: PerfCounters
    bytes_log: list
    exchange_counts: dict
    seconds: float

    @property
    def flops_per_cell(self) -> float:
        it = self.counters.iterations
        cells = self.config.n_x * self.config.n_x * self.config.n_z
        return self.counters.totals().flops / (cells * it) if it else 0.0

    def counter_report(self):
        """Measured per-cell work against the analytic cost table."""
        c = self.config
        table = cost_table(c.solver, c.L, c.n_coarse_smooth)
        return validate_counters(self.counters, c.n_x * c.n_x * c.n_z, table)


def run_solve(config: RunConfig, f_global: np.ndarray | None = None) -> SolveResult:
    """Run one solve, serially or on ``config.ranks`` simulated ranks."""
    config.validate()
    n, nz = config.n_x, config.n_z
    f_global = make_rhs(config) if f_global is None else f_global
    geo = flat_box_geometry(n, nz, config.nu_cfl, config.depth)
    global_shape = GridShape(n, n, nz)

    def program(comm: Communicator):
        counters = PerfCounters()
        f = comm.scatter(f_global)
        if config.solver == "cg":
            i0, j0 = comm.topology.origin(comm.rank)
            loc = comm.topology.local_shape
            A = StencilOperator(geo.window(i0, j0, loc.n_x, loc.n_y), loc, 1)
            M = BlockJacobiPreconditioner(A)
            u, hist = cg_solve(A, M, f, config.epsilon, config.iteration_cap, comm, counters)
        else:
            h = MultigridHierarchy(geo, comm, config.L, config.n_coarse_smooth,
                                   config.pre_smooth, config.post_smooth, config.rho_relax,
                                   counters, config.prolongation)
            u, hist = mg_solve(h, f, config.epsilon, config.iteration_cap)
        return u.interior().copy(), hist, counters, comm.byte_log, dict(comm.exchange_counts)

    t0 = time.perf_counter()
    results = run_ranks(config.ranks, program, global_shape, config.timeout)
    seconds = time.perf_counter() - t0
    topo = RankTopology.for_ranks(config.ranks, global_shape)
    u = assemble_global(topo, [r[0] for r in results])
    counters = PerfCounters()
    for r in results:
        counters.merge(r[2])
    return SolveResult(config, results[0][1], u, counters,
                       [r[3] for r in results], results[0][4], seconds)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def write_convergence_csv(history, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "residual_norm", "relative_residual"])
    for t, (r, rel) in enumerate(zip(history.residual_norms, history.relative_residuals)):
        w.writerow([t, repr(float(r)), repr(float(rel))])


def write_bytes_csv(byte_log, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "level", "direction", "bytes"])
    totals: dict = {}
    for rec in byte_log:
        key = (rec.iteration, rec.level, rec.direction)
        totals[key] = totals.get(key, 0) + rec.bytes
    for (it, level, direction), b in sorted(totals.items()):
        w.writerow([it, level, direction, b])


def summary_line(res: SolveResult) -> str:
    c, h = res.config, res.history
    parts = [f"solver={c.solver}", f"grid={c.n_x}x{c.n_x}x{c.n_z}", f"ranks={c.ranks}",
             f"nu_cfl={c.nu_cfl:g}"]
    if c.solver == "mg":
        parts += [f"L={c.L}", f"coarse_smooths={c.n_coarse_smooth}"]
    parts += [f"iterations={h.iterations}", f"converged={'yes' if h.converged else 'no'}",
              f"final_relative_residual={h.final_relative_residual:.3e}",
              f"flops_per_cell_iter={res.flops_per_cell:.2f}"]
    if c.rhs == "manufactured":
        exact = manufactured_solution(c.n_x, c.n_z)
        err = np.abs(res.u - exact).max() / np.abs(exact).max()
        parts.append(f"max_rel_error={err:.3e}")
    parts.append(f"time={res.seconds:.2f}s")
    return " ".join(parts)


# commands

def cmd_solve(config: RunConfig, bytes_csv: str | None = None, bytes_rank: int = 0) -> int:
    res = run_solve(config)
    fh, close = _open_out(config.output)
    try:
        write_convergence_csv(res.history, fh)
    finally:
        if close:
            fh.close()
    if bytes_csv:
        if not 0 <= bytes_rank < config.ranks:
            raise ConfigError(f"bytes rank {bytes_rank} outside 0..{config.ranks - 1}")
        with open(bytes_csv, "w", newline="") as bfh:
            write_bytes_csv(res.bytes_log[bytes_rank], bfh)
    print(summary_line(res), file=sys.stdout if close else sys.stderr)
    return 0 if res.history.converged else 1


def _sweep_one(args):
    config, solver, nu = args
    cfg = dataclasses.replace(config, solver=solver, nu_cfl=nu, output=None)
    res = run_solve(cfg)
    h = res.history
    return [solver, f"{nu:g}", cfg.L if solver == "mg" else "",
            cfg.n_coarse_smooth if solver == "mg" else "", h.iterations,
            "yes" if h.converged else "no"]


def cmd_sweep_cfl(config: RunConfig, cfl_list, solvers=("cg", "mg")) -> int:
    jobs = [(config, s, nu) for s in solvers for nu in cfl_list]
    threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    if threads == 1:
        rows = [_sweep_one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    fh, close = _open_out(config.output)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "nu_cfl", "L", "coarse_smooths", "iterations", "converged"])
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    failed = sum(r[-1] == "no" for r in rows)
    print(f"sweep: {len(rows)} runs, {failed} not converged",
          file=sys.stdout if close else sys.stderr)
    return 0 if failed == 0 else 1


def cmd_perf_tables(solver: str = "all", sizes=TABLE3_SIZES, L: int = 5, n_halo=None,
                    composition: str = "table", check: bool = False,
                    output: str | None = None) -> int:
    """Cost table(s) and the ``R x 10^4`` table; ``check`` compares with the goldens."""
    solvers = ("cg", "mg") if solver == "all" else (solver,)
    ratio_rows = {}
    if "cg" in solvers:
        ratio_rows["cg"] = tuple(1e4 * ratio_R("cg", n, n_halo=n_halo) for n in sizes)
    if "mg" in solvers:
        ratio_rows["mg"] = tuple(1e4 * ratio_R("mg", n, L, n_halo, fine=composition)
                                 for n in sizes)
        fine_halo = {L: 4} if n_halo is None else n_halo
        ratio_rows["mg_fine"] = tuple(1e4 * ratio_R("mg", n, L, fine_halo, fine_only=True,
                                                    fine=composition) for n in sizes)
    if output is not None:
        os.makedirs(output, exist_ok=True)
    fh, close = _open_out(None if output is None else os.path.join(output, "cost.csv"))
    try:
        for s in solvers:
            write_cost_csv(cost_table(s, L, fine=composition), fh)
        if not close:
            fh.write("\n")
            write_ratio_csv(ratio_rows, sizes, fh)
    finally:
        if close:
            fh.close()
    if close:
        with open(os.path.join(output, "ratio.csv"), "w", newline="") as rfh:
            write_ratio_csv(ratio_rows, sizes, rfh)
    if not check:
        return 0
    ok = True
    out = sys.stderr if output is None else sys.stdout
    for name, values in ratio_rows.items():
        for n, v in zip(sizes, values):
            if n not in TABLE3_SIZES:
                continue
            ref = TABLE3_GOLDEN[name][TABLE3_SIZES.index(n)]
            good = abs(round(v, 1) - ref) <= 0.1 + 1e-9
            ok &= good
            print(f"{'PASS' if good else 'FAIL'} R x 1e4 {name} n_x={n}: {v:.2f} "
                  f"(reference {ref})", file=out)
    refs = {"cg": (54, 24, 15), "mg": (149.4, 67.2, 29.6)}
    for s in solvers:
        total = cost_table(s, L, fine=composition).total
        tol = 0.0 if s == "cg" else 0.002
        good = all(abs(a - b) <= tol * b + 1e-9 for a, b in zip(total, refs[s]))
        if s == "mg" and L != 5:
            continue
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} cost total {s}: "
              f"{total.flops:.2f}/{total.mem:.2f}/{total.mem_cached:.2f} "
              f"(reference {'/'.join(str(r) for r in refs[s])})", file=out)
    return 0 if ok else 1


def cmd_weak_scale(config: RunConfig, ranks_list, local_nx: int) -> int:
    """Fixed ``local_nx^2 x n_z`` per rank; the global grid grows with ``p``."""
    rows = []
    for p in ranks_list:
        s = math.isqrt(p)
        if p < 1 or s * s != p:
            raise ConfigError(f"rank count {p} is not a perfect square")
        cfg = dataclasses.replace(config, ranks=p, n_x=s * local_nx, output=None).validate()
        res = run_solve(cfg)
        topo = RankTopology.for_ranks(p, GridShape(cfg.n_x, cfg.n_x, cfg.n_z))
        it = max(res.history.iterations, 1)
        # busiest rank, per iteration, excluding set-up traffic
        per_rank = [sum(r.bytes for r in log if r.iteration > 0) / it for log in res.bytes_log]
        n_halo = 1 if cfg.solver == "cg" else None
        predicted = (max(exchange_byte_count(topo, n_halo, r) for r in range(p))
                     if n_halo else "")
        rows.append([p, s, local_nx, cfg.n_x, cfg.n_z, global_dof(p, local_nx, cfg.n_z),
                     res.history.iterations, "yes" if res.history.converged else "no",
                     f"{max(per_rank):.0f}", predicted, f"{res.seconds:.2f}"])
    fh, close = _open_out(config.output)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ranks", "s", "local_nx", "global_nx", "nz", "global_dof", "iterations",
                    "converged", "bytes_per_rank_per_iter", "predicted_bytes", "seconds"])
        w.writerows(rows)
    finally:
        if close:
            fh.close()
    iters = {r[6] for r in rows}
    converged = all(r[7] == "yes" for r in rows)
    status = "p-independent" if len(iters) == 1 else "VARY"
    print(f"weak-scale: iterations {sorted(iters)} {status}",
          file=sys.stdout if close else sys.stderr)
    return 0 if len(iters) == 1 and converged else 1


# argument parsing

def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _add_run_flags(p, solver=True):
    if solver:
        p.add_argument("--solver", choices=("cg", "mg"))
    p.add_argument("--nx", dest="n_x", type=int, help="global cells per horizontal side")
    p.add_argument("--nz", dest="n_z", type=int, help="vertical levels")
    p.add_argument("--cfl", dest="nu_cfl", type=float, help="horizontal CFL number")
    p.add_argument("--epsilon", type=float, help="relative residual target")
    p.add_argument("--levels", dest="L", type=int, help="multigrid levels")
    p.add_argument("--ranks", type=int, help="simulated ranks (perfect square)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rhs", choices=RHS_MODES)
    p.add_argument("--coarse-smooths", dest="coarse_smooths", type=int,
                   help="override the coarsest-level smoother count")
    p.add_argument("--prolongation", choices=("dirichlet", "constant"))
    p.add_argument("--output", "-o", help="CSV path ('-' for stdout)")
    p.add_argument("--config", help="key = value configuration file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisolve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one solve and write its convergence history")
    _add_run_flags(p)
    p.add_argument("--bytes-csv", help="write per-iteration halo bytes of one rank")
    p.add_argument("--bytes-rank", type=int, default=0)

    p = sub.add_parser("sweep-cfl", help="iteration counts over a range of CFL numbers")
    _add_run_flags(p, solver=False)
    p.add_argument("--cfl-list", type=_float_list, default=[2.1, 8.4, 33.6])
    p.add_argument("--solvers", default="cg,mg")

    p = sub.add_parser("perf-tables", help="cost model and communication ratio tables")
    p.add_argument("--solver", choices=("cg", "mg", "all"), default="all")
    p.add_argument("--nx", type=_int_list, default=list(TABLE3_SIZES))
    p.add_argument("--nhalo", type=int, help="exchanges per level (all levels)")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--composition", choices=sorted(FINE_COMPOSITIONS), default="table")
    p.add_argument("--check", action="store_true", help="compare with the reference values")
    p.add_argument("--output", "-o", help="directory for cost.csv and ratio.csv")

    p = sub.add_parser("weak-scale", help="simulated weak scaling at fixed local size")
    _add_run_flags(p)
    p.add_argument("--ranks-list", type=_int_list, default=[1, 4, 16])
    p.add_argument("--local-nx", type=int, default=64)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "perf-tables":
            return cmd_perf_tables(args.solver, tuple(args.nx), args.levels, args.nhalo,
                                   args.composition, args.check, args.output)
        if args.command == "weak-scale":
            if args.n_z is None and not args.config:
                args.n_z = 32
            args.n_x = args.local_nx
            config = _config_from(args)
            return cmd_weak_scale(config, args.ranks_list, args.local_nx)
        config = _config_from(args)
        if args.command == "solve":
            return cmd_solve(config, args.bytes_csv, args.bytes_rank)
        solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
        if any(s not in ("cg", "mg") for s in solvers):
            parser.error("--solvers takes a comma list of cg, mg")
        return cmd_sweep_cfl(config, args.cfl_list, solvers)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ParameterError, ShapeError, TopologyError) as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
