"""FLOP and memory-traffic cost model, kernel counters and the
communication/calculation ratio.

Per-cell kernel costs (FLOPs, uncached memory references, cached memory
references) are fixed constants.  A multigrid iteration is composed level by
level and weighted by ``4^-(L - l)``, the size of level ``l`` relative to the
finest level ``L``:

* coarsest level: RestrictSmooth + (n_coarse - 1) Smooth
* intermediate levels: RestrictSmooth + Residual + Prolongate + Smooth
* finest level: see :data:`FINE_COMPOSITIONS`

The published aggregate (149.4 / 67.2 / 29.6) is reproduced by the
``"table"`` fine-level composition, 2 Smooth + 2 Residual + ResidualNorm,
which equals the published fine-level row (122 / 53 / 23) exactly; it has no
Prolongate term.  The solver as executed also prolongates onto the finest
level (``"executed"``), and the ``"kernel_sum"`` variant is the naive
2 Smooth + Residual + Prolongate + ResidualNorm.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

__all__ = [
    "KernelCost", "KERNEL_COSTS", "FINE_COMPOSITIONS", "LevelCost", "CostTable",
    "cost_table", "ratio_R", "predicted_overhead", "PerfCounters",
    "validate_counters", "CounterReport", "n_halo_schedule", "global_dof",
    "TABLE3_GOLDEN", "TABLE3_SIZES", "table3", "write_cost_csv", "write_ratio_csv",
]


class KernelCost(NamedTuple):
    flops: float
    mem: float
    mem_cached: float

    def __add__(self, other):
        return KernelCost(*(a + b for a, b in zip(self, other)))

    def __mul__(self, w):
        return KernelCost(*(a * w for a in self))

    __rmul__ = __mul__


KERNEL_COSTS = {
    "SpMV": KernelCost(32, 12, 6),
    "Tridiag": KernelCost(22, 12, 9),
    "Smooth": KernelCost(37, 17, 8),
    "RestrictSmooth": KernelCost(17, 12, 6),
    "Residual": KernelCost(23, 9, 3),
    "Prolongate": KernelCost(6, 5, 3),
    "ResidualNorm": KernelCost(2, 1, 1),
    # bookkeeping outside the iteration loop
    "Tridiag(setup)": KernelCost(22, 12, 9),
    "Axpy(final)": KernelCost(2, 3, 3),
    "ResidualNorm(setup)": KernelCost(2, 1, 1),
}

FINE_COMPOSITIONS = {
    "table": {"Smooth": 2, "Residual": 2, "ResidualNorm": 1},
    "executed": {"Smooth": 2, "Residual": 2, "Prolongate": 1, "ResidualNorm": 1},
    "kernel_sum": {"Smooth": 2, "Residual": 1, "Prolongate": 1, "ResidualNorm": 1},
}

_ZERO = KernelCost(0.0, 0.0, 0.0)


def _compose(kernels: dict) -> KernelCost:
    total = _ZERO
    for name, count in kernels.items():
        total = total + KERNEL_COSTS[name] * count
    return total


def level_kernels(level: int, L: int, n_coarse_smooth: int = 2,
                  fine: str = "table") -> dict:
    """Kernel invocation counts on ``level`` for one multigrid iteration."""
    if level == 1:
        if L == 1:
            return {"Smooth": n_coarse_smooth, "ResidualNorm": 1}
        return {"RestrictSmooth": 1, "Smooth": n_coarse_smooth - 1}
    if level == L:
        return dict(FINE_COMPOSITIONS[fine])
    return {"RestrictSmooth": 1, "Residual": 1, "Prolongate": 1, "Smooth": 1}


class LevelCost(NamedTuple):
    level: int
    weight: float
    kernels: dict
    cost: KernelCost


@dataclass
class CostTable:
    solver: str
    levels: list
    total: KernelCost

    def rows(self):
        """``(kernel, level, flops, mem, mem_cached)`` per level-cell, then totals."""
        out = []
        for lc in self.levels:
            for name, count in lc.kernels.items():
                c = KERNEL_COSTS[name] * count
                out.append((name if count == 1 else f"{count}x{name}", lc.level, *c))
            out.append(("level total", lc.level, *lc.cost))
        out.append(("Total", "all", *self.total))
        return out


def cost_table(solver: str, L: int = 5, n_coarse_smooth: int = 2,
               fine: str = "table") -> CostTable:
    """Per-level and aggregate cost per finest-level cell and iteration.

    For ``"cg"`` the single level is SpMV + Tridiag.  For ``"mg"`` with
    ``L = 1`` the lone level is smoothed ``n_coarse_smooth`` times.
    """
    if solver == "cg":
        kernels = {"SpMV": 1, "Tridiag": 1}
        cost = _compose(kernels)
        return CostTable("cg", [LevelCost(1, 1.0, kernels, cost)], cost)
    if solver != "mg":
        raise ValueError(f"unknown solver {solver!r}")
    if L < 1:
        raise ValueError("multigrid needs L >= 1")
    levels = []
    total = _ZERO
    for level in range(L, 0, -1):
        kernels = level_kernels(level, L, n_coarse_smooth, fine)
        cost = _compose(kernels)
        weight = 4.0 ** -(L - level)
        levels.append(LevelCost(level, weight, kernels, cost))
        total = total + cost * weight
    return CostTable("mg", levels, total)


def n_halo_schedule(L: int, fine: int = 4, mid: int = 4, coarse: int = 2) -> dict:
    """Halo exchanges per iteration on each level ``1..L``."""
    if L == 1:
        return {1: fine}
    sched = {level: mid for level in range(2, L)}
    sched[1] = coarse
    sched[L] = fine
    return sched


def ratio_R(solver: str, n_x: int, L: int = 5, n_halo=None, halosize: int = 1,
            element_size: int = 8, fine_only: bool = False,
            n_coarse_smooth: int = 2, fine: str = "table") -> float:
    """Communication/calculation traffic ratio for a local ``n_x x n_x`` grid.

    Summed over levels: halo values sent ``2 (n_x + n_y) halosize n_halo``
    against cached memory references ``n_x n_y Mem^(C)``, both scaled by the
    element size (which therefore cancels).  ``n_halo`` is an int (every
    level) or a mapping ``level -> count``; the default is 1 for CG and
    :func:`n_halo_schedule` for multigrid.  ``fine_only`` restricts the
    multigrid sum to the finest level.
    """
    if solver == "cg":
        nh = 1 if n_halo is None else (n_halo if isinstance(n_halo, int) else n_halo[1])
        comm = 2 * (n_x + n_x) * halosize * nh * element_size
        calc = n_x * n_x * cost_table("cg").total.mem_cached * element_size
        return comm / calc
    table = cost_table("mg", L, n_coarse_smooth, fine)
    if n_halo is None:
        sched = n_halo_schedule(L)
    elif isinstance(n_halo, int):
        sched = {level: n_halo for level in range(1, L + 1)}
    else:
        sched = dict(n_halo)
    comm = calc = 0.0
    for lc in table.levels:
        if fine_only and lc.level != L:
            continue
        n_l = n_x / 2 ** (L - lc.level)
        comm += 2 * (n_l + n_l) * halosize * sched[lc.level] * element_size
        calc += n_l * n_l * lc.cost.mem_cached * element_size
    return comm / calc


def global_dof(p: int, local_nx: int, n_z: int) -> int:
    """Unknowns of a weak-scaling run: ``p`` square ``local_nx^2 x n_z`` subdomains."""
    return p * local_nx * local_nx * n_z


def predicted_overhead(R: float, bw_mem: float, bw_mpi: float) -> float:
    """Relative communication overhead ``R * BW_mem / BW_MPI``."""
    if bw_mem <= 0 or bw_mpi <= 0:
        raise ValueError("bandwidths must be positive")
    return R * bw_mem / bw_mpi


TABLE3_SIZES = (128, 256, 512, 768)
# R x 10^4, halosize 1, double precision
TABLE3_GOLDEN = {
    "cg": (20.8, 10.4, 5.2, 3.5),
    "mg": (80.5, 40.2, 20.1, 13.4),
    "mg_fine": (54.3, 27.2, 13.6, 9.1),
}


def table3(sizes=TABLE3_SIZES, L: int = 5, n_halo=None) -> dict:
    """``R x 10^4`` rows keyed like :data:`TABLE3_GOLDEN`."""
    cg_halo = n_halo if isinstance(n_halo, int) else None
    fine_halo = n_halo if n_halo is not None else {L: 4}
    return {
        "cg": tuple(1e4 * ratio_R("cg", n, n_halo=cg_halo) for n in sizes),
        "mg": tuple(1e4 * ratio_R("mg", n, L, n_halo) for n in sizes),
        "mg_fine": tuple(1e4 * ratio_R("mg", n, L, fine_halo, fine_only=True)
                         for n in sizes),
    }


class PerfCounters:
    """Per-kernel tallies of cells swept; FLOPs and memory follow from the
    per-cell constants.  Names containing ``(`` mark work outside the
    iteration loop."""

    def __init__(self):
        self.cells = Counter()
        self.by_level = Counter()
        self.iterations = 0

    def record(self, kernel: str, cells: int, level: int | None = None) -> None:
        self.cells[kernel] += cells
        if level is not None:
            self.by_level[(kernel, level)] += cells

    def reset(self) -> None:
        self.cells.clear()
        self.by_level.clear()
        self.iterations = 0

    def merge(self, other: "PerfCounters") -> "PerfCounters":
        self.cells.update(other.cells)
        self.by_level.update(other.by_level)
        self.iterations = max(self.iterations, other.iterations)
        return self

    def totals(self, loop_only: bool = True) -> KernelCost:
        total = _ZERO
        for name, cells in self.cells.items():
            if loop_only and "(" in name:
                continue
            total = total + KERNEL_COSTS[name] * cells
        return total


class CounterReport(NamedTuple):
    measured: KernelCost
    analytic: KernelCost
    rel_error: float
    tolerance: float
    ok: bool

    def lines(self):
        m, a = self.measured, self.analytic
        status = "ok" if self.ok else "MISMATCH"
        return [f"measured FLOPs/cell/iter {m.flops:.3f} vs analytic {a.flops:.3f} "
                f"(rel. error {self.rel_error:.2%}, tolerance {self.tolerance:.0%}) {status}",
                f"measured Mem/cell/iter {m.mem:.3f} vs {a.mem:.3f}; "
                f"Mem(C) {m.mem_cached:.3f} vs {a.mem_cached:.3f}"]


def validate_counters(counters: PerfCounters, fine_cells: int, table: CostTable,
                      tolerance: float | None = None) -> CounterReport:
    """Compare measured per-cell, per-iteration work with the analytic table.

    CG must match exactly; multigrid within 2% unless ``tolerance`` is given.
    A run with zero iterations reports zero measured work.
    """
    if tolerance is None:
        tolerance = 0.0 if table.solver == "cg" else 0.02
    it = counters.iterations
    if it == 0 or fine_cells == 0:
        measured = _ZERO
    else:
        measured = counters.totals() * (1.0 / (fine_cells * it))
    ref = table.total.flops
    rel = abs(measured.flops - ref) / ref if ref else 0.0
    ok = rel <= tolerance + 1e-12 if it else True
    return CounterReport(measured, table.total, rel if it else 0.0, tolerance, ok)


def write_cost_csv(table: CostTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["kernel", "level", "flops", "mem", "mem_cached"])
    for kernel, level, fl, mem, memc in table.rows():
        w.writerow([kernel, level, _fmt(fl), _fmt(mem), _fmt(memc)])


def write_ratio_csv(rows: dict, sizes, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["solver"] + [str(n) for n in sizes])
    for name, values in rows.items():
        w.writerow([name] + [f"{v:.1f}" for v in values])


def _fmt(x) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")
