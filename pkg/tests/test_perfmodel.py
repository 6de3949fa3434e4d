import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisolve.perfmodel import (KERNEL_COSTS, TABLE3_GOLDEN, TABLE3_SIZES, KernelCost,
                                PerfCounters, cost_table, global_dof, n_halo_schedule,
                                predicted_overhead, ratio_R, table3, validate_counters,
                                write_cost_csv, write_ratio_csv)


def test_kernel_constants_sane():
    for cost in KERNEL_COSTS.values():
        assert 0 <= cost.mem_cached <= cost.mem
        assert cost.flops >= 0


def test_cg_total_exact():
    assert tuple(cost_table("cg").total) == (54, 24, 15)


def test_mg_aggregate():
    total = cost_table("mg", 5).total
    for got, ref in zip(total, (149.4, 67.2, 29.6)):
        assert abs(got - ref) <= 0.002 * ref
    assert total.mem_cached == pytest.approx(29.6, abs=0.06)


def test_mg_aggregate_by_hand():
    # fine 2S+2R+N, mid RS+R+P+S, coarsest RS+S, weights 4^-(L-l)
    fine = KernelCost(122, 53, 23)
    mid = KernelCost(83, 43, 20)
    coarse = KernelCost(54, 29, 14)
    ref = fine + mid * (1 / 4 + 1 / 16 + 1 / 64) + coarse * (1 / 256)
    assert cost_table("mg", 5).total == pytest.approx(ref)


def test_mg_single_level_and_compositions():
    assert tuple(cost_table("mg", 1).total) == (2 * 37 + 2, 2 * 17 + 1, 2 * 8 + 1)
    c = cost_table("mg", 2)
    assert tuple(c.levels[1].cost) == (54, 29, 14)
    assert cost_table("mg", 5, fine="kernel_sum").levels[0].cost == KernelCost(105, 49, 23)
    assert cost_table("mg", 5, fine="executed").levels[0].cost == KernelCost(128, 58, 26)
    with pytest.raises(ValueError):
        cost_table("bicg")


def test_ratio_examples():
    assert round(1e4 * ratio_R("cg", 256), 1) == 10.4
    assert round(1e4 * ratio_R("mg", 128, 5, {5: 4}, fine_only=True), 1) == 54.3
    assert ratio_R("cg", 512) == pytest.approx(ratio_R("cg", 256) / 2)


def test_table3_goldens():
    got = table3()
    for name, ref in TABLE3_GOLDEN.items():
        for value, r in zip(got[name], ref):
            assert abs(round(value, 1) - r) <= 0.1 + 1e-9


def test_nhalo_zero():
    assert all(v == 0 for row in table3(n_halo=0).values() for v in row)


def test_schedule():
    assert n_halo_schedule(5) == {1: 2, 2: 4, 3: 4, 4: 4, 5: 4}
    assert n_halo_schedule(1) == {1: 4}


@given(n=st.integers(8, 4096), size=st.sampled_from([4, 8, 16]))
def test_ratio_scaling_properties(n, size):
    assert ratio_R("cg", n, element_size=size) == pytest.approx(ratio_R("cg", n))
    assert ratio_R("mg", 32 * n, element_size=size) == pytest.approx(ratio_R("mg", 32 * n))
    assert ratio_R("cg", 2 * n) == pytest.approx(ratio_R("cg", n) / 2)


def test_predicted_overhead():
    assert predicted_overhead(5.2e-4, 100.0, 1.0) == pytest.approx(0.052)
    assert predicted_overhead(0.3, 2.0, 2.0) == 0.3
    rho_mg = predicted_overhead(ratio_R("mg", 512), 100.0, 1.0)
    assert rho_mg == pytest.approx(0.20, abs=0.01)
    with pytest.raises(ValueError):
        predicted_overhead(1.0, 0.0, 1.0)


def test_global_dof():
    assert global_dof(16, 256, 128) == pytest.approx(1.34e8, rel=0.005)


def test_counters_and_validation():
    c = PerfCounters()
    c.record("SpMV", 100)
    c.record("Tridiag", 100)
    c.record("Tridiag(setup)", 100)
    c.iterations = 1
    assert c.totals().flops == 5400
    assert c.totals(loop_only=False).flops == 7600
    report = validate_counters(c, 100, cost_table("cg"))
    assert report.ok and report.rel_error == 0
    c.record("SpMV", 1)
    assert not validate_counters(c, 100, cost_table("cg")).ok
    other = PerfCounters()
    other.record("SpMV", 5, level=1)
    c.merge(other)
    assert c.cells["SpMV"] == 106 and other.by_level[("SpMV", 1)] == 5
    c.reset()
    assert not c.cells and c.iterations == 0


def test_mg_counter_tolerance():
    c = PerfCounters()
    c.iterations = 1
    c.record("Smooth", 4)  # 148 FLOPs on one fine cell: within 2% of 149.4
    assert validate_counters(c, 1, cost_table("mg")).ok


def test_csv_writers():
    buf = io.StringIO()
    write_cost_csv(cost_table("cg"), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "kernel,level,flops,mem,mem_cached"
    assert lines[-1] == "Total,all,54,24,15"
    buf = io.StringIO()
    write_ratio_csv(table3(), TABLE3_SIZES, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "solver,128,256,512,768"
    assert lines[1] == "cg,20.8,10.4,5.2,3.5"
