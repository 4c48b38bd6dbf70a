import math

import pytest

from abrsim.config import EricaParams, ScenarioConfig
from abrsim.engine import NS_PER_MS
from abrsim.erica import (
    EricaEngine,
    average_overload_scheme1,
    average_overload_scheme2,
    queue_control_factor,
    update_activity,
)

LINK_RATE = ScenarioConfig().link_cell_rate     # 366792.45 cells/s
Q0 = 500e-6 * LINK_RATE                         # ~183.4 cells


def plus_params(**kw):
    return EricaParams(scheme="erica_plus", **kw)


# -- queue control curve -------------------------------------------------------


def test_factor_at_zero_queue_is_b():
    p = plus_params()
    assert queue_control_factor(0, p, LINK_RATE) == pytest.approx(1.05)


def test_factor_at_target_queue_is_one():
    p = plus_params()
    assert queue_control_factor(Q0, p, LINK_RATE) == pytest.approx(1.0)


def test_factor_floor_for_huge_queue():
    p = plus_params()
    assert queue_control_factor(1e9, p, LINK_RATE) == pytest.approx(0.5)


def test_factor_monotone_nonincreasing_and_bounded():
    p = plus_params()
    prev = None
    for q in range(0, int(10 * Q0) + 1):
        f = queue_control_factor(q, p, LINK_RATE)
        assert p.qdlf <= f <= p.b
        if prev is not None:
            assert f <= prev + 1e-12
        prev = f


def test_factor_continuous_at_branch_point():
    p = plus_params()
    below = queue_control_factor(math.floor(Q0), p, LINK_RATE)
    above = queue_control_factor(math.ceil(Q0), p, LINK_RATE)
    assert queue_control_factor(Q0 - 1, p, LINK_RATE) >= below >= above
    assert abs(below - above) < 1e-3


# -- activity decay ----------------------------------------------------------------


def test_activity_decay_when_idle():
    assert update_activity(1.0, False, 0.9) == pytest.approx(0.9)


def test_activity_reset_when_seen():
    assert update_activity(0.81, True, 0.9) == 1.0


def test_activity_closed_form_after_k_idle_intervals():
    a = 1.0
    for k in range(1, 30):
        a = update_activity(a, False, 0.9)
        assert a == pytest.approx(0.9 ** k)


# -- overload averaging -----------------------------------------------------------------


def test_scheme1_blend():
    assert average_overload_scheme1(1.0, 2.0, 0.2) == pytest.approx(1.2)


def test_scheme1_reset_and_reseed():
    assert average_overload_scheme1(1.0, 0.0, 0.2) is None
    assert average_overload_scheme1(1.0, math.inf, 0.2) is None
    assert average_overload_scheme1(None, 1.5, 0.2) == pytest.approx(1.5)


def test_scheme2_keeps_outliers():
    avg_in, avg_cap, z = average_overload_scheme2(100.0, 100.0, 0.0, 100.0, 0.2)
    assert avg_in == pytest.approx(80.0)
    assert z == pytest.approx(0.8)


def test_scheme2_fixed_point():
    avg_in = avg_cap = None
    for _ in range(100):
        avg_in, avg_cap, z = average_overload_scheme2(avg_in, avg_cap, 70.0, 70.0, 0.2)
    assert z == pytest.approx(1.0)


def test_scheme2_ratio_of_averages():
    avg_in, avg_cap, z = average_overload_scheme2(120.0, 100.0, 120.0, 100.0, 0.2)
    assert z == pytest.approx(1.2)


def test_scheme2_identity_vs_independent_recurrences():
    """The engine's scheme-2 overload equals two independently-run EWMAs."""
    inputs = [100.0, 0.0, 250.0, 90.0, 0.0, 500.0, 130.0, 80.0]
    caps = [330.0, 330.0, 70.0, 330.0, 0.0, 330.0, 70.0, 330.0]
    alpha = 0.2

    avg_in = avg_cap = None
    got = []
    for i, c in zip(inputs, caps):
        avg_in, avg_cap, z = average_overload_scheme2(avg_in, avg_cap, i, c, alpha)
        got.append(z)

    # independent scalar recurrences
    ref_in = inputs[0]
    ref_cap = caps[0]
    expect = [ref_in / ref_cap]
    for i, c in zip(inputs[1:], caps[1:]):
        ref_in = alpha * i + (1 - alpha) * ref_in
        ref_cap = alpha * c + (1 - alpha) * ref_cap
        expect.append(ref_in / ref_cap if ref_cap > 0 else math.inf)
    assert got == pytest.approx(expect)


def test_scheme2_never_zero_or_infinite_after_traffic():
    avg_in = avg_cap = None
    zs = []
    seq = [(100.0, 330.0), (0.0, 330.0), (0.0, 330.0), (400.0, 0.0), (50.0, 330.0)]
    for i, c in seq:
        avg_in, avg_cap, z = average_overload_scheme2(avg_in, avg_cap, i, c, 0.2)
        zs.append(z)
    for z in zs:
        assert 0.0 < z < math.inf


# -- engine: intervals and allocation ----------------------------------------------------


def make_engine(n=15, **kw):
    return EricaEngine(plus_params(**kw), LINK_RATE, n)


def test_interval_ends_on_cell_count():
    eng = make_engine()
    done = False
    for i in range(100):
        done = eng.note_abr_cell(i % 15, False, None)
    assert done


def test_interval_not_ended_below_count():
    eng = make_engine()
    for i in range(99):
        assert not eng.note_abr_cell(i % 15, False, None)


def test_finalize_computes_rates_and_overload():
    eng = make_engine(n=1)
    for _ in range(50):
        eng.note_abr_cell(0, False, None)
    # 50 cells over 1 ms with empty queue; target = b * link
    assert eng.finalize_interval(1 * NS_PER_MS, 0)
    assert eng.z_inst == pytest.approx(50_000 / (1.05 * LINK_RATE))
    assert eng.intervals_completed == 1


def test_zero_duration_interval_skipped():
    eng = make_engine()
    eng.note_abr_cell(0, False, None)
    assert not eng.finalize_interval(0, 0)
    assert eng.intervals_completed == 0


def test_erica_mode_target_is_u_times_capacity():
    eng = EricaEngine(EricaParams(scheme="erica", u=0.9), LINK_RATE, 15)
    eng.finalize_interval(1 * NS_PER_MS, 0)   # no VBR seen
    assert eng.target_capacity == pytest.approx(0.9 * LINK_RATE)


def test_vbr_saturating_link_gives_infinite_overload():
    eng = make_engine()
    for _ in range(400):
        eng.note_vbr_cell()
    eng.note_abr_cell(0, False, None)
    eng.finalize_interval(1 * NS_PER_MS, 0)
    assert math.isinf(eng.z_inst)


def test_balanced_load_gives_unit_overload():
    eng = EricaEngine(EricaParams(scheme="erica", u=1.0), LINK_RATE, 15)
    # one interval of exactly link-rate input: z == 1
    n_cells = 367
    dur = int(n_cells / LINK_RATE * 1e9)
    eng.params.interval_cells = 10**9
    for i in range(n_cells):
        eng.note_abr_cell(i % 15, False, None)
    eng.finalize_interval(dur, 0)
    assert eng.z_inst == pytest.approx(1.0, rel=1e-3)


def test_no_input_gives_zero_overload():
    eng = make_engine()
    eng.finalize_interval(1 * NS_PER_MS, 0)
    assert eng.z_inst == 0.0


def test_activity_count_without_averaging():
    eng = make_engine()
    for vc in range(15):
        eng.note_abr_cell(vc, False, None)
    eng.finalize_interval(1 * NS_PER_MS, 0)
    assert eng.n_active == 15.0


def test_activity_clamped_to_one():
    eng = make_engine(na_averaging=True, alpha_n=0.9)
    eng.note_abr_cell(3, False, None)
    eng.finalize_interval(1 * NS_PER_MS, 0)
    # several idle intervals: total activity decays below 1 but n_active clamps
    for k in range(2, 40):
        eng.finalize_interval(k * NS_PER_MS, 0)
    assert eng.n_active == 1.0


def test_fractional_activity_sum_allowed():
    eng = make_engine(na_averaging=True, alpha_n=0.9)
    for vc in range(8):
        eng.note_abr_cell(vc, False, None)
    eng.finalize_interval(1 * NS_PER_MS, 0)
    eng.note_abr_cell(0, False, None)
    eng.finalize_interval(2 * NS_PER_MS, 0)
    assert eng.n_active == pytest.approx(1.0 + 7 * 0.9)


def test_explicit_rate_before_first_interval():
    eng = make_engine(n=15)
    assert eng.explicit_rate(0) == pytest.approx(eng.target_capacity / 15)


def test_explicit_rate_allocation_rule():
    eng = make_engine(n=10)
    # forge a finalized state: target 100, n_active 10, z 2, ccr 30
    eng.intervals_completed = 1
    eng.target_capacity = 100.0
    eng.fairshare = 10.0
    eng.z_alloc = 2.0
    eng.ccr[3] = 30.0
    assert eng.explicit_rate(3) == pytest.approx(15.0)


def test_explicit_rate_fixed_point():
    eng = make_engine(n=10)
    eng.intervals_completed = 1
    eng.target_capacity = 100.0
    eng.fairshare = 10.0
    eng.z_alloc = 1.0
    eng.ccr[0] = 10.0
    assert eng.explicit_rate(0) == pytest.approx(10.0)


def test_explicit_rate_capped_at_target():
    eng = make_engine(n=10)
    eng.intervals_completed = 1
    eng.target_capacity = 100.0
    eng.fairshare = 10.0
    eng.z_alloc = 0.1
    eng.ccr[0] = 50.0     # vcshare 500 > target
    assert eng.explicit_rate(0) == pytest.approx(100.0)


def test_explicit_rate_without_ccr_is_fairshare():
    eng = make_engine(n=10)
    eng.intervals_completed = 1
    eng.target_capacity = 100.0
    eng.fairshare = 10.0
    eng.z_alloc = 2.0
    assert eng.explicit_rate(5) == pytest.approx(10.0)


def test_zero_overload_allocates_whole_target():
    # an underestimated load (z = 0) must not divide by zero; it allocates high
    eng = make_engine(n=10)
    eng.intervals_completed = 1
    eng.target_capacity = 100.0
    eng.fairshare = 10.0
    eng.z_alloc = 0.0
    eng.ccr[0] = 5.0
    assert eng.explicit_rate(0) == pytest.approx(100.0)


def test_scheme1_reset_holds_last_defined_value():
    eng = make_engine(z_averaging="scheme1", alpha_z=0.2, interval_cells=10**9)
    # interval 1: finite overload seeds the average
    for _ in range(100):
        eng.note_abr_cell(0, False, None)
    eng.finalize_interval(1 * NS_PER_MS, 0)
    z1 = eng.z_alloc
    assert z1 > 0
    # interval 2: no input at all -> outlier resets the average, allocation holds
    eng.finalize_interval(2 * NS_PER_MS, 0)
    assert eng.z_avg is None
    assert eng.z_alloc == z1
    # interval 3: finite sample re-seeds rather than blending
    for _ in range(100):
        eng.note_abr_cell(0, False, None)
    eng.finalize_interval(3 * NS_PER_MS, 0)
    assert eng.z_avg == pytest.approx(eng.z_inst)
