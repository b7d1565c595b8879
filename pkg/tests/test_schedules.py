"""Keep-ratio schedules: raw profiles, scaling, caps, quota rounding."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prunelab.errors import AlignmentError, DomainError, InfeasibleSparsityError
from prunelab.models import ArchFamily, LayerSpec
from prunelab.pruning import Mask, round_half_up
from prunelab.schedules import (
    OUTPUT_KEEP_RATIO,
    SCHEDULE_KINDS,
    KeepRatioSchedule,
    ablation_schedule,
    extract_schedule,
    retained_budget,
    schedule_by_name,
    smart_ratio,
    smart_raw_weights,
)


def test_raw_weights_plain():
    assert smart_raw_weights(4, ArchFamily.PLAIN) == [20.0, 12.0, 6.0]
    assert smart_raw_weights(5, ArchFamily.PLAIN) == [30.0, 20.0, 12.0, 6.0]


def test_raw_weights_fast_decay():
    raws = smart_raw_weights(4, ArchFamily.FAST_DECAY)
    assert np.allclose(raws, [20.0, 3.0, 6.0 / 9.0], atol=1e-12, rtol=0)


def test_smart_ratio_uniform_sizes_scale_factor_case():
    # hidden budget 68 over raw-weighted mass 6800 scales raws by 0.01
    sched = smart_ratio([100, 100, 100, 100, 50], None, 1.0 - 83.0 / 450.0)
    assert np.allclose(sched.ratios, [0.30, 0.20, 0.12, 0.06, 0.3], atol=1e-12, rtol=0)
    assert sched.quotas == (30, 20, 12, 6, 15)


def test_smart_ratio_cap_pushes_surplus_deeper():
    sched = smart_ratio([10, 100, 40], None, 1.0 - 112.0 / 150.0)
    assert sched.quotas == (10, 90, 12)
    assert np.allclose(sched.ratios, [1.0, 0.9, 0.3], atol=1e-12, rtol=0)


def test_smart_ratio_surplus_can_reach_the_output_layer():
    sched = smart_ratio([2, 4, 100], None, 0.05)
    assert sched.quotas == (2, 4, 95)
    assert sched.total_kept == retained_budget([2, 4, 100], 0.05)


def test_smart_ratio_output_pin_in_easy_case():
    sched = smart_ratio([100, 100, 100, 100, 50], None, 1.0 - 83.0 / 450.0)
    assert sched.quotas[-1] == round_half_up(OUTPUT_KEEP_RATIO * 50)


def test_smart_ratio_hidden_ratios_decrease_with_depth():
    sched = smart_ratio([384, 1152, 4608, 384], None, 0.9)
    hidden = sched.ratios[:-1]
    assert all(a > b for a, b in zip(hidden, hidden[1:]))


def test_smart_ratio_infeasible_when_budget_below_output_pin():
    with pytest.raises(InfeasibleSparsityError):
        smart_ratio([4, 4, 100], None, 0.95)


def test_schedule_input_validation():
    with pytest.raises(DomainError):
        smart_ratio([100], None, 0.5)
    with pytest.raises(DomainError):
        smart_ratio([100, 50], None, 0.0)
    with pytest.raises(DomainError):
        smart_ratio([100, 50], None, 1.0)
    with pytest.raises(DomainError):
        smart_ratio([100, 0], None, 0.5)
    specs = (LayerSpec("dense", 4, 4), LayerSpec("dense", 4, 2, is_output=True))
    with pytest.raises(AlignmentError):
        smart_ratio([16, 8, 4], specs, 0.5)


def test_ablation_linear_and_cubic_raw_profiles():
    lin = ablation_schedule("linear", [100, 100, 100, 50], None, 0.9)
    cub = ablation_schedule("cubic", [100, 100, 100, 50], None, 0.9)
    # proportionality survives uniform sizes: ratios follow the raw profile
    assert lin.ratios[0] / lin.ratios[2] == pytest.approx(4.0 / 2.0, rel=0.15)
    assert cub.ratios[0] / cub.ratios[2] == pytest.approx(64.0 / 8.0, rel=0.3)


def test_ablation_balanced_equalizes_hidden_quotas():
    bal = ablation_schedule("balanced", [200, 200, 200, 50], None, 0.9)
    hidden = bal.quotas[:-1]
    assert max(hidden) - min(hidden) <= 1


def test_ablation_ascending_reverses_the_hidden_profile():
    asc = ablation_schedule("ascending", [100, 100, 100, 100, 50], None, 1.0 - 83.0 / 450.0)
    assert np.allclose(asc.ratios[:-1], [0.06, 0.12, 0.20, 0.30], atol=1e-12, rtol=0)
    assert asc.quotas == (6, 12, 20, 30, 15)


def test_ablation_ascending_keeps_budget_on_uneven_sizes():
    sizes = [384, 1152, 4608, 384]
    asc = ablation_schedule("ascending", sizes, None, 0.9)
    assert asc.total_kept == retained_budget(sizes, 0.9)


def test_schedule_by_name_dispatch_and_rejection():
    sizes = [100, 100, 50]
    assert schedule_by_name("smart", sizes, None, 0.9).quotas == smart_ratio(
        sizes, None, 0.9
    ).quotas
    with pytest.raises(DomainError):
        schedule_by_name("extracted", sizes, None, 0.9)
    with pytest.raises(DomainError):
        schedule_by_name("golden", sizes, None, 0.9)


def test_schedule_kind_registry():
    assert set(SCHEDULE_KINDS) == {
        "smart", "balanced", "ascending", "linear", "cubic", "extracted"
    }


def test_extract_schedule_reads_counts_off_a_mask():
    mask = Mask((np.array([1.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0])))
    sched = extract_schedule(mask)
    assert sched.quotas == (2, 1)
    assert sched.ratios == (pytest.approx(2 / 3), pytest.approx(1 / 4))
    assert sched.target_sparsity == pytest.approx(1.0 - 3.0 / 7.0)


def test_keep_ratio_schedule_validates_lengths():
    with pytest.raises(AlignmentError):
        KeepRatioSchedule((0.5, 0.5), (1,), 0.5)


@settings(deadline=None, max_examples=80)
@given(st.data())
def test_every_schedule_kind_hits_the_budget_exactly(data):
    depth = data.draw(st.integers(min_value=2, max_value=6))
    sizes = data.draw(
        st.lists(st.integers(min_value=10, max_value=2000), min_size=depth, max_size=depth)
    )
    p = data.draw(st.floats(min_value=0.3, max_value=0.97))
    family = data.draw(st.sampled_from(list(ArchFamily)))
    budget = retained_budget(sizes, p)
    if budget < OUTPUT_KEEP_RATIO * sizes[-1]:
        with pytest.raises(InfeasibleSparsityError):
            smart_ratio(sizes, None, p, family)
        return
    for kind in ("smart", "balanced", "ascending", "linear", "cubic"):
        sched = schedule_by_name(kind, sizes, None, p, family)
        assert sched.total_kept == budget, (kind, sizes, p)
        assert all(0 <= q <= m for q, m in zip(sched.quotas, sizes)), (kind, sizes, p)
        assert all(
            q == pytest.approx(r * m, abs=1e-9)
            for q, r, m in zip(sched.quotas, sched.ratios, sizes)
        )
