import math

import numpy as np
import pytest
from scipy import special

from defectgas import (
    BetaFunction,
    ConfigError,
    Cylinder,
    DirectionLaw,
    Displacement,
    InsufficientSamples,
    LimitLawSpec,
    MarkLaw,
    OffsetClass,
    comparison_lemma_check,
    estimate_F,
    estimate_Fbar,
    siegel_veech_check,
    tail_bound_check,
    tail_constant,
)
from defectgas.geometry import Ball
from defectgas.limit_process import count_samples, marked_counts

GRID = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
IRR = OffsetClass.irrational()


def integer_law(p=1.0, disp=None, origin=None, beta=None):
    return LimitLawSpec(OffsetClass.integer(), MarkLaw(p, disp or Displacement.none()), origin or MarkLaw(1.0),
                        DirectionLaw.sphere(2), beta or BetaFunction.forward(), 2)


def test_law_spec_strictness():
    with pytest.raises(ConfigError):
        LimitLawSpec(OffsetClass.integer(), MarkLaw(1.0))
    with pytest.raises(ConfigError):
        LimitLawSpec(IRR, MarkLaw(1.0), origin_law=MarkLaw(1.0))
    with pytest.raises(ConfigError):
        LimitLawSpec(IRR, MarkLaw(1.0), direction_law=DirectionLaw.sphere(3))
    law = integer_law(0.7, Displacement.ball(0.3))
    assert LimitLawSpec.from_dict(law.to_dict()).to_dict() == law.to_dict()


def test_survival_at_zero():
    for law in (integer_law(0.7, Displacement.ball(0.3)), LimitLawSpec(IRR, MarkLaw(0.5))):
        assert estimate_F(law, GRID, 2000, randomness=1).at(0.0) == 1.0


def test_too_few_replicates():
    with pytest.raises(InsufficientSamples):
        estimate_F(LimitLawSpec(IRR), GRID, 50)


def test_degenerate_marking_equals_unmarked():
    a = estimate_F(LimitLawSpec(IRR, MarkLaw(1.0)), GRID, 5000, randomness=2)
    b = estimate_Fbar(IRR, GRID, 5000, randomness=2)
    assert np.array_equal(a.survival, b.survival)


def test_integer_class_nesting():
    for seed in range(3):
        s = estimate_Fbar(OffsetClass.integer(), GRID, 3000, randomness=seed).survival
        assert np.all(np.diff(s) <= 0)


def test_integer_class_vanishes_beyond_one():
    # {|x1| < T, |x2| < 1} has area 4T > 4 for T > 1, so by Minkowski some +-v lands in Z(T, 1)
    s = estimate_Fbar(OffsetClass.integer(), np.array([2.0, 4.0]), 5000, randomness=3).survival
    assert np.all(s == 0.0)


def test_short_cylinder_hit_probability():
    counts = count_samples(Cylinder(0.1, 1.0), 100_000, offset_class=OffsetClass.integer(), randomness=4)
    p = np.mean(counts >= 1)
    assert p <= 0.2 + 3 * math.sqrt(p * (1 - p) / len(counts))


def test_siegel_veech_empty_marking():
    law = integer_law(0.0)
    counts = marked_counts(law, Cylinder(5.0, 1.0), 2000, randomness=5)
    assert counts.sum() == 0
    rep = siegel_veech_check(law, Cylinder(5.0, 1.0), 2000, randomness=5)
    assert rep.estimate == 0.0 and rep.passed


def test_siegel_veech_keep_fraction():
    rep = siegel_veech_check(integer_law(0.7), Cylinder(5.0, 1.0), 100_000, randomness=6)
    assert rep.target == pytest.approx(7.0)
    assert rep.passed, rep


def test_siegel_veech_shifted_marks():
    rep = siegel_veech_check(integer_law(1.0, Displacement.ball(0.3)), Cylinder(5.0, 1.0), 100_000, randomness=7)
    assert rep.target == pytest.approx(10.0)
    assert rep.passed, rep


def test_origin_excluded_with_shifted_origin_law():
    law = integer_law(1.0, origin=MarkLaw(1.0, Displacement.fixed([1.0, 0.0])), beta=BetaFunction.zero())
    rep = siegel_veech_check(law, Ball(np.zeros(2), 0.5), 100_000, randomness=8)
    assert rep.target == pytest.approx(math.pi / 4)
    assert rep.passed, rep


def test_comparison_without_shifts_is_equality():
    rep = comparison_lemma_check(integer_law(1.0), [0.5, 1.0, 2.0], 5000, randomness=9)
    assert np.array_equal(rep.F, rep.Fbar_scaled)
    assert rep.passed


def test_comparison_with_shifts():
    rep = comparison_lemma_check(integer_law(1.0, Displacement.ball(0.3)), [0.5, 1.0, 2.0], 50_000, randomness=10)
    assert rep.passed, rep.to_dict()


def test_removals_dominate_full_lattice():
    full = estimate_F(LimitLawSpec(IRR, MarkLaw(1.0)), GRID, 20_000, randomness=11)
    thin = estimate_F(LimitLawSpec(IRR, MarkLaw(0.6)), GRID, 20_000, randomness=11)
    assert np.all(thin.survival >= full.survival)


def test_tail_constants():
    assert tail_constant(2, 0.0) == pytest.approx(1 / math.pi**2, rel=1e-14)
    assert tail_constant(3, 0.0) == pytest.approx(math.pi / (48 * special.zeta(3)), rel=1e-14)
    assert tail_constant(2, 0.5) == pytest.approx(tail_constant(2, 0.0) / 1.5, rel=1e-14)


def test_tail_check_requires_large_T():
    with pytest.raises(ConfigError):
        tail_bound_check(2, 0.0, 5.0, 1000)


def test_tail_check_reports_ratio():
    rep = tail_bound_check(2, 0.0, 20.0, 100_000, randomness=12)
    assert rep.paper_bound == pytest.approx(1 / math.pi**2)
    assert rep.ratio == pytest.approx(rep.estimate / rep.paper_bound)
    assert rep.std_error > 0


def test_worker_independence():
    law = integer_law(0.7, Displacement.ball(0.3))
    a = estimate_F(law, GRID, 6000, randomness=13, workers=1, chunk=1000)
    b = estimate_F(law, GRID, 6000, randomness=13, workers=3, chunk=1000)
    assert a.to_csv() == b.to_csv()
