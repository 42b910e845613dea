"""Gauge family tests.

Oracles: hand-evaluated formulas at radii where the iterated logs collapse
to 1 or e, exact ratio algebra for doubling, and direct term formulas for
the dyadic series.
"""

import math

import numpy as np
import pytest

from stabletrees import DomainError
from stabletrees.gauges import (
    CONVERGES,
    DIVERGES,
    NOT_DOUBLING,
    UNKNOWN,
    CustomTable,
    LevelCritical,
    LevelCritical2,
    MassCritical,
    MassPacking,
    PureExponent,
    doubling_constant,
    format_gauge,
    gauge_domain_max,
    gauge_eval,
    gauge_profile,
    parse_gauge,
    series_classify,
    series_partial,
    series_start,
)

E = math.e


class TestEval:
    def test_identity_gauge(self):
        assert gauge_eval(PureExponent(1.0), 2.0, 0.25) == 0.25

    def test_level_critical_at_nice_radius(self):
        # r = e^-e: log(1/r) = e, loglog(1/r) = 1
        r = math.exp(-E)
        got = gauge_eval(LevelCritical(p=1, theta=0.0), 2.0, r)
        assert got == pytest.approx(r / math.sqrt(E), rel=1e-14)
        # theta enters through the loglog factor, which is 1 here
        got2 = gauge_eval(LevelCritical(p=1, theta=3.0), 2.0, r)
        assert got2 == pytest.approx(got, rel=1e-14)

    def test_mass_packing_at_nice_radius(self):
        r = math.exp(-E)
        assert gauge_eval(MassPacking(), 2.0, r) == pytest.approx(
            math.exp(-2.0 * E), rel=1e-14
        )

    def test_log_log_power_families_at_nice_radius(self):
        r = math.exp(-E)
        # gamma = 2: exponents 1/(gamma-1) = gamma/(gamma-1) - 1 = 1
        assert gauge_eval(MassCritical(u=-2.0), 2.0, r) == pytest.approx(
            math.exp(1.0 - 2.0 * E), rel=1e-14
        )
        assert gauge_eval(LevelCritical2(u=5.0), 2.0, r) == pytest.approx(
            math.exp(1.0 - E), rel=1e-14
        )

    def test_custom_table_log_linear(self):
        g = CustomTable(radii=(1e-4, 1e-2, 1.0), values=(1e-8, 1e-4, 1.0))
        # table is r^2 at the knots; log-linear interpolation reproduces r^2
        assert gauge_eval(g, 1.5, 1e-3) == pytest.approx(1e-6, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            gauge_eval(LevelCritical(p=1, theta=1.0), 2.0, 0.5)  # loglog <= 0
        with pytest.raises(DomainError):
            gauge_eval(LevelCritical(p=2, theta=1.0), 2.0, 0.1)  # logloglog <= 0
        with pytest.raises(DomainError):
            gauge_eval(MassPacking(), 2.0, 0.4)
        with pytest.raises(DomainError):
            gauge_eval(PureExponent(2.0), 2.0, 1.0)
        with pytest.raises(DomainError):
            gauge_eval(PureExponent(2.0), 2.0, -0.1)

    def test_domain_thresholds(self):
        assert gauge_domain_max(LevelCritical(p=1, theta=0.0)) == pytest.approx(math.exp(-1.0))
        assert gauge_domain_max(LevelCritical(p=2, theta=0.0)) == pytest.approx(math.exp(-E))
        assert gauge_domain_max(MassPacking()) == pytest.approx(math.exp(-1.0))

    def test_monotone_and_vanishing(self):
        cases = [
            (PureExponent(0.7), 2.0),
            (LevelCritical(1, 3.0), 2.0),
            (LevelCritical(1, -3.0), 1.5),
            (LevelCritical(2, 1.0), 1.5),
            (MassPacking(), 1.5),
            (MassCritical(-2.0), 1.5),
            (LevelCritical2(-2.0), 2.0),
        ]
        for g, gamma in cases:
            hi = min(gauge_domain_max(g), math.exp(-E)) * 0.99
            radii, vals = gauge_profile(g, gamma, 1e-12, hi, points=500)
            assert np.all(np.diff(vals) > 0), (g, gamma)
            assert vals[0] < 1e-6
            assert np.all(vals > 0)

    def test_positive_loglog_power_monotone_deeper(self):
        # with a positive loglog power the monotone region starts deeper in
        radii, vals = gauge_profile(LevelCritical2(2.0), 2.0, 1e-12, math.exp(-4.0), points=500)
        assert np.all(np.diff(vals) > 0)


class TestDoubling:
    def test_pure_exponent_exact(self):
        for q in (0.5, 1.0, 2.0):
            got = doubling_constant(PureExponent(q), 2.0, 1e-9, 0.25)
            assert got == pytest.approx(2.0**q, rel=1e-12)

    def test_level_critical_finite(self):
        # ratio -> 2^(1/(gamma-1)) as r -> 0; worst case sits at r_max
        g = LevelCritical(1, 1.0)
        got = doubling_constant(g, 2.0, 1e-9, 0.1)
        worst = gauge_eval(g, 2.0, 0.2) / gauge_eval(g, 2.0, 0.1)
        assert got == pytest.approx(worst, rel=1e-9)
        assert math.isfinite(got)
        # deeper grid: slowly varying correction shrinks toward 1
        tight = doubling_constant(g, 2.0, 1e-12, 1e-6)
        assert 2.0 < tight < 2.2
        assert tight < got

    def test_custom_table_blowup(self):
        radii = np.geomspace(2e-3, 0.5, 200)
        g = CustomTable(radii=tuple(radii), values=tuple(np.exp(-1.0 / radii)))
        # g(2r)/g(r) = exp(1/(2r)), astronomically past any sane cap
        got = doubling_constant(g, 2.0, 2.5e-3, 0.2, cap=1e6)
        assert got == NOT_DOUBLING

    def test_preconditions(self):
        with pytest.raises(DomainError):
            doubling_constant(PureExponent(1.0), 2.0, 0.2, 0.1)
        with pytest.raises(DomainError):
            # r_max beyond r0/2
            doubling_constant(MassPacking(), 2.0, 1e-6, 0.3)
        with pytest.raises(DomainError):
            doubling_constant(PureExponent(1.0), 2.0, 1e-6, 0.25, points=100)


class TestSeriesPartial:
    def test_constant_terms(self):
        # exponent 1/(gamma-1) makes every pack-level term exactly 1
        for gamma in (1.5, 2.0):
            sums = series_partial(PureExponent(1.0 / (gamma - 1.0)), gamma, "PackLevel", 12)
            assert np.allclose(sums, np.arange(1, 13), atol=1e-12)

    def test_geometric_decay_bounded(self):
        # exponent 2/(gamma-1): terms 2^(-n*gamma/(gamma-1)), sums -> 1/3 at gamma=2
        sums = series_partial(PureExponent(2.0), 2.0, "PackLevel", 40)
        assert sums[-1] == pytest.approx(1.0 / 3.0, rel=1e-11)
        assert np.all(np.diff(sums) >= 0)
        assert np.all(np.diff(sums[:10]) > 0)

    def test_level_critical_terms_match_direct_formula(self):
        # gamma=2, p=1, theta=1: term_n = 1/((n log2) * log(n log2)^2)
        sums = series_partial(LevelCritical(1, 1.0), 2.0, "PackLevel", 64)
        n0 = series_start(LevelCritical(1, 1.0))
        n = np.arange(n0, n0 + 64)
        l1 = n * math.log(2.0)
        direct = np.cumsum(1.0 / (l1 * np.log(l1) ** 2))
        assert np.allclose(sums, direct, rtol=1e-12)

    def test_start_respects_domain(self):
        assert series_start(PureExponent(1.0)) == 1
        assert series_start(LevelCritical(1, 0.0)) == 2
        assert series_start(LevelCritical(2, 0.0)) == 4
        big = series_start(LevelCritical(3, 0.0))
        assert 2.0**-big < math.exp(-math.exp(E)) <= 2.0 ** -(big - 1)

    def test_cauchy_tail_for_convergent_pure_exponent(self):
        for gamma in (1.5, 2.0):
            q = 2.0 / (gamma - 1.0)
            sums = series_partial(PureExponent(q), gamma, "PackLevel", 60)
            inc = np.diff(sums)
            # geometric terms fall below 1e-12 well inside the window
            k = np.argmax(inc < 1e-12)
            assert k > 0
            assert np.all(inc[k:] < 1e-12)


class TestSeriesClassify:
    def test_level_critical_rule(self):
        assert series_classify(LevelCritical(1, 0.6), 2.0, "PackLevel") == CONVERGES
        assert series_classify(LevelCritical(1, 0.5), 2.0, "PackLevel") == DIVERGES

    def test_constant_terms_diverge(self):
        for gamma in (1.5, 2.0):
            g = PureExponent(1.0 / (gamma - 1.0))
            assert series_classify(g, gamma, "PackLevel") == DIVERGES

    def test_flip_exactly_at_critical_theta(self):
        for gamma in (1.5, 2.0):
            for p in (1, 2):
                crit = 1.0 / gamma
                for theta in np.linspace(crit - 0.5, crit + 0.5, 21):
                    got = series_classify(LevelCritical(p, float(theta)), gamma, "PackLevel")
                    want = CONVERGES if gamma * theta > 1.0 else DIVERGES
                    assert got == want

    def test_pure_exponent_all_kinds(self):
        gamma = 1.5
        b = 1.0 / (gamma - 1.0)
        assert series_classify(PureExponent(b + 0.1), gamma, "PackLevel") == CONVERGES
        assert series_classify(PureExponent(b - 0.1), gamma, "PackLevel") == DIVERGES
        assert series_classify(PureExponent(b - 0.1), gamma, "HausLevel") == CONVERGES
        assert series_classify(PureExponent(b + 0.1), gamma, "HausLevel") == DIVERGES
        assert series_classify(PureExponent(gamma * b - 0.1), gamma, "HausMass") == CONVERGES
        assert series_classify(PureExponent(gamma * b + 0.1), gamma, "HausMass") == DIVERGES

    def test_numeric_bertrand_cases(self):
        # haus-level terms for the log-log-power family reduce to
        # 1/(n log2 * log(n log2)^(u*(gamma-1))): converges iff u*(gamma-1) > 1
        assert series_classify(LevelCritical2(3.0), 2.0, "HausLevel") == CONVERGES
        assert series_classify(LevelCritical2(-3.0), 2.0, "HausLevel") == DIVERGES
        assert series_classify(MassCritical(6.0), 1.5, "HausMass") == CONVERGES
        assert series_classify(MassCritical(-6.0), 1.5, "HausMass") == DIVERGES

    def test_numeric_geometric_cases(self):
        # mass-packing pack-level terms decay like 2^(-gamma n)
        assert series_classify(MassPacking(), 2.0, "PackLevel") == CONVERGES
        # and its haus-mass terms grow like loglog
        assert series_classify(MassPacking(), 2.0, "HausMass") == DIVERGES

    def test_near_critical_is_unknown(self):
        # exactly critical Bertrand exponent: undecidable numerically
        assert series_classify(LevelCritical2(1.0), 2.0, "HausLevel") == UNKNOWN

    def test_custom_table_never_guessed(self):
        radii = np.geomspace(1e-6, 0.5, 50)
        g = CustomTable(radii=tuple(radii), values=tuple(radii**2))
        assert series_classify(g, 2.0, "PackLevel") == UNKNOWN


class TestSerialization:
    def test_round_trip(self):
        cases = [
            PureExponent(1.5),
            LevelCritical(2, -3.0),
            MassPacking(),
            MassCritical(-1.25),
            LevelCritical2(0.5),
            CustomTable(radii=(0.01, 0.1, 0.5), values=(1e-4, 1e-2, 0.25)),
        ]
        for g in cases:
            assert parse_gauge(format_gauge(g)) == g

    def test_parse_variants(self):
        assert parse_gauge("PureExponent(2)") == PureExponent(2.0)
        assert parse_gauge(" LevelCritical(p=1, theta=0.25) ") == LevelCritical(1, 0.25)
        assert parse_gauge("MassPacking") == MassPacking()

    def test_parse_errors(self):
        with pytest.raises(DomainError):
            parse_gauge("NoSuchFamily(1)")
        with pytest.raises(DomainError):
            parse_gauge("PureExponent()")
