"""Tests for the clock adjustment group."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logsync.adjustment import (
    AdjustmentPair,
    ClockAdjustment,
    act,
    compose,
    invert,
    retrigger,
    write_knots_csv,
)
from logsync.channel import echo_count
from logsync.enums import AdjustmentKind
from logsync.exceptions import InvalidParameterError, OutsideValidityDomainError
from logsync.machine import OpenMachine, Transmission, adjusted_machine, simulate_signals
from logsync.spacetime import Worldline

increments = st.lists(
    st.tuples(st.floats(0.1, 5.0), st.floats(0.1, 5.0)), min_size=1, max_size=6
)
kinds = st.sampled_from(list(AdjustmentKind))
samples = np.linspace(-10.0, 40.0, 101)


def adjustment(steps, kind, start=(0.0, 0.0)) -> ClockAdjustment:
    x, y = start
    knots = [(x, y)]
    for dx, dy in steps:
        x, y = x + dx, y + dy
        knots.append((x, y))
    return ClockAdjustment.from_knots(knots, kind)


class TestConstruction:
    """Test suite for building adjustments."""

    def test_affine(self):
        """Test the affine map scales then shifts."""
        f = ClockAdjustment.affine(2.0, 1.0)

        assert f(3.0) == pytest.approx(7.0)
        assert f(-1.0) == pytest.approx(-1.0)

    def test_affine_needs_positive_scale(self):
        """Test orientation-reversing maps are rejected."""
        with pytest.raises(InvalidParameterError):
            ClockAdjustment.affine(-1.0)

    def test_knots_must_increase(self):
        """Test non-monotone knots are rejected with E001."""
        with pytest.raises(InvalidParameterError):
            ClockAdjustment.from_knots([(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)])

    def test_identity(self):
        """Test the identity leaves readings alone."""
        f = ClockAdjustment.identity()

        assert f.is_identity
        assert f(3.5) == 3.5

    def test_pchip_passes_through_knots(self):
        """Test the monotone interpolant reproduces its knots."""
        knots = [(0.0, 0.0), (1.0, 0.5), (2.0, 3.0), (4.0, 3.2)]
        f = ClockAdjustment.from_knots(knots)

        for zeta, value in knots:
            assert f(zeta) == pytest.approx(value)

    def test_knot_table(self):
        """Test knots of an affine map are its two defining points."""
        table = ClockAdjustment.affine(2.0, 1.0).knot_table()

        assert table == [(0.0, 1.0), (1.0, 3.0)]

    def test_knots_csv(self, tmp_path):
        """Test the knot CSV has a header and one row per knot."""
        path = tmp_path / "knots.csv"

        write_knots_csv(ClockAdjustment.shift(0.5), path)

        assert path.read_text().splitlines() == ["zeta,f_of_zeta", "0.0,0.5", "1.0,1.5"]


class TestGroupLaws:
    """Test suite for composition and inversion."""

    @settings(max_examples=50, deadline=None)
    @given(increments, kinds)
    def test_strictly_increasing(self, steps, kind):
        """Test every adjustment is strictly increasing, extensions included."""
        values = adjustment(steps, kind)(samples)

        assert np.all(np.diff(values) > 0)

    @settings(max_examples=50, deadline=None)
    @given(increments, kinds)
    def test_inverse(self, steps, kind):
        """Test f^-1(f(zeta)) = zeta inside and outside the knot span."""
        f = adjustment(steps, kind)

        assert np.allclose(invert(f)(f(samples)), samples, atol=1e-7)
        assert np.allclose(f(f.inverse(samples)), samples, atol=1e-7)

    @settings(max_examples=50, deadline=None)
    @given(increments, increments, increments)
    def test_associative(self, a, b, c):
        """Test (f g) h = f (g h) pointwise."""
        f, g, h = (adjustment(s, AdjustmentKind.PCHIP) for s in (a, b, c))

        left = compose(compose(f, g), h)(samples)
        right = compose(f, compose(g, h))(samples)

        assert np.allclose(left, right)

    @given(increments)
    def test_composition_order(self, steps):
        """Test compose(f, g) applies g first."""
        f = adjustment(steps, AdjustmentKind.LINEAR)
        g = ClockAdjustment.shift(1.5)

        assert np.allclose(compose(f, g)(samples), f(samples + 1.5))

    def test_inverse_of_composition(self):
        """Test (f g)^-1 = g^-1 f^-1."""
        f = ClockAdjustment.affine(2.0, 1.0)
        g = ClockAdjustment.from_knots([(0.0, 0.0), (1.0, 3.0), (2.0, 3.5)])

        lhs = invert(compose(f, g))(samples)
        rhs = compose(invert(g), invert(f))(samples)

        assert np.allclose(lhs, rhs)

    def test_pair_then(self):
        """Test pairs compose component-wise, self first."""
        p = AdjustmentPair(f_a=ClockAdjustment.shift(1.0), f_b=ClockAdjustment.affine(2.0))
        q = AdjustmentPair(f_a=ClockAdjustment.affine(3.0), f_b=ClockAdjustment.shift(-1.0))

        r = p.then(q)

        assert r.f_a(1.0) == pytest.approx(6.0)
        assert r.f_b(1.0) == pytest.approx(1.0)


class TestActions:
    """Test suite for act, retrigger and densify."""

    def test_act_and_retrigger(self):
        """Test retrigger undoes act."""
        f = ClockAdjustment.from_knots([(0.0, 0.0), (1.0, 0.25), (3.0, 4.0)])

        assert retrigger(f, act(f, 2.0)) == pytest.approx(2.0)

    def test_retrigger_rejects_non_finite(self):
        """Test non-finite readings raise E004."""
        with pytest.raises(OutsideValidityDomainError):
            retrigger(ClockAdjustment.identity(), float("inf"))

    @pytest.mark.parametrize("factor", [2, 3, 5])
    def test_densify_multiplies_echo_count(self, flat, factor):
        """Test zeta -> N zeta multiplies the echo count by N."""
        a = OpenMachine(id="A")
        b = OpenMachine(id="B", worldline=Worldline.static(1.5))
        schedule = [Transmission(sender="A", reading=0.0, receiver="B", bounces=1)]

        before = echo_count(simulate_signals((a, b), flat, schedule), "A", "B")
        dense = adjusted_machine(a, ClockAdjustment.densify(factor))
        after = echo_count(simulate_signals((dense, b), flat, schedule), "A", "B")

        assert after.value == pytest.approx(factor * before.value)
