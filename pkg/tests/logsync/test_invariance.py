"""Tests for channel-invariant adjustment pairs."""

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from logsync.adjustment import AdjustmentPair, ClockAdjustment
from logsync.exceptions import InvalidParameterError
from logsync.invariance import (
    TwoWayScenario,
    construct_invariant_partner,
    is_invariant_pair,
)
from logsync.machine import OpenMachine, Transmission
from logsync.spacetime import Worldline


@pytest.fixture
def scenario(flat):
    """A and B two light-units apart with null phases and echo count 4."""
    schedule = [Transmission(sender="A", reading=0.0, receiver="B", bounces=1)]
    schedule += [Transmission(sender="A", reading=float(r), receiver="B") for r in range(1, 8)]
    schedule += [Transmission(sender="B", reading=float(r), receiver="A") for r in range(3, 8)]
    return TwoWayScenario(
        a=OpenMachine(id="A"),
        b=OpenMachine(id="B", worldline=Worldline.static(2.0)),
        metric=flat,
        schedule=tuple(schedule),
    )


class TestIsInvariantPair:
    """Test suite for is_invariant_pair."""

    def test_identity(self, scenario):
        """Test the identity pair is invariant."""
        assert is_invariant_pair(AdjustmentPair(), scenario)

    def test_common_integer_shift(self, scenario):
        """Test shifting both clocks by a whole cycle keeps both channels."""
        shift = ClockAdjustment.shift(1.0)

        assert is_invariant_pair(AdjustmentPair(f_a=shift, f_b=shift), scenario)

    @pytest.mark.parametrize("delta", [0.3, -0.2, 0.5])
    def test_one_sided_shift_breaks_channels(self, scenario, delta):
        """Test shifting only A changes the channel pattern."""
        pair = AdjustmentPair(f_a=ClockAdjustment.shift(delta))

        assert not is_invariant_pair(pair, scenario)

    def test_rate_change_breaks_channels(self, scenario):
        """Test running A at a different rate changes the channel pattern."""
        pair = AdjustmentPair(f_a=ClockAdjustment.affine(1.1))

        assert not is_invariant_pair(pair, scenario)

    @settings(
        max_examples=25,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.floats(0.05, 0.95))
    def test_random_one_sided_shift(self, scenario, delta):
        """Test any fractional shift of A alone breaks the channels."""
        pair = AdjustmentPair(f_a=ClockAdjustment.shift(delta))

        assert not is_invariant_pair(pair, scenario)

    @settings(
        max_examples=25,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.floats(1.05, 2.0))
    def test_random_rate_scale(self, scenario, scale):
        """Test any faster affine clock on A breaks the channels."""
        pair = AdjustmentPair(f_a=ClockAdjustment.affine(scale))

        assert not is_invariant_pair(pair, scenario)

    @settings(
        max_examples=25,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.lists(st.floats(-0.4, 0.4), min_size=11, max_size=11))
    def test_random_monotone_warp(self, scenario, offsets):
        """Test a warp moving A's readings where B's signals arrive breaks the channels.

        B's signals reach A at readings 5..9, so an offset there shows in the B -> A channel.
        """
        assume(max(abs(e) for e in offsets[5:10]) > 0.05)
        knots = [(float(k), k + e) for k, e in enumerate(offsets)]
        pair = AdjustmentPair(f_a=ClockAdjustment.from_knots(knots))

        assert not is_invariant_pair(pair, scenario)


class TestConstructInvariantPartner:
    """Test suite for construct_invariant_partner."""

    def test_uneven_lacings(self, scenario):
        """Test unevenly spaced lacings give an invariant pair."""
        pair = construct_invariant_partner(scenario, [0.3, 1.2, 2.0, 3.1])

        assert is_invariant_pair(pair, scenario)
        assert pair.f_a(1.2) == pytest.approx(1.0)
        assert pair.f_b(2.3) == pytest.approx(2.0)

    def test_needs_one_choice_per_lacing(self, scenario):
        """Test the number of choices must equal the echo count."""
        with pytest.raises(InvalidParameterError, match="Expected 4 choices"):
            construct_invariant_partner(scenario, [0.0, 1.0, 2.0])

    def test_choices_precede_first_echo(self, scenario):
        """Test the last choice must come before the first lacing returns."""
        with pytest.raises(InvalidParameterError, match="precede"):
            construct_invariant_partner(scenario, [0.0, 1.0, 2.0, 4.5])

    def test_needs_null_phases(self, flat):
        """Test scenarios with fractional offsets are rejected."""
        odd = TwoWayScenario(
            a=OpenMachine(id="A"),
            b=OpenMachine(id="B", worldline=Worldline.static(1.5)),
            metric=flat,
            schedule=(Transmission(sender="A", reading=0.0, receiver="B", bounces=1),),
        )

        with pytest.raises(InvalidParameterError, match="null phases"):
            construct_invariant_partner(odd, [0.0, 1.0, 2.0])

    @pytest.mark.slow
    @settings(
        max_examples=100,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.lists(st.floats(0.0, 3.9), min_size=4, max_size=4, unique=True))
    def test_random_lacings(self, scenario, choices):
        """Test every admissible choice of lacings gives an invariant pair."""
        choices = sorted(choices)
        assume(min(b - a for a, b in zip(choices, choices[1:])) > 1e-2)

        pair = construct_invariant_partner(scenario, choices)

        assert is_invariant_pair(pair, scenario)

    @settings(
        max_examples=25,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.floats(0.05, 0.95))
    def test_shifted_partner_breaks_channels(self, scenario, delta):
        """Test a constructed pair followed by a fractional shift of B is not invariant."""
        pair = construct_invariant_partner(scenario, [0.3, 1.2, 2.0, 3.1])

        shifted = pair.then(AdjustmentPair(f_b=ClockAdjustment.shift(delta)))

        assert is_invariant_pair(pair, scenario)
        assert not is_invariant_pair(shifted, scenario)
