"""Tests for shared pydantic value types."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

from logsync.models import ClockReading, EchoCount, PhaseTolerance, PhysicalConstants


class TestClockReading:
    """Test suite for ClockReading."""

    @pytest.mark.parametrize(
        "value, m, phi",
        [
            (3.0, 3, 0.0),
            (3.25, 3, 0.25),
            (2.75, 3, -0.25),
            (3.5, 3, 0.5),
            (-0.5, -1, 0.5),
        ],
    )
    def test_from_value(self, value, m, phi):
        """Test splitting a real reading into count and phase."""
        reading = ClockReading.from_value(value)

        assert reading.m == m
        assert reading.phi == pytest.approx(phi)

    def test_half_stays_with_lower_count(self):
        """Test phase 1/2 belongs to m, never -1/2 to m + 1."""
        assert ClockReading.from_value(7.5) == ClockReading(m=7, phi=0.5)

    def test_rejects_phase_outside_half_open_interval(self):
        """Test phi = -1/2 is rejected by validation."""
        with pytest.raises(ValidationError):
            ClockReading(m=1, phi=-0.5)

    def test_rejects_non_finite(self):
        """Test infinite readings are rejected."""
        with pytest.raises(ValueError):
            ClockReading.from_value(math.inf)

    def test_str(self):
        """Test the m.phi rendering."""
        assert str(ClockReading(m=12, phi=-0.125)) == "12.-0.125000"

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_value_round_trip(self, value):
        """Test value recombines count and phase."""
        reading = ClockReading.from_value(value)

        assert -0.5 < reading.phi <= 0.5
        assert reading.value == pytest.approx(value, abs=1e-9)


class TestSmallModels:
    """Test suite for tolerances, echo counts and constants."""

    def test_phase_tolerance_bounds(self):
        """Test eta must lie strictly inside (0, 1)."""
        PhaseTolerance(eta=0.1)
        with pytest.raises(ValidationError):
            PhaseTolerance(eta=1.0)

    def test_echo_count_integrality(self):
        """Test is_integral on exact and fractional counts."""
        assert EchoCount(value=6.0).is_integral
        assert not EchoCount(value=6.01).is_integral

    def test_geometric_constants(self):
        """Test toy units set c and G to one."""
        constants = PhysicalConstants.geometric()

        assert (constants.c, constants.G) == (1.0, 1.0)

    def test_models_are_frozen(self):
        """Test value types cannot be mutated."""
        reading = ClockReading(m=1, phi=0.0)
        with pytest.raises(ValidationError):
            reading.m = 2
