"""Tests for arrangement solvers, ring phases, frozen detection and minimax."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from logsync.arrange import (
    RING_IDS,
    AnchoredPeriod,
    Arrangement,
    ChannelMeasurement,
    ChannelSpec,
    RingConfig,
    add_fifth,
    construct_lacing,
    first_order_ring_phase,
    is_frozen,
    max_bitrate,
    min_period,
    minimax_phases,
    minimax_sweep,
    predicted_phase,
    predicted_phase_from_separation,
    regular_tetrahedron,
    reverse_channel_delay_check,
    solve_ring5,
    solve_tetrahedron,
    solve_two_machine,
    static_machine,
    two_way_phases,
)
from logsync.channel import echo_count
from logsync.enums import DelayMethod, EventKind
from logsync.exceptions import InvalidParameterError, OutsideValidityDomainError
from logsync.machine import (
    OpenMachine,
    RateSchedule,
    Transmission,
    reading_at,
    simulate_signals,
)
from logsync.models import PhysicalConstants, SolverSettings
from logsync.spacetime import Worldline

FERMAT = DelayMethod.FERMAT


def distances(arr: Arrangement, names: list[str]) -> dict[tuple[str, str], float]:
    return {
        (a, b): float(np.linalg.norm(arr.position(a) - arr.position(b)))
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    }


def ring(geometric, n: int = 2, p_tau: float = 1.0, mu: float = 0.0) -> RingConfig:
    return RingConfig(n=n, p_tau=p_tau, mu=mu, constants=geometric)


class TestTwoMachine:
    """Test suite for light-cone partners in 1+1 dimensions."""

    def test_uniform_clock(self, flat):
        """Test delta = 3 places static partners 1.5 light-units away."""
        a = OpenMachine(id="A")

        solution = solve_two_machine(a, 3, [0, 1, 2, 3], flat)

        assert [e.x for e in solution.right_ticks] == pytest.approx([1.5] * 4)
        assert [e.x for e in solution.left_ticks] == pytest.approx([-1.5] * 4)
        assert [e.t for e in solution.right_ticks] == pytest.approx([1.5, 2.5, 3.5, 4.5])
        assert solution.right.worldline.is_static

    def test_partner_echo_count(self, flat):
        """Test A's echo off the constructed partner takes delta cycles."""
        a = OpenMachine(id="A")
        solution = solve_two_machine(a, 3, [0, 1, 2, 3], flat)
        schedule = [Transmission(sender="A", reading=1.0, receiver="A-right", bounces=1)]

        log = simulate_signals((a, solution.right), flat, schedule)

        assert echo_count(log, "A", "A-right").value == pytest.approx(3.0)

    def test_nonuniform_clock_moves_partner(self, flat):
        """Test a rate change on A bends the partner's worldline."""
        a = OpenMachine(id="A", rate=RateSchedule(knots=((0.0, 1.0), (2.0, 2.0))))

        solution = solve_two_machine(a, 3, [0, 1, 2, 3], flat)

        assert [e.x for e in solution.right_ticks] == pytest.approx([1.25, 1.0, 0.75, 0.75])
        assert not solution.right.worldline.is_static
        solution.right.worldline.check_timelike(flat)

    def test_partner_reads_integers_at_ticks(self, flat):
        """Test the partner clock shows consecutive readings at its ticks."""
        a = OpenMachine(id="A", rate=RateSchedule(knots=((0.0, 1.0), (2.0, 2.0))))
        solution = solve_two_machine(a, 3, [0, 1, 2, 3], flat)

        readings = [reading_at(solution.right, e.t, flat).value for e in solution.right_ticks]

        assert readings == pytest.approx([0.0, 1.0, 2.0, 3.0])

    def test_needs_flat_metric(self, curved):
        """Test curved metrics are rejected."""
        with pytest.raises(InvalidParameterError):
            solve_two_machine(OpenMachine(id="A"), 3, [0, 1], curved(1e-6))


class TestLacing:
    """Test suite for construct_lacing."""

    @pytest.mark.parametrize("n", [1, 3])
    def test_echo_counts_both_ways(self, flat, n):
        """Test both machines count n cycles per echo."""
        solution = construct_lacing(
            Worldline.static(0.0), Worldline.static(2.0), 0.0, n, 3, flat
        )
        schedule = [
            Transmission(sender="A", reading=0.0, receiver="B", bounces=1),
            Transmission(sender="B", reading=0.0, receiver="A", bounces=1),
        ]

        log = simulate_signals((solution.a, solution.b), flat, schedule)

        assert echo_count(log, "A", "B").value == pytest.approx(n)
        assert echo_count(log, "B", "A").value == pytest.approx(n)
        assert len(solution.a_ticks) == 3 * n

    def test_custom_seeds(self, flat):
        """Test uneven seeds still give ticks in reading order."""
        solution = construct_lacing(
            Worldline.static(0.0), Worldline.static(2.0), 0.0, 2, 2, flat, seeds=[0.0, 3.5]
        )

        assert [e.t for e in solution.a_ticks] == pytest.approx([0.0, 3.5, 4.0, 7.5])

    def test_seeds_before_first_echo(self, flat):
        """Test a seed at or after the first echo is rejected."""
        with pytest.raises(InvalidParameterError):
            construct_lacing(
                Worldline.static(0.0), Worldline.static(2.0), 0.0, 2, 2, flat, seeds=[0.0, 4.0]
            )


class TestTetrahedron:
    """Test suite for tetrahedral and five-machine placements."""

    def test_flat_is_regular(self, flat):
        """Test flat space gives the regular tetrahedron of edge N p c."""
        arr = solve_tetrahedron(flat, 1.0, 2)

        edges = distances(arr, ["V1", "V2", "V3", "V4"])
        assert list(edges.values()) == pytest.approx([2.0] * 6, abs=1e-9)
        assert np.allclose(arr.positions(), regular_tetrahedron(2.0))
        assert all(c.echo_count == 4 for c in arr.channels)

    def test_curved_null_phases(self, curved):
        """Test the curved placement restores null phases and echo counts 2N."""
        metric = curved(1e-3 / 4.0)

        arr = solve_tetrahedron(metric, 1.0, 2, FERMAT)

        measurements = two_way_phases(arr, FERMAT)
        assert len(measurements) == 6
        for m in measurements:
            assert abs(m.forward_phase) < 1e-6
            assert abs(m.reverse_phase) < 1e-6
            assert m.echo_source == pytest.approx(4.0, abs=1e-6)
        assert not np.allclose(arr.positions(), regular_tetrahedron(2.0), atol=1e-6)
        assert reverse_channel_delay_check(measurements)

    @pytest.mark.slow
    def test_curved_null_phases_shooting(self, curved):
        """Test the null-path solver also reaches null phases."""
        metric = curved(1e-3 / 4.0)

        arr = solve_tetrahedron(metric, 1.0, 2)

        assert all(abs(m.forward_phase) < 1e-6 for m in two_way_phases(arr))

    def test_fifth_flat_is_mirror(self, flat):
        """Test the fifth machine mirrors V4 across the face V1 V2 V3."""
        arr = add_fifth(flat, solve_tetrahedron(flat, 1.0, 2), 2)

        edges = distances(arr, ["V1", "V2", "V3", "V5"])
        assert [edges[(f, "V5")] for f in ("V1", "V2", "V3")] == pytest.approx([2.0] * 3)
        assert np.linalg.norm(arr.position("V5") - arr.position("V4")) > 2.0
        assert len(arr.channels) == 9

    def test_fifth_curved(self, curved):
        """Test all nine channels keep null phases in curved space."""
        metric = curved(1e-4 / 4.0)
        tetra = solve_tetrahedron(metric, 1.0, 2, FERMAT)

        arr = add_fifth(metric, tetra, 2, FERMAT)

        assert all(abs(m.forward_phase) < 1e-6 for m in two_way_phases(arr, FERMAT))

    def test_fifth_outside_validity_guard(self, curved, settings):
        """Test V5 fails the validity guard at mu = guard / (n p_tau c)^2."""
        n = 2
        metric = curved(settings.validity_guard / n**2)
        tetra = solve_tetrahedron(metric, 1.0, n, FERMAT)

        with pytest.raises(OutsideValidityDomainError) as exc_info:
            add_fifth(metric, tetra, n, FERMAT)

        assert exc_info.value.error_code.value == "E004"

    def test_reverse_check_detects_mismatch(self):
        """Test a channel that differs by direction fails the reverse check."""
        m = ChannelMeasurement(
            source="A",
            target="B",
            forward_phase=0.1,
            reverse_phase=0.0,
            echo_source=4.0,
            echo_target=4.0,
        )

        assert not reverse_channel_delay_check([m])


class TestFrozen:
    """Test suite for is_frozen."""

    def test_tetrahedron_is_free(self, flat):
        """Test six channels on four machines are independent."""
        report = is_frozen(solve_tetrahedron(flat, 1.0, 2))

        assert (report.frozen, report.rank, report.count) == (False, 6, 6)
        assert report.witness is None

    def test_nine_channels_are_free(self, flat):
        """Test the five-machine arrangement with nine channels is not frozen."""
        arr = add_fifth(flat, solve_tetrahedron(flat, 1.0, 2), 2)

        report = is_frozen(arr)

        assert (report.frozen, report.rank, report.count) == (False, 9, 9)

    def test_tenth_channel_freezes(self, flat):
        """Test closing the last pair of five machines freezes the arrangement."""
        arr = add_fifth(flat, solve_tetrahedron(flat, 1.0, 2), 2).with_channel("V4", "V5", 6)

        report = is_frozen(arr)

        assert report.frozen
        assert not report.degenerate
        assert (report.rank, report.count) == (9, 10)
        assert report.witness in {"V1", "V2", "V3", "V4", "V5"}
        assert report.coupled

    def test_curved_counts_keep_their_rank(self, curved):
        """Test curvature leaves six and nine channels free and the tenth frozen."""
        metric = curved(1e-4 / 4.0)
        tetra = solve_tetrahedron(metric, 1.0, 2, FERMAT)
        nine = add_fifth(metric, tetra, 2, FERMAT)

        tetra_report = is_frozen(tetra)
        nine_report = is_frozen(nine)
        ten_report = is_frozen(nine.with_channel("V4", "V5", 6))

        assert (tetra_report.frozen, tetra_report.rank, tetra_report.count) == (False, 6, 6)
        assert (nine_report.frozen, nine_report.rank, nine_report.count) == (False, 9, 9)
        assert ten_report.frozen
        assert (ten_report.rank, ten_report.count) == (9, 10)

    def test_flat_ring_is_frozen(self, geometric):
        """Test the ten ring channels are frozen."""
        report = is_frozen(solve_ring5(ring(geometric)).arrangement)

        assert report.frozen
        assert report.rank == 9

    def test_no_channels(self, flat):
        """Test an arrangement without channels has nothing to freeze."""
        machines = tuple(
            static_machine(name, (x, 0.0, 0.0), flat, 1.0) for name, x in (("A", 0.0), ("B", 1.0))
        )
        arr = Arrangement(
            machines=machines, anchors=(AnchoredPeriod(machine="A", p_tau=1.0),), metric=flat
        )

        assert not is_frozen(arr).frozen


class TestArrangement:
    """Test suite for Arrangement validation."""

    def test_unknown_channel_reference(self, flat):
        """Test channels must name known machines."""
        tetra = solve_tetrahedron(flat, 1.0, 1)

        with pytest.raises(ValidationError):
            Arrangement(
                machines=tetra.machines,
                channels=(ChannelSpec(source="V1", target="V9", echo_count=2),),
                anchors=tetra.anchors,
                metric=flat,
            )

    def test_needs_anchor(self, flat):
        """Test an arrangement needs at least one anchored period."""
        tetra = solve_tetrahedron(flat, 1.0, 1)

        with pytest.raises(ValidationError):
            Arrangement(machines=tetra.machines, anchors=(), metric=flat)

    def test_coordinate_period(self, curved):
        """Test the anchored proper period converts through the anchor's rate."""
        metric = curved(1e-4)
        tetra = solve_tetrahedron(metric, 1.0, 1, FERMAT)

        potential = np.dot([-2.0, 1.0, 1.0], tetra.position("V1") ** 2)
        expected = 1.0 / math.sqrt(1.0 + metric.mu * potential)
        assert tetra.coordinate_period == pytest.approx(expected)


class TestRing:
    """Test suite for the five-machine ring."""

    def test_flat_geometry(self, geometric):
        """Test flat space gives b = L, rho = sqrt(3) L and null A-A phases."""
        solution = solve_ring5(ring(geometric, n=3))

        assert solution.half_separation == pytest.approx(3.0)
        assert solution.radius == pytest.approx(3.0 * math.sqrt(3.0))
        assert solution.phase == pytest.approx(0.0, abs=1e-9)
        assert [m.id for m in solution.arrangement.machines] == list(RING_IDS)
        chord = solution.arrangement.position("A0") - solution.arrangement.position("A1")
        assert np.linalg.norm(chord) == pytest.approx(9.0)

    def test_channel_declarations(self, geometric):
        """Test A-A channels carry echo 6N and the rest 4N."""
        solution = solve_ring5(ring(geometric, n=2))

        counts = {c.label: c.echo_count for c in solution.arrangement.channels}
        assert counts["A0-A1"] == 12
        assert counts["B1-B2"] == 8
        assert counts["B2-A2"] == 8
        assert len(counts) == 10

    def test_curved_phase_matches_first_order(self, geometric):
        """Test the measured phase follows -5/2 mu c^2 N^3 p^2."""
        cfg = ring(geometric, n=2, mu=1e-5)

        solution = solve_ring5(cfg, FERMAT)

        expected = first_order_ring_phase(cfg.mu, cfg.n, cfg.p_tau, geometric)
        assert solution.phase < 0
        assert solution.phase == pytest.approx(expected, rel=0.05)
        assert list(solution.aa_phases) == pytest.approx([solution.phase] * 3, rel=1e-6)

    def test_other_channels_stay_null(self, geometric):
        """Test the seven B channels keep null phases in curved space."""
        solution = solve_ring5(ring(geometric, n=2, mu=1e-5), FERMAT)

        measurements = two_way_phases(solution.arrangement, FERMAT)
        b_channels = [m for m in measurements if m.source.startswith("B")]
        assert len(b_channels) == 7
        assert all(abs(m.forward_phase) < 1e-8 for m in b_channels)

    @pytest.mark.slow
    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("p_tau", [1.0, 1.5, 2.0])
    @pytest.mark.parametrize("mu", [1e-7, 5e-7, 2e-6])
    def test_phase_grid(self, geometric, n, p_tau, mu):
        """Test the first-order phase across N, p_tau and mu."""
        cfg = ring(geometric, n=n, p_tau=p_tau, mu=mu)

        solution = solve_ring5(cfg, FERMAT)

        expected = first_order_ring_phase(mu, n, p_tau, geometric)
        assert solution.phase == pytest.approx(expected, rel=0.05)

    @pytest.mark.slow
    def test_shooting_phase(self, geometric):
        """Test the null-path solver agrees with the first-order phase."""
        cfg = ring(geometric, n=2, mu=1e-5)

        solution = solve_ring5(cfg)

        expected = first_order_ring_phase(cfg.mu, cfg.n, cfg.p_tau, geometric)
        assert solution.phase == pytest.approx(expected, rel=0.05)

    def test_measured_arrival_phase(self, geometric):
        """Test the phase is the reception phase of a simulated A0 -> A1 signal."""
        solution = solve_ring5(ring(geometric, n=2, mu=1e-5), FERMAT)
        arr = solution.arrangement
        schedule = [Transmission(sender="A0", reading=5.0, receiver="A1")]

        log = simulate_signals(arr.machines, arr.metric, schedule, FERMAT)

        received = next(r for r in log if r.kind is EventKind.RECEIVE)
        assert received.reading.phi == pytest.approx(solution.phase, rel=1e-6)

    def test_config_rejects_large_phase(self, geometric):
        """Test configurations with 27 mu N^3 p^2 c^2 / 8 >= 1/2 are rejected."""
        with pytest.raises(ValidationError):
            ring(geometric, n=10, mu=1e-3)


class TestPhaseFormulas:
    """Test suite for closed-form phases and the bit-rate bound."""

    def test_closed_form_to_first_order_ratio(self, geometric):
        """Test the closed form is 27/20 of the first-order phase."""
        gm, r = 2.0, 100.0
        mu = gm / r**3

        closed = predicted_phase(gm, r, 3, 1.0)
        first = first_order_ring_phase(mu, 3, 1.0, geometric)

        assert closed / first == pytest.approx(27.0 / 20.0)

    def test_scaling(self):
        """Test the phase scales with N^3 p^2 / r^3."""
        base = predicted_phase(1.0, 100.0, 2, 1.0)

        assert predicted_phase(1.0, 100.0, 4, 1.0) == pytest.approx(8.0 * base)
        assert predicted_phase(1.0, 100.0, 2, 2.0) == pytest.approx(4.0 * base)
        assert predicted_phase(1.0, 200.0, 2, 1.0) == pytest.approx(base / 8.0)
        assert predicted_phase(0.0, 100.0, 2, 1.0) == 0.0

    def test_phase_domain(self):
        """Test non-positive radii and half-cycle phases raise E004."""
        with pytest.raises(OutsideValidityDomainError):
            predicted_phase(1.0, 0.0, 2, 1.0)
        with pytest.raises(OutsideValidityDomainError):
            predicted_phase(1.0, 1.0, 2, 1.0)

    def test_separation_form(self, geometric):
        """Test the separation form agrees with the closed form at L = 2 N p c."""
        gm, r, n, p_tau = 2.0, 100.0, 3, 1.0

        via_separation = predicted_phase_from_separation(gm, 2.0 * n * p_tau, r, p_tau, geometric)

        assert via_separation == pytest.approx(predicted_phase(gm, r, n, p_tau))

    def test_min_period_for_earth_orbit(self):
        """Test the bound for a 6000 km ring at 30000 km from an Earth-like mass."""
        constants = PhysicalConstants()
        gm = constants.G * 6.67e24

        bound = min_period(gm, 6.0e6, 3.0e7, constants)

        assert 0.95e-13 <= bound <= 1.25e-13
        assert bound == pytest.approx(1.115e-13, rel=1e-3)

    def test_min_period_rejects_bad_geometry(self, geometric):
        """Test non-positive separations raise E004."""
        with pytest.raises(OutsideValidityDomainError):
            min_period(1.0, 0.0, 10.0, geometric)

    def test_max_bitrate(self):
        """Test one character per proper period."""
        assert max_bitrate(1.0, 1e-13) == pytest.approx(1e13)
        assert max_bitrate(8.0, 1e-9) == pytest.approx(8e9)
        with pytest.raises(OutsideValidityDomainError):
            max_bitrate(1.0, 0.0)


class TestMinimax:
    """Test suite for minimax phase searches."""

    def test_flat_is_zero(self, geometric):
        """Test flat space needs no phase at all."""
        cfg = ring(geometric)

        result = minimax_phases(cfg.metric, cfg, 3)

        assert result.value == 0.0
        assert result.max_phase == 0.0
        assert result.designated == ("A0-A1", "A1-A2", "A2-A0")

    def test_m_range(self, geometric):
        """Test m outside 1..10 is rejected."""
        cfg = ring(geometric, mu=1e-5)

        with pytest.raises(InvalidParameterError):
            minimax_phases(cfg.metric, cfg, 11)

    def test_symmetric_three_channels_recover_ring_phase(self, geometric):
        """Test the symmetric search with the A-A channels finds the ring phase."""
        cfg = ring(geometric, mu=1e-5)

        result = minimax_phases(cfg.metric, cfg, 3, symmetric=True)

        expected = abs(first_order_ring_phase(cfg.mu, cfg.n, cfg.p_tau, geometric))
        assert result.value == pytest.approx(expected, rel=0.05)
        assert len(result.solution) == 3
        assert result.rates["B2"] == 1.0
        assert result.rates["A0"] == pytest.approx(1.0, abs=1e-6)

    def test_sweep_is_monotone(self, geometric):
        """Test allowing more phased channels never raises the optimum."""
        cfg = ring(geometric, mu=1e-5)
        quick = SolverSettings(minimax_restarts=0, minimax_maxiter=300)

        results = minimax_sweep(cfg.metric, cfg, range(1, 11), settings=quick)

        values = [r.value for r in results]
        assert [r.m for r in results] == list(range(1, 11))
        assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))

    def test_seed_is_deterministic(self, geometric):
        """Test equal seeds give equal optima."""
        cfg = ring(geometric, mu=1e-5)
        quick = SolverSettings(minimax_restarts=1, minimax_maxiter=200)

        first = minimax_phases(cfg.metric, cfg, 4, seed=7, settings=quick)
        second = minimax_phases(cfg.metric, cfg, 4, seed=7, settings=quick)

        assert first == second

    def test_rates_do_no_worse_than_positions(self, geometric):
        """Test freeing the periods never raises the optimum found with positions only."""
        cfg = ring(geometric, mu=1e-5)
        quick = SolverSettings(minimax_restarts=0, minimax_maxiter=400)

        positions = minimax_phases(cfg.metric, cfg, 5, settings=quick, rates=False)
        start = list(positions.solution) + [0.0] * 4
        with_rates = minimax_phases(cfg.metric, cfg, 5, start=start, settings=quick)

        assert len(positions.solution) == 15
        assert len(with_rates.solution) == 19
        assert with_rates.value <= positions.value
        assert set(positions.rates.values()) == {1.0}
        assert with_rates.rates["B1"] == 1.0

    def test_start_length_is_checked(self, geometric):
        """Test a warm start of the wrong size is rejected."""
        cfg = ring(geometric, mu=1e-5)

        with pytest.raises(InvalidParameterError):
            minimax_phases(cfg.metric, cfg, 3, start=[0.0] * 15)
