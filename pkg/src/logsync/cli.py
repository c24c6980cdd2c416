"""Command-line shell: run a command on a scenario and write its artifacts."""

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pydantic
import scipy

from . import __version__
from .arrange import (
    Arrangement,
    add_fifth,
    first_order_ring_phase,
    is_frozen,
    max_bitrate,
    min_period,
    minimax_sweep,
    predicted_phase,
    predicted_phase_from_separation,
    reverse_channel_delay_check,
    solve_ring5,
    solve_tetrahedron,
    two_way_phases,
)
from .channel import (
    channel_from_log,
    detect_repeating,
    echo_counts,
    export_occurrence_graph,
    write_channel_csv,
)
from .enums import ArtifactFormat, Command, DelayMethod, PhaseModel
from .exceptions import (
    VALIDATION_CODES,
    InvalidParameterError,
    LogsyncError,
    ScenarioValidationError,
)
from .machine import (
    read_event_log,
    simulate_signals,
    write_event_csv,
    write_event_log,
)
from .models import PhaseTolerance
from .scenario import Scenario, emit_scenario, load_scenario, validate_scenario
from .steer import (
    AimingPoint,
    RingObservation,
    estimate_mu_from_phases,
    phase_sensitivity,
    steer_pair,
    write_deviation_csv,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class Artifacts:
    """Output directory plus the record of every file written into it."""

    def __init__(self, out: Path, formats: set[ArtifactFormat]):
        self.out = out
        self.formats = formats
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def wants(self, fmt: ArtifactFormat) -> bool:
        return fmt in self.formats

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_json(self, name: str, payload: Any) -> None:
        with open(self.path(name), "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name), "w") as f:
            f.write(text)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        with open(self.path(name), "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows(rows)


# =============================================================================
# Commands
# =============================================================================


def _require(scenario: Scenario, *names: str) -> None:
    missing = [n for n in names if getattr(scenario.parameters, n) is None]
    if missing:
        raise ScenarioValidationError(
            f"Command needs parameters {missing}",
            [f"parameters.{n}: required by this command" for n in missing],
        )


def _simulate(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    log = simulate_signals(
        scenario.build_machines(),
        scenario.build_metric(),
        scenario.build_schedule(),
        scenario.parameters.method,
        scenario.settings,
    )
    ids = [m.id for m in scenario.machines]
    channels = {}
    for a in ids:
        for b in ids:
            if a == b:
                continue
            ch = channel_from_log(log, a, b)
            if not len(ch):
                continue
            descriptor = detect_repeating(ch)
            channels[f"{a}->{b}"] = {
                "pairs": len(ch),
                "reception_phases": ch.reception_phases(),
                "echo_counts": [e.value for e in echo_counts(log, a, b)],
                "repeating": descriptor.model_dump(mode="json") if descriptor else None,
            }
            if artifacts.wants(ArtifactFormat.CSV):
                write_channel_csv(ch, artifacts.path(f"channel_{a}_{b}.csv"))
    if artifacts.wants(ArtifactFormat.JSON):
        write_event_log(log, artifacts.path("events.jsonl"))
    if artifacts.wants(ArtifactFormat.CSV):
        write_event_csv(log, artifacts.path("events.csv"))
    if artifacts.wants(ArtifactFormat.DOT):
        artifacts.write_text("occurrences.dot", export_occurrence_graph(log).to_dot())
    return {"events": len(log), "channels": channels}


def _export_graph(
    scenario: Scenario, artifacts: Artifacts, seed: int, log_path: Path | None = None
) -> dict[str, Any]:
    if log_path is not None:
        log = read_event_log(log_path)
    else:
        log = simulate_signals(
            scenario.build_machines(),
            scenario.build_metric(),
            scenario.build_schedule(),
            scenario.parameters.method,
            scenario.settings,
        )
    graph = export_occurrence_graph(log)
    artifacts.write_text("occurrences.dot", graph.to_dot(scenario.name.replace("-", "_")))
    return {"nodes": len(graph.nodes), "edges": len(graph.edges)}


def _solve_tetra(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    _require(scenario, "n", "p_tau")
    p = scenario.parameters
    metric = scenario.build_metric()
    arr = solve_tetrahedron(metric, p.p_tau, p.n, p.method, scenario.settings)
    if p.fifth:
        arr = add_fifth(metric, arr, p.n, p.method, scenario.settings)
    return _arrangement_report(arr, p.method, scenario, artifacts)


def _solve_ring5(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    _require(scenario, "n", "p_tau")
    cfg = scenario.ring_config()
    solution = solve_ring5(cfg, scenario.parameters.method, scenario.settings)
    closed = cfg.mu * phase_sensitivity(cfg.n, cfg.p_tau, PhaseModel.CLOSED_FORM, cfg.constants)
    report = _arrangement_report(
        solution.arrangement, scenario.parameters.method, scenario, artifacts
    )
    report.update(
        {
            "phase": solution.phase,
            "aa_phases": list(solution.aa_phases),
            "half_separation": solution.half_separation,
            "radius": solution.radius,
            "first_order_phase": first_order_ring_phase(cfg.mu, cfg.n, cfg.p_tau, cfg.constants),
            "closed_form_phase": closed,
        }
    )
    return report


def _arrangement_report(
    arr: Arrangement, method: DelayMethod, scenario: Scenario, artifacts: Artifacts
) -> dict[str, Any]:
    measurements = two_way_phases(arr, method, scenario.settings)
    if artifacts.wants(ArtifactFormat.CSV):
        artifacts.write_csv(
            "channels.csv",
            ["source", "target", "forward_phase", "reverse_phase", "echo_source", "echo_target"],
            (
                [
                    m.source,
                    m.target,
                    repr(m.forward_phase),
                    repr(m.reverse_phase),
                    repr(m.echo_source),
                    repr(m.echo_target),
                ]
                for m in measurements
            ),
        )
    return {
        "positions": {m.id: list(m.worldline.position) for m in arr.machines},
        "frequencies": {m.id: m.rate.knots[0][1] for m in arr.machines},
        "channels": [m.model_dump(mode="json") for m in measurements],
        "reversible": reverse_channel_delay_check(measurements),
    }


def _minimax(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    _require(scenario, "n", "p_tau")
    cfg = scenario.ring_config()
    p = scenario.parameters
    results = minimax_sweep(cfg.metric, cfg, p.ms, seed, p.symmetric, scenario.settings, p.rates)
    if artifacts.wants(ArtifactFormat.CSV):
        artifacts.write_csv(
            "minimax.csv",
            ["m", "value", "max_phase", "evaluations"],
            ([r.m, repr(r.value), repr(r.max_phase), r.evaluations] for r in results),
        )
    return {"results": [r.model_dump(mode="json") for r in results]}


def _frozen(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    return is_frozen(scenario.build_arrangement(), scenario.settings).model_dump(mode="json")


def _bitrate(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    _require(scenario, "separation", "radius")
    p = scenario.parameters
    constants = scenario.build_constants()
    if p.gm is None and p.mass is None:
        raise ScenarioValidationError(
            "Bit-rate bound needs a mass", ["parameters.mass: give mass or gm"]
        )
    gm = p.gm if p.gm is not None else constants.G * p.mass
    bound = min_period(gm, p.separation, p.radius, constants)
    report = {
        "gm": gm,
        "min_period": bound,
        "max_bitrate": max_bitrate(p.bits_per_character, bound) if bound > 0 else math.inf,
    }
    if p.p_tau is not None:
        report["phase"] = predicted_phase_from_separation(
            gm, p.separation, p.radius, p.p_tau, constants
        )
        report["bitrate"] = max_bitrate(p.bits_per_character, p.p_tau)
        if p.n is not None:
            report["closed_form_phase"] = predicted_phase(gm, p.radius, p.n, p.p_tau)
    return report


def _steer(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    p = scenario.parameters
    machines = {m.id: m for m in scenario.build_machines()}
    if p.pair is None and len(machines) < 2:
        raise ScenarioValidationError(
            "Steering needs a pair of machines",
            ["machines: steer needs at least two machines or parameters.pair"],
        )
    source, target = p.pair or tuple(machines)[:2]
    channel = f"{source}->{target}"
    aim = AimingPoint(targets={channel: p.phi_0}, tolerance=PhaseTolerance(eta=p.eta))
    drift = p.drift.model_copy(update={"seed": seed})
    run = steer_pair(
        machines[source],
        machines[target],
        scenario.build_metric(),
        aim,
        drift,
        p.controller,
        p.steps,
        method=p.method,
        settings=scenario.settings,
    )
    if artifacts.wants(ArtifactFormat.CSV):
        write_deviation_csv(run, artifacts.path("deviations.csv"))
    return {
        "channel": channel,
        "horizon": run.summary.horizon,
        "summary": run.summary.model_dump(mode="json"),
        "held": run.summary.held,
    }


def _estimate_mu(scenario: Scenario, artifacts: Artifacts, seed: int) -> dict[str, Any]:
    p = scenario.parameters
    constants = scenario.build_constants()
    observations = p.observations
    synthetic = observations is None
    if synthetic:
        _require(scenario, "n", "p_tau")
        rng = np.random.default_rng(seed)
        truth = scenario.build_metric().mu
        clean = truth * phase_sensitivity(p.n, p.p_tau, p.phase_model, constants)
        noisy = clean * (1.0 + p.noise_fraction * rng.standard_normal(p.observation_count))
        observations = tuple(
            RingObservation(n=p.n, p_tau=p.p_tau, phase=float(v)) for v in noisy
        )
    estimate = estimate_mu_from_phases(observations, constants, p.phase_model)
    report = estimate.model_dump(mode="json")
    report["synthetic"] = synthetic
    if synthetic:
        report["truth"] = scenario.build_metric().mu
    if artifacts.wants(ArtifactFormat.CSV):
        artifacts.write_csv(
            "observations.csv",
            ["n", "p_tau", "phase"],
            ([o.n, repr(o.p_tau), repr(o.phase)] for o in observations),
        )
    return report


COMMANDS: dict[Command, Callable[[Scenario, Artifacts, int], dict[str, Any]]] = {
    Command.SIMULATE: _simulate,
    Command.SOLVE_TETRA: _solve_tetra,
    Command.SOLVE_RING5: _solve_ring5,
    Command.MINIMAX: _minimax,
    Command.FROZEN: _frozen,
    Command.BITRATE: _bitrate,
    Command.STEER: _steer,
    Command.ESTIMATE_MU: _estimate_mu,
    Command.EXPORT_GRAPH: _export_graph,
}


# =============================================================================
# Orchestration
# =============================================================================


def parse_sweep(text: str) -> tuple[str, list[float]]:
    """'parameters.p_tau=1e-9:2e-9:3' -> ('parameters.p_tau', [1e-9, 1.5e-9, 2e-9])."""
    try:
        name, spec = text.split("=", 1)
        start, stop, count = spec.split(":")
        values = np.linspace(float(start), float(stop), int(count)).tolist()
    except ValueError as e:
        raise InvalidParameterError(
            f"Sweep must read param=start:stop:count, got {text!r}", "E001"
        ) from e
    if int(count) < 1:
        raise InvalidParameterError("Sweep needs at least one value", "E001")
    return name.strip(), values


def _with_value(document: dict[str, Any], path: str, value: float) -> dict[str, Any]:
    document = json.loads(json.dumps(document))
    *parents, leaf = path.split(".")
    node = document
    for key in parents:
        node = node.setdefault(key, {})
    keep_int = float(value).is_integer() and isinstance(node.get(leaf), int)
    node[leaf] = int(value) if keep_int else value
    return document


def run_command(
    name: Command | str,
    scenario: Scenario,
    out: Path,
    seed: int = 0,
    formats: Sequence[ArtifactFormat] | None = None,
    log_path: Path | None = None,
    sweep: str | None = None,
) -> int:
    """Run one command; write report, artifacts and manifest; return the exit status."""
    command = Command(name)
    wanted = set(formats) if formats else set(ArtifactFormat)
    if command is Command.EXPORT_GRAPH:
        wanted.add(ArtifactFormat.DOT)
    artifacts = Artifacts(out, wanted)
    try:
        if sweep is not None:
            parameter, values = parse_sweep(sweep)
            runs = []
            for i, value in enumerate(values):
                case = validate_scenario(_with_value(emit_scenario(scenario), parameter, value))
                sub = Artifacts(out / f"sweep-{i:03d}", wanted)
                report = _dispatch(command, case, sub, seed, log_path)
                sub.write_json("report.json", report)
                runs.append({"value": value, "report": report})
            report = {"sweep": {"parameter": parameter, "runs": runs}}
        else:
            report = _dispatch(command, scenario, artifacts, seed, log_path)
    except (LogsyncError, pydantic.ValidationError) as e:
        if isinstance(e, pydantic.ValidationError):
            e = ScenarioValidationError(
                "Parameters rejected by the solver", [err["msg"] for err in e.errors()]
            )
        status = EXIT_VALIDATION if e.error_code in VALIDATION_CODES else EXIT_NUMERICAL
        logger.error(f"{command.value} failed: {e}")
        artifacts.write_json("diagnostics.json", {**e.to_report(), "command": command.value})
        _write_manifest(artifacts, command, scenario, seed, status)
        return status

    report["command"] = command.value
    artifacts.write_json("report.json", report)
    _write_manifest(artifacts, command, scenario, seed, EXIT_OK)
    logger.info(f"{command.value} finished; artifacts in {out}")
    return EXIT_OK


def _dispatch(
    command: Command,
    scenario: Scenario,
    artifacts: Artifacts,
    seed: int,
    log_path: Path | None,
) -> dict[str, Any]:
    if command is Command.EXPORT_GRAPH:
        return _export_graph(scenario, artifacts, seed, log_path)
    return COMMANDS[command](scenario, artifacts, seed)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    artifacts: Artifacts, command: Command, scenario: Scenario, seed: int, status: int
) -> None:
    normalized = json.dumps(emit_scenario(scenario), sort_keys=True).encode()
    manifest = {
        "command": command.value,
        "exit_status": status,
        "seed": seed,
        "scenario_sha256": hashlib.sha256(normalized).hexdigest(),
        "versions": {
            "logsync": __version__,
            "numpy": np.__version__,
            "pydantic": pydantic.VERSION,
            "scipy": scipy.__version__,
        },
        "artifacts": {name: _sha256(artifacts.out / name) for name in sorted(set(artifacts.files))},
    }
    with open(artifacts.out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="logsync",
        description="Simulate and solve logically synchronized clock networks",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("command", choices=[c.value for c in Command], help="Command to run")
    parser.add_argument("--scenario", "-s", type=Path, required=True, help="Scenario JSON file")
    parser.add_argument("--out", "-o", type=Path, default=Path("out"), help="Output directory")
    parser.add_argument("--seed", type=int, default=0, help="Seed for every random draw")
    parser.add_argument(
        "--format",
        "-f",
        dest="formats",
        action="append",
        choices=[f.value for f in ArtifactFormat],
        help="Artifact families to write (repeatable; default all)",
    )
    parser.add_argument("--sweep", help="Sweep one scenario field: param=start:stop:count")
    parser.add_argument("--log", type=Path, help="Event log (JSONL) for export-graph")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))

    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ScenarioValidationError) as e:
        error = e if isinstance(e, ScenarioValidationError) else ScenarioValidationError(
            f"Cannot read scenario {args.scenario}", [str(e)]
        )
        for line in error.errors:
            logger.error(line)
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "diagnostics.json", "w") as f:
            json.dump({**error.to_report(), "command": args.command}, f, indent=2, sort_keys=True)
            f.write("\n")
        return EXIT_VALIDATION

    formats = [ArtifactFormat(f) for f in args.formats] if args.formats else None
    return run_command(args.command, scenario, args.out, args.seed, formats, args.log, args.sweep)


if __name__ == "__main__":
    sys.exit(main())
