#!/usr/bin/env python3
"""
Command-line driver for the 1D MHD laboratory.

    mhd1d.py solve  --config config/smooth.ini --out runs/smooth
    mhd1d.py sweep  --config config/sweep.ini  --out runs/sweep
    mhd1d.py layer  --config config/layer.ini  --out runs/layer
    mhd1d.py verify --config config/verify_desk.ini --out runs/verify

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 acceptance-check failure (verify only).
"""

import argparse
import configparser
import hashlib
import logging
import os
import re
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from boundary_layer import LayerReport, LayerScenario, run_layer_study
from mhd_core import (
    BoundaryMagnetic, CheckResult, ConfigError, FluidParams, InitialData, MHDError,
    ScenarioConfig, SolverError, State, UsageError, uniform_times,
)
from mhd_diagnostics import records_to_columns
from mhd_solver import RunResult, run
from resistivity_limit import SweepReport, SweepSpec, run_sweep
from solver_verification import SCALES, run_acceptance_suite

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3

FLOAT_FORMAT = "%.17g"

# section -> key -> default (None: required or derived)
CONFIG_KEYS: Dict[str, Dict[str, Optional[str]]] = {
    "fluid": {"A": "1", "gamma": "1.4", "lambda": "1", "nu": "0"},
    "grid": {"n": "256", "cfl": "0.5"},
    "time": {"t_final": "0.1", "snapshots": None, "snapshot_count": None},
    "initial": {"preset": "constant(1)"},
    "boundary": {"signal": "none"},
    "study": {"kind": "solve", "nu_ladder": None, "comparison_count": "32",
              "delta_exponent": "0.4", "epsilon": "0.01", "saturation_guard": "true",
              "scale": "quick", "include_studies": "false"},
}

STUDY_KINDS = ("solve", "sweep", "layer", "verify")

_PRESET = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class VerifyPlan:
    scale: str = "quick"
    include_studies: bool = False

    def describe(self) -> str:
        return f"acceptance suite scale={self.scale} studies={'on' if self.include_studies else 'off'}"


ParsedConfig = Union[ScenarioConfig, SweepSpec, LayerScenario, VerifyPlan]


class _ConfigReader:
    """Typed access to an INI scenario file with line numbers in every error"""

    def __init__(self, path: Path, strict: bool = True):
        self.path = path
        self.strict = strict
        self.lines = path.read_text(encoding="utf-8").splitlines()
        self.parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        self.parser.optionxform = str
        try:
            self.parser.read_string("\n".join(self.lines), source=str(path))
        except configparser.ParsingError as e:
            lineno = e.errors[0][0] if e.errors else "?"
            raise ConfigError(f"{path}:{lineno}: cannot parse line")
        except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
            raise ConfigError(f"{path}:{e.lineno}: {e}")
        except configparser.MissingSectionHeaderError as e:
            raise ConfigError(f"{path}:{e.lineno}: key outside of any [section]")
        self._check_known()

    def line_of(self, section: str, key: Optional[str] = None) -> int:
        current = None
        for number, line in enumerate(self.lines, start=1):
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1].strip()
                if key is None and current == section:
                    return number
            elif current == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
                return number
        return 0

    def _check_known(self):
        for section in self.parser.sections():
            if section not in CONFIG_KEYS:
                self._unknown(f"unknown section [{section}]", self.line_of(section))
                continue
            for key in self.parser[section]:
                if key not in CONFIG_KEYS[section]:
                    self._unknown(f"unknown key '{key}' in [{section}]", self.line_of(section, key))

    def _unknown(self, message: str, lineno: int):
        if self.strict:
            raise ConfigError(f"{self.path}:{lineno}: {message}")
        logger.warning(f"{self.path}:{lineno}: {message} (ignored)")

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section: str, key: str) -> Optional[str]:
        if self.has(section, key):
            return self.parser.get(section, key).strip()
        return CONFIG_KEYS[section][key]

    def error(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.path}:{self.line_of(section, key)}: [{section}] {key}: {message}")

    def number(self, section: str, key: str) -> float:
        text = self.raw(section, key)
        try:
            return float(text)
        except (TypeError, ValueError):
            raise self.error(section, key, f"expected a number, got '{text}'")

    def integer(self, section: str, key: str) -> int:
        text = self.raw(section, key)
        try:
            return int(text)
        except (TypeError, ValueError):
            raise self.error(section, key, f"expected an integer, got '{text}'")

    def boolean(self, section: str, key: str) -> bool:
        text = (self.raw(section, key) or "").lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise self.error(section, key, f"expected true/false, got '{text}'")

    def numbers(self, section: str, key: str) -> Tuple[float, ...]:
        text = self.raw(section, key) or ""
        try:
            return tuple(float(item) for item in text.split(",") if item.strip())
        except ValueError:
            raise self.error(section, key, f"expected a comma-separated list of numbers, got '{text}'")

    def preset(self, section: str, key: str) -> Tuple[str, Tuple[float, ...]]:
        text = self.raw(section, key) or ""
        match = _PRESET.match(text)
        if not match:
            raise self.error(section, key, f"expected name(arg, ...), got '{text}'")
        name, args = match.group(1), match.group(2) or ""
        try:
            values = tuple(float(item) for item in args.split(",") if item.strip())
        except ValueError:
            raise self.error(section, key, f"preset arguments must be numbers, got '{args}'")
        return name, values

    def wrap(self, section: Optional[str], key: Optional[str], build):
        """Re-raise construction errors of a typed object, with the line of the offending key when known"""
        try:
            return build()
        except (ConfigError, TypeError) as e:
            if str(e).startswith(str(self.path)):
                raise
            if section is None:
                raise ConfigError(f"{self.path}: {e}")
            raise self.error(section, key, str(e))


_INITIAL_ARITY = {"constant": (1, 1), "smooth": (4, 5)}
_SIGNAL_ARITY = {"none": (0, 0), "constant": (2, 2), "sinusoid": (4, 4), "ramp": (2, 3)}


def _initial_data(reader: _ConfigReader) -> InitialData:
    name, args = reader.preset("initial", "preset")
    if name not in _INITIAL_ARITY:
        raise reader.error("initial", "preset", f"unknown preset '{name}' (expected constant or smooth)")
    low, high = _INITIAL_ARITY[name]
    if not low <= len(args) <= high:
        raise reader.error("initial", "preset", f"{name} takes {low}..{high} arguments, got {len(args)}")
    build = InitialData.constant if name == "constant" else InitialData.smooth
    return reader.wrap("initial", "preset", lambda: build(*args))


def _boundary_signal(reader: _ConfigReader) -> BoundaryMagnetic:
    name, args = reader.preset("boundary", "signal")
    if name not in _SIGNAL_ARITY:
        raise reader.error("boundary", "signal", f"unknown signal '{name}' (expected one of {', '.join(_SIGNAL_ARITY)})")
    low, high = _SIGNAL_ARITY[name]
    if not low <= len(args) <= high:
        raise reader.error("boundary", "signal", f"{name} takes {low}..{high} arguments, got {len(args)}")
    return reader.wrap("boundary", "signal", lambda: getattr(BoundaryMagnetic, name)(*args))


def _snapshot_times(reader: _ConfigReader, t_final: float) -> Tuple[float, ...]:
    if reader.has("time", "snapshots") and reader.has("time", "snapshot_count"):
        raise reader.error("time", "snapshot_count", "give either snapshots or snapshot_count, not both")
    if reader.has("time", "snapshots"):
        return tuple(sorted(reader.numbers("time", "snapshots")))
    if reader.has("time", "snapshot_count"):
        count = reader.integer("time", "snapshot_count")
        return reader.wrap("time", "snapshot_count", lambda: uniform_times(t_final, count))
    return (t_final,)


def _scenario(reader: _ConfigReader, nu: float, boundary: BoundaryMagnetic,
              snapshots: Tuple[float, ...] = ()) -> ScenarioConfig:
    params = reader.wrap("fluid", "gamma", lambda: FluidParams(
        reader.number("fluid", "A"), reader.number("fluid", "gamma"), reader.number("fluid", "lambda")))
    return reader.wrap(None, None, lambda: ScenarioConfig(
        params=params, nu=nu, grid_n=reader.integer("grid", "n"), t_final=reader.number("time", "t_final"),
        initial=_initial_data(reader), boundary_b=boundary, cfl=reader.number("grid", "cfl"),
        snapshot_times=snapshots,
    ))


def parse_config(path: Union[str, Path], strict: bool = True) -> ParsedConfig:
    """Read an INI scenario file into the typed config its [study] kind asks for"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    reader = _ConfigReader(path, strict)
    kind = (reader.raw("study", "kind") or "solve").lower()
    if kind not in STUDY_KINDS:
        raise reader.error("study", "kind", f"unknown study kind '{kind}' (expected one of {', '.join(STUDY_KINDS)})")

    if kind == "verify":
        scale = reader.raw("study", "scale")
        if scale not in SCALES:
            raise reader.error("study", "scale", f"unknown scale '{scale}' (expected one of {', '.join(SCALES)})")
        return VerifyPlan(scale, reader.boolean("study", "include_studies"))

    boundary = _boundary_signal(reader)
    if kind == "solve":
        t_final = reader.number("time", "t_final")
        return _scenario(reader, reader.number("fluid", "nu"), boundary, _snapshot_times(reader, t_final))

    if reader.has("fluid", "nu"):
        raise reader.error("fluid", "nu", f"a {kind} study takes its resistivities from [study] nu_ladder")
    if not reader.has("study", "nu_ladder"):
        raise ConfigError(f"{path}:{reader.line_of('study')}: a {kind} study needs [study] nu_ladder")
    ladder = reader.numbers("study", "nu_ladder")

    if kind == "sweep":
        base = _scenario(reader, 0.0, BoundaryMagnetic.none())
        return reader.wrap("study", "nu_ladder", lambda: SweepSpec(
            base, ladder, boundary_b=boundary,
            comparison_count=reader.integer("study", "comparison_count"),
            saturation_guard=reader.boolean("study", "saturation_guard"),
        ))

    initial = _initial_data(reader)
    if initial.preset != "constant":
        raise reader.error("initial", "preset", "a layer study starts from the rest state constant(rho_bar)")
    if not reader.has("boundary", "signal"):
        boundary = BoundaryMagnetic.ramp(1.0, 1.0, 0.05)
    params = reader.wrap("fluid", "gamma", lambda: FluidParams(
        reader.number("fluid", "A"), reader.number("fluid", "gamma"), reader.number("fluid", "lambda")))
    return reader.wrap("study", "delta_exponent", lambda: LayerScenario(
        params=params, rho_bar=initial.rho_bar, boundary_b=boundary, nu_ladder=ladder,
        delta_exponent=reader.number("study", "delta_exponent"), epsilon=reader.number("study", "epsilon"),
        t_final=reader.number("time", "t_final"), grid_n=reader.integer("grid", "n"),
        cfl=reader.number("grid", "cfl"),
    ))


def snapshot_frame(state: State) -> pd.DataFrame:
    """One row per face: x, rho and b of the cell to the right (blank on the last face), u"""
    n = state.n_cells
    faces = np.arange(n + 1, dtype=float) / n
    rho = np.append(state.rho, np.nan)
    b = np.append(state.b, np.nan)
    return pd.DataFrame({"x": faces, "rho": rho, "u": state.u, "b": b})


def read_snapshot(path: Union[str, Path], time: float = 0.0) -> State:
    frame = pd.read_csv(path, float_precision="round_trip")
    return State(frame["rho"].to_numpy()[:-1], frame["u"].to_numpy(), frame["b"].to_numpy()[:-1], time)


@dataclass
class RunManifest:
    command: str
    config_path: str
    config_hash: str
    scenario: str
    output_dir: str
    started: str
    finished: str = ""
    files: List[str] = field(default_factory=list)
    version: str = __version__

    def to_text(self) -> str:
        lines = [
            f"tool_version: {self.version}",
            f"command: {self.command}",
            f"config: {self.config_path}",
            f"config_sha256: {self.config_hash}",
            f"scenario: {self.scenario}",
            f"output_dir: {self.output_dir}",
            f"started: {self.started}",
            f"finished: {self.finished}",
            "files:",
        ]
        lines += [f"  {name}" for name in self.files]
        return "\n".join(lines) + "\n"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class OutputWriter:
    """Writes result files into a staging directory and publishes them on success"""

    def __init__(self, out_dir: Path, command: str, config_path: Path, scenario: str):
        self.out_dir = Path(out_dir)
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=f".{self.out_dir.name}-", dir=self.out_dir.parent))
        digest = hashlib.sha256(config_path.read_bytes()).hexdigest()
        self.manifest = RunManifest(command, str(config_path), digest, scenario, str(self.out_dir), _now())
        self.stats = {"files_written": 0, "rows_written": 0}

    def write_frame(self, name: str, frame: pd.DataFrame, footer: Optional[pd.DataFrame] = None):
        path = self.staging / name
        with open(path, "w", encoding="utf-8", newline="") as f:
            frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
            if footer is not None:
                f.write("\n")
                footer.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
        self.manifest.files.append(name)
        self.stats["files_written"] += 1
        self.stats["rows_written"] += len(frame)

    def publish(self):
        self.manifest.finished = _now()
        (self.staging / "manifest.txt").write_text(self.manifest.to_text(), encoding="utf-8", newline="\n")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for item in sorted(self.staging.iterdir()):
            os.replace(item, self.out_dir / item.name)
        self.staging.rmdir()

    def discard(self):
        shutil.rmtree(self.staging, ignore_errors=True)


def write_run(writer: OutputWriter, result: RunResult):
    writer.write_frame("invariants.csv", pd.DataFrame(records_to_columns(result.invariant_series)))
    for index, (when, state) in enumerate(result.snapshots):
        writer.write_frame(f"snapshot_{index:04d}_t{when:.6g}.csv", snapshot_frame(state))


def write_sweep(writer: OutputWriter, report: SweepReport):
    writer.write_frame("sweep_report.csv", report.to_frame(), report.fit_frame())
    if report.discretization_error:
        writer.write_frame("discretization_error.csv", pd.DataFrame([report.discretization_error]))


def write_layer(writer: OutputWriter, report: LayerReport):
    writer.write_frame("layer_report.csv", report.to_frame(), report.fit_frame())
    for index, nu in enumerate(sorted(report.profiles, reverse=True)):
        profile = report.profiles[nu]
        n = len(profile)
        centers = (np.arange(n) + 0.5) / n
        writer.write_frame(f"b_profile_{index:02d}_nu{nu:g}.csv", pd.DataFrame({"x": centers, "b": profile}))


def checks_frame(checks: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([{"check": c.name, "status": c.status(), "value": c.value, "detail": c.detail}
                         for c in checks], columns=["check", "status", "value", "detail"])


def _expect(config: ParsedConfig, wanted: type, command: str) -> None:
    if not isinstance(config, wanted):
        kind = {ScenarioConfig: "solve", SweepSpec: "sweep", LayerScenario: "layer", VerifyPlan: "verify"}[type(config)]
        raise ConfigError(f"config describes a {kind} study; run it with `mhd1d.py {kind}`, not `{command}`")


def cmd_solve(config: ScenarioConfig, writer: OutputWriter) -> int:
    result = run(config)
    write_run(writer, result)
    writer.stats.update(steps=result.step_count, wall_time=f"{result.wall_time:.2f}s",
                        snapshots=len(result.snapshots))
    return EXIT_OK


def cmd_sweep(spec: SweepSpec, writer: OutputWriter) -> int:
    report = run_sweep(spec)
    write_sweep(writer, report)
    writer.stats.update(ladder=len(report.rows))
    for name, fit in report.fits.items():
        writer.stats[f"exponent {name}"] = f"{fit.exponent:.3f}" if fit else "n/a"
    return EXIT_OK


def cmd_layer(scn: LayerScenario, writer: OutputWriter) -> int:
    report = run_layer_study(scn)
    write_layer(writer, report)
    writer.stats.update(ladder=len(report.rows))
    for name, fit in report.fits.items():
        writer.stats[f"exponent {name}"] = f"{fit.exponent:.3f}" if fit else "n/a"
    return EXIT_OK


def cmd_verify(plan: VerifyPlan, writer: OutputWriter) -> int:
    checks = run_acceptance_suite(plan.scale, plan.include_studies)
    writer.write_frame("verify_report.csv", checks_frame(checks))
    failed = [c for c in checks if not c.passed]
    writer.stats.update(checks=len(checks), failed=len(failed))
    for check in failed:
        logger.error(f"Acceptance check failed: {check.name} ({check.detail})")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


COMMANDS = {
    "solve": (cmd_solve, ScenarioConfig, "run one scenario and write snapshots plus invariants.csv"),
    "sweep": (cmd_sweep, SweepSpec, "vanishing-resistivity sweep, writes sweep_report.csv"),
    "layer": (cmd_layer, LayerScenario, "boundary-layer study, writes layer_report.csv and b profiles"),
    "verify": (cmd_verify, VerifyPlan, "run the acceptance suite, writes verify_report.csv"),
}


def print_summary(command: str, writer: OutputWriter, code: int):
    print("\n" + "=" * 60)
    print(f"MHD1D {command.upper()} SUMMARY")
    print("=" * 60)
    print(f"Scenario: {writer.manifest.scenario}")
    for key, value in writer.stats.items():
        print(f"{key}: {value}")
    print(f"Output directory: {writer.out_dir}")
    print("✅ Done" if code == EXIT_OK else f"❌ Finished with exit code {code}")
    print("=" * 60)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config_help() -> str:
    lines = ["config keys and defaults:"]
    for section, keys in CONFIG_KEYS.items():
        rendered = ", ".join(f"{k}={v}" if v is not None else k for k, v in keys.items())
        lines.append(f"  [{section}] {rendered}")
    lines.append("environment: MHD1D_THREADS caps the worker pool (default: all CPUs)")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="mhd1d.py", description="1D compressible isentropic viscous MHD laboratory",
                             epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name, (_, _, help_text) in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, description=help_text, epilog=_config_help(),
                             formatter_class=argparse.RawDescriptionHelpFormatter)
        cmd.add_argument("--config", required=True, type=Path, help="INI scenario file")
        cmd.add_argument("--out", required=True, type=Path, help="output directory")
        cmd.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                         help="treat unknown config keys as errors (default: on)")
        cmd.add_argument("--quiet", action="store_true", help="warnings only, no summary")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s - %(levelname)s - %(message)s")
    handler, wanted, _ = COMMANDS[args.command]

    try:
        config = parse_config(args.config, strict=args.strict)
        _expect(config, wanted, args.command)
    except (ConfigError, UsageError, OSError) as e:
        logger.error(str(e))
        return EXIT_CONFIG

    try:
        writer = OutputWriter(args.out, args.command, args.config, config.describe())
    except OSError as e:
        logger.error(f"cannot prepare output directory {args.out}: {e}")
        return EXIT_CONFIG
    try:
        code = handler(config, writer)
        writer.publish()
    except SolverError as e:
        writer.discard()
        nu = getattr(e, "nu", None)
        logger.error(f"Numerical failure{f' at nu={nu:g}' if nu is not None else ''}: {e}")
        return EXIT_NUMERICAL
    except MHDError as e:
        writer.discard()
        logger.error(str(e))
        return EXIT_CONFIG
    except BaseException:
        writer.discard()
        raise

    if not args.quiet:
        print_summary(args.command, writer, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
