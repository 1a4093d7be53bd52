"""Scenario runner: load a built-in or on-disk scenario, run it, report."""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional

from .config import Scenario, World, build_world, parse_scenario
from .metrics import CheckResult, MetricsReport, Recorder, evaluate_checks
from .netsim import ConfigError

BUILTIN_NAMES = [
    "scenario1-case1",
    "scenario1-case2",
    "scenario2-case1",
    "scenario2-case2",
    "scenario3",
    "scenario4",
    "scenario5",
]


def builtin_scenario_text(name: str) -> str:
    try:
        return (resources.files("ptpsim") / "scenarios" / f"{name}.conf").read_text()
    except FileNotFoundError:
        raise ConfigError(
            f"unknown scenario {name!r}; built-ins: {', '.join(BUILTIN_NAMES)}") from None


def load_scenario(name_or_path: str,
                  overrides: Optional[List[str]] = None) -> Scenario:
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            text = fh.read()
        name = os.path.splitext(os.path.basename(name_or_path))[0]
    else:
        text = builtin_scenario_text(name_or_path)
        name = name_or_path
    if overrides:
        text = _apply_overrides(text, overrides, name)
    return parse_scenario(text, name)


def _apply_overrides(text: str, overrides: List[str], name: str) -> str:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like 'section.key=value': {item!r}")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override must look like 'section.key=value': {item!r}")
        section, key = target.rsplit(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


@dataclass
class RunResult:
    scenario: Scenario
    world: World
    report: MetricsReport
    checks: List[CheckResult]

    @property
    def all_checks_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_scenario(name_or_path: str, seed: Optional[int] = None,
                 duration: Optional[float] = None,
                 overrides: Optional[List[str]] = None,
                 outdir: Optional[str] = None) -> RunResult:
    scenario = load_scenario(name_or_path, overrides)
    world = build_world(scenario, seed=seed, duration=duration)
    recorder = Recorder(world)
    recorder.start()
    world.topology.run(world.scenario.sim.duration)
    report = MetricsReport(world, recorder)
    checks = evaluate_checks(world.scenario, report)
    if outdir:
        report.write_csvs(outdir)
    return RunResult(world.scenario, world, report, checks)
