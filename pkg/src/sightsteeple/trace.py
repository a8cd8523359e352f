"""Line-oriented run traces and replay by re-execution.

Layout::

    # sightsteeple-trace v1
    # config <canonical json>
    # seed <int>
    # suite <name>
    # schedule <comma separated choices>      (exhaustive runs only)
    <epoch> | <event> | <player> | <digest prefix or -> | <detail>
    ...
    # end <number of event lines> <report digest>
"""
from __future__ import annotations

from pathlib import Path

from .config import ConfigError, from_json
from .netsim import Schedule
from .report import SUITES, RunReport, build_report
from .simulation import World

VERSION = "# sightsteeple-trace v1"


class ReplayError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def trace_lines(world: World, report: RunReport, suite: str = "all") -> list[str]:
    out = [VERSION, f"# config {world.config.canonical_json()}", f"# seed {world.seed}", f"# suite {suite}"]
    sched = world.network.schedule
    if sched is not None:
        out.append("# schedule " + ",".join(map(str, sched.choices)))
    body = [ev.line() for ev in world.events]
    return out + body + [f"# end {len(body)} {report.digest}"]


def write_trace(path: str | Path, world: World, report: RunReport, suite: str = "all") -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(trace_lines(world, report, suite)) + "\n")
    return p


def _header(lines: list[str], i: int, key: str) -> str:
    prefix = f"# {key} "
    if i >= len(lines) or not lines[i].startswith(prefix):
        raise ReplayError(i + 1, f"expected '# {key}' header")
    return lines[i][len(prefix):]


def replay(path: str | Path) -> RunReport:
    """Re-run the traced configuration and demand a line-for-line identical trace."""
    lines = Path(path).read_text().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != VERSION:
        got = lines[0] if lines else "<empty file>"
        raise ReplayError(1, f"version mismatch: expected {VERSION!r}, got {got!r}")
    try:
        config = from_json(_header(lines, 1, "config"))
    except (ValueError, ConfigError) as exc:
        if isinstance(exc, ReplayError):
            raise
        raise ReplayError(2, f"corrupt config: {exc}") from None
    try:
        seed = int(_header(lines, 2, "seed"))
    except ValueError:
        raise ReplayError(3, "corrupt seed") from None
    suite = _header(lines, 3, "suite")
    if suite not in SUITES:
        raise ReplayError(4, f"unknown suite {suite!r}")
    start = 4
    schedule = None
    if start < len(lines) and lines[start].startswith("# schedule"):
        raw = lines[start][len("# schedule"):].strip()
        try:
            schedule = Schedule([int(x) for x in raw.split(",") if x])
        except ValueError:
            raise ReplayError(start + 1, "corrupt schedule") from None
        start += 1
    end = lines[-1]
    parts = end.split(" ")
    if not end.startswith("# end ") or len(parts) != 4:
        raise ReplayError(len(lines), "truncated trace: missing end marker")
    try:
        count = int(parts[2])
    except ValueError:
        raise ReplayError(len(lines), "corrupt end marker") from None
    body = lines[start:-1]
    if count != len(body):
        raise ReplayError(len(lines), f"truncated trace: end marker promises {count} lines, found {len(body)}")
    world = World(config, seed, schedule).run()
    report = build_report(world, suite)
    fresh = [ev.line() for ev in world.events]
    for k, (want, got) in enumerate(zip(fresh, body)):
        if want != got:
            raise ReplayError(start + k + 1, f"trace diverges: expected {want!r}, found {got!r}")
    if len(fresh) != len(body):
        raise ReplayError(len(lines), f"re-execution produced {len(fresh)} lines, trace has {len(body)}")
    if report.digest != parts[3]:
        raise ReplayError(len(lines), "report digest differs from the recorded one")
    return report
