"""Experiment configuration, CSV output and cross-mechanism summaries.

Config files are INI text::

    [experiment]
    runs = 10
    base_seed = 1000
    trail = santa_fe        ; or a path to a trail file
    toroidal = true

    [defaults]              ; applied to every run section
    pop_size = 500

    [run:avsmr]             ; one section per labelled experiment
    mechanism = avsmr
    avsmr_threshold = 0.01

Unknown sections and keys are rejected with their line number.
"""

from __future__ import annotations

import configparser
import csv
import io
import os
import statistics
import tempfile
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from scipy import stats as sps

from antgp import ant_world
from antgp.adaptive_control import (
    FLOOD_VARIANTS, MECHANISMS, AgaParams, ControllerSettings, HesserMannerParams, StaticScheduleParams,
)
from antgp.engine import RunConfig, RunTrace
from antgp.gp_core import ConfigurationError, EvolutionParams


class ConfigError(ConfigurationError):
    def __init__(self, message: str, key_path: str = "", line: int | None = None):
        where = key_path + (f" (line {line})" if line else "")
        super().__init__(f"{where}: {message}" if where else message)
        self.key_path = key_path
        self.line = line


EXPERIMENT_KEYS = {"runs": int, "base_seed": int, "trail": str, "toroidal": bool}

_EVOLUTION_KEYS = {f.name: f.type for f in fields(EvolutionParams) if f.name != "rng_seed"}

RUN_KEYS: dict[str, type] = {
    "mechanism": str,
    "memory_size": int,
    **{name: (int if name in ("pop_size", "max_generations", "max_depth", "elite_count",
                              "step_budget", "mutation_depth") else float)
       for name in _EVOLUTION_KEYS},
    "feedback_alpha": float,
    "avsmr_threshold": float,
    "avsmr_streak": int,
    "avsmr_n_limit": int,
    "flood_window": int,
    "flood_theta": float,
    "flood_survivors": int,
    "flood_survivor_policy": str,
    "fmlps_duration": int,
    "fmlps_exponent": float,
    "static_L": int,
    "hm_alpha": float,
    "hm_beta": float,
    "hm_gamma": float,
    "hm_lambda": int,
    "hm_L": int,
    "aga_k1": float,
    "aga_k2": float,
    "aga_k3": float,
    "aga_k4": float,
}

_SETTINGS_DIRECT = {"feedback_alpha", "avsmr_threshold", "avsmr_streak", "avsmr_n_limit",
                    "flood_window", "flood_theta", "flood_survivors", "flood_survivor_policy",
                    "fmlps_duration", "fmlps_exponent"}


@dataclass
class ExperimentSpec:
    experiments: list[tuple[str, RunConfig]]
    output_dir: Path | None = None
    emit_traces: bool = True
    emit_summary: bool = True

    def __post_init__(self):
        labels = [label for label, _ in self.experiments]
        if len(set(labels)) != len(labels):
            raise ConfigError("experiment labels must be unique")
        if not labels:
            raise ConfigError("no [run:<label>] sections")

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.experiments]


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """(section, key) -> 1-based line; key None marks the section header."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            index.setdefault((section, None), n)
        elif section is not None:
            for sep in ("=", ":"):
                if sep in line:
                    key = line.split(sep, 1)[0].strip().lower()
                    index.setdefault((section, key), n)
                    break
    return index


def _convert(raw: str, kind: type, key_path: str, line: int | None):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}", key_path, line) from None


def _build_run(label: str, values: dict, exp: dict, trail, lines, section: str) -> RunConfig:
    def where(key):
        return f"{section}.{key}", lines.get((section, key)) or lines.get(("defaults", key))

    mechanism = values.pop("mechanism", "") or "none"
    if mechanism not in MECHANISMS:
        raise ConfigError(f"unknown mechanism {mechanism!r}", *where("mechanism"))
    evo = {k: values.pop(k) for k in list(values) if k in _EVOLUTION_KEYS}
    memory_size = values.pop("memory_size", ant_world.MEMORY_SIZE)
    def checked(build, keys):
        try:
            return build()
        except ConfigError:
            raise
        except ConfigurationError as exc:
            bad = next((k for k in keys if k in str(exc)), keys[0] if keys else "")
            raise ConfigError(str(exc), *where(bad)) from None

    params = checked(lambda: EvolutionParams(**evo), sorted(evo, key=len, reverse=True) or ["pop_size"])
    direct = {k: values.pop(k) for k in list(values) if k in _SETTINGS_DIRECT}
    static = {"L": values.pop("static_L")} if "static_L" in values else {}
    hm = {name: values.pop(key) for key, name in (("hm_alpha", "alpha"), ("hm_beta", "beta"),
                                                  ("hm_gamma", "gamma"), ("hm_lambda", "lam"),
                                                  ("hm_L", "L")) if key in values}
    hm.setdefault("lam", params.pop_size)
    aga = {k[4:]: values.pop(k) for k in list(values) if k.startswith("aga_")}
    if direct.get("flood_survivor_policy", "truncation") not in ("truncation", "roulette"):
        raise ConfigError("must be 'truncation' or 'roulette'", *where("flood_survivor_policy"))
    settings = checked(lambda: ControllerSettings(
        static=StaticScheduleParams(**static),
        hesser_manner=HesserMannerParams(**hm),
        aga=AgaParams(**aga),
        **direct,
    ), ["static_L", "hm_alpha", "aga_k1"])
    if mechanism in FLOOD_VARIANTS and settings.survivor_count(params.pop_size) >= params.pop_size:
        raise ConfigError("flood_survivors must be below pop_size", *where("flood_survivors"))
    assert not values, values
    return RunConfig(params=params, mechanism=mechanism, settings=settings, trail=trail,
                     runs=exp["runs"], base_seed=exp["base_seed"], memory_size=memory_size)


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    """Resolve INI text into an :class:`ExperimentSpec`, defaults applied."""
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00none",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str.lower
    lines = _line_index(text)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from None

    run_keys = {k.lower(): v for k, v in RUN_KEYS.items()}
    canonical = {k.lower(): k for k in RUN_KEYS}

    exp = {"runs": 1, "base_seed": 0, "trail": "santa_fe", "toroidal": True}
    defaults: dict = {}
    run_sections = []
    for section in parser.sections():
        if section == "experiment":
            for key, raw in parser.items(section):
                if key not in EXPERIMENT_KEYS:
                    raise ConfigError("unknown key", f"{section}.{key}", lines.get((section, key)))
                exp[key] = _convert(raw, EXPERIMENT_KEYS[key], f"{section}.{key}", lines.get((section, key)))
        elif section == "defaults":
            for key, raw in parser.items(section):
                if key not in run_keys:
                    raise ConfigError("unknown key", f"{section}.{key}", lines.get((section, key)))
                defaults[canonical[key]] = _convert(raw, run_keys[key], f"{section}.{key}",
                                                    lines.get((section, key)))
        elif section.startswith("run:") and section[4:].strip():
            run_sections.append(section)
        else:
            raise ConfigError("unknown section; expected [experiment], [defaults] or [run:<label>]",
                              section, lines.get((section, None)))

    if exp["runs"] < 1:
        raise ConfigError("must be >= 1", "experiment.runs", lines.get(("experiment", "runs")))
    trail_ref = exp["trail"]
    if trail_ref == "santa_fe":
        trail = ant_world.santa_fe_trail()
        if not exp["toroidal"]:
            trail = replace(trail, toroidal=False)
    else:
        path = Path(trail_ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            trail = ant_world.load_trail(path, toroidal=exp["toroidal"])
        except (OSError, ant_world.TrailFormatError) as exc:
            raise ConfigError(str(exc), "experiment.trail", lines.get(("experiment", "trail"))) from None

    experiments = []
    for section in run_sections:
        values = dict(defaults)
        for key, raw in parser.items(section):
            if key not in run_keys:
                raise ConfigError("unknown key", f"{section}.{key}", lines.get((section, key)))
            values[canonical[key]] = _convert(raw, run_keys[key], f"{section}.{key}",
                                              lines.get((section, key)))
        label = section[4:].strip()
        experiments.append((label, _build_run(label, values, exp, trail, lines, section)))
    return ExperimentSpec(experiments)


def load_config(path) -> ExperimentSpec:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def reference_config_text() -> str:
    return resources.files("antgp").joinpath("data/reference.ini").read_text()


# --- CSV output ----------------------------------------------------------------

TRACE_HEADER = ("run", "generation", "avg_fitness", "max_fitness", "p_mutation", "event")
SUMMARY_HEADER = ("label", "run", "best_fitness", "success", "generations_used",
                  "flood_events", "avsmr_events")
LONG_HEADER = ("label", "run", "best_fitness")


def emit_trace_csv(trace: RunTrace, sink, header: bool = True) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    if header:
        writer.writerow(TRACE_HEADER)
    for r in trace.records:
        writer.writerow((trace.run, r.generation, f"{r.avg_fitness:.6f}", f"{r.max_fitness:.6f}",
                         f"{r.p_mutation:.6f}", r.event))


def traces_to_csv(traces: list[RunTrace]) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRACE_HEADER) + "\n")
    for trace in traces:
        emit_trace_csv(trace, buf, header=False)
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- summaries -------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRow:
    label: str
    run: int
    best_fitness: int
    success: bool
    generations_used: int
    flood_events: int
    avsmr_events: int


@dataclass
class LabelSummary:
    label: str
    best_sorted: list[int]
    median: float
    successes: int
    runs: int


@dataclass
class PairwiseComparison:
    better: str
    worse: str
    median_better: float
    median_worse: float
    p_value: float  # one-sided rank-sum, H1: `better` stochastically larger

    @property
    def median_holds(self) -> bool:
        return self.median_better >= self.median_worse


@dataclass
class OrderingReport:
    labels: list[LabelSummary]
    pairs: list[PairwiseComparison] = field(default_factory=list)

    def by_label(self, label: str) -> LabelSummary:
        return next(s for s in self.labels if s.label == label)

    def compare(self, better: str, worse: str) -> PairwiseComparison:
        for p in self.pairs:
            if p.better == better and p.worse == worse:
                return p
        return rank_sum_comparison(self.by_label(better), self.by_label(worse))

    def render(self) -> str:
        out = ["label,runs,successes,median,best_fitness_sorted"]
        for s in self.labels:
            out.append(f"{s.label},{s.runs},{s.successes},{s.median:.1f},"
                       + " ".join(str(v) for v in s.best_sorted))
        ranked = sorted(self.labels, key=lambda s: (-s.median, s.label))
        out.append("")
        out.append("median ordering: " + " >= ".join(f"{s.label}({s.median:.1f})" for s in ranked))
        out.append("")
        out.append("pairwise (one-sided rank-sum, H1: first > second)")
        for p in self.pairs:
            flag = "" if p.median_holds else "  INVERSION"
            out.append(f"{p.better} vs {p.worse}: median {p.median_better:.1f} vs {p.median_worse:.1f}, "
                       f"p={p.p_value:.4f}{flag}")
        return "\n".join(out) + "\n"


def rank_sum_comparison(a: LabelSummary, b: LabelSummary) -> PairwiseComparison:
    if len(set(a.best_sorted) | set(b.best_sorted)) == 1:
        p = 1.0
    else:
        p = float(sps.mannwhitneyu(a.best_sorted, b.best_sorted, alternative="greater").pvalue)
    return PairwiseComparison(a.label, b.label, a.median, b.median, p)


def summarize(traces_by_label: dict[str, list[RunTrace]]) -> tuple[list[SummaryRow], OrderingReport]:
    rows = []
    labels = []
    for label, traces in traces_by_label.items():
        if not traces:
            raise ValueError(f"label {label!r} has no runs")
        best = []
        for t in traces:
            rows.append(SummaryRow(label, t.run, t.best_fitness, t.success, t.generations_used,
                                   t.event_count("flood"), t.event_count("avsmr_high")))
            best.append(t.best_fitness)
        labels.append(LabelSummary(label, sorted(best, reverse=True), float(statistics.median(best)),
                                   sum(t.success for t in traces), len(traces)))
    report = OrderingReport(labels)
    ranked = sorted(labels, key=lambda s: (-s.median, s.label))
    for i, a in enumerate(ranked):
        for b in ranked[i + 1:]:
            report.pairs.append(rank_sum_comparison(a, b))
    return rows, report


def summary_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for r in rows:
        writer.writerow((r.label, r.run, r.best_fitness, int(r.success), r.generations_used,
                         r.flood_events, r.avsmr_events))
    return buf.getvalue()


def long_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LONG_HEADER)
    for r in rows:
        writer.writerow((r.label, r.run, r.best_fitness))
    return buf.getvalue()


def write_outputs(out_dir: Path, traces_by_label: dict[str, list[RunTrace]], emit_traces: bool = True,
                  emit_summary: bool = True) -> OrderingReport:
    out_dir = Path(out_dir)
    if emit_traces:
        for label, traces in traces_by_label.items():
            write_atomic(out_dir / "traces" / f"{label}.csv", traces_to_csv(traces))
    rows, report = summarize(traces_by_label)
    if emit_summary:
        write_atomic(out_dir / "summary.csv", summary_csv(rows))
        write_atomic(out_dir / "best_fitness_long.csv", long_csv(rows))
        write_atomic(out_dir / "ordering.txt", report.render())
    return report
