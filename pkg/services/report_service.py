import csv
import io
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib
from matplotlib.figure import Figure
import numpy as np
from pydantic import ValidationError

from api.schemas import DistributionRow, ReportRow, SummaryRow
from utils.errors import ReportError

_logger = logging.getLogger(__name__)

CSV_HEADER = ["benchmark", "config_id", "seed", "wl", "cpd_ps", "route_iters", "route_ms",
              "vert_total", "vert_per_grid", "crossings", "status", "error"]

# Fixed precision keeps the CSV bytes independent of float noise
FLOAT_FORMATS = {"wl": "{:.3f}", "cpd_ps": "{:.3f}", "route_ms": "{:.3f}", "vert_per_grid": "{:.6f}",
                 "crossings": "{:.6f}"}

PLOT_KINDS = ("bar", "line", "box")
SVG_HASH_SALT = "fpga3d"


def format_report(rows: Sequence[ReportRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        values = row.model_dump()
        writer.writerow([FLOAT_FORMATS[key].format(values[key]) if key in FLOAT_FORMATS else values[key]
                         for key in CSV_HEADER])
    return buffer.getvalue()


def write_report(rows: Sequence[ReportRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(rows))
    return path


def parse_report(text: str) -> List[ReportRow]:
    """
    Raises:
        ReportError: If the header differs from CSV_HEADER or a row does not validate.
    """

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ReportError(f"unexpected report header {header}")
    rows = []
    for number, values in enumerate(reader, start=2):
        try:
            rows.append(ReportRow(**dict(zip(CSV_HEADER, values))))
        except ValidationError as e:
            raise ReportError(f"report line {number}: {e}")
    return rows


def read_report(path: Union[str, Path]) -> List[ReportRow]:
    return parse_report(Path(path).read_text())


def _successful(rows: Sequence[ReportRow]) -> List[ReportRow]:
    return [row for row in rows if row.status == "ok"]


def _by_config(rows: Sequence[ReportRow]) -> Dict[str, List[ReportRow]]:
    groups: Dict[str, List[ReportRow]] = {}
    for row in sorted(rows, key=lambda r: (r.config_id, r.benchmark, r.seed)):
        groups.setdefault(row.config_id, []).append(row)
    return groups


def geomean(values: Sequence[float]) -> float:
    data = np.asarray(values, dtype=float)
    if data.size == 0 or np.any(data <= 0):
        raise ReportError("geometric mean needs at least one value and only positive values")
    return float(np.exp(np.mean(np.log(data))))


def summarize(rows: Sequence[ReportRow], baseline: str) -> List[SummaryRow]:
    """
    Per-config geometric means of WL and CPD over its successful rows, normalized to `baseline`.
    Reductions are in percent: 100 x (1 - ratio).

    Raises:
        ReportError: If the baseline config has no successful rows.
    """

    groups = _by_config(_successful(rows))
    if baseline not in groups:
        raise ReportError(f"baseline config '{baseline}' is not in the report")
    means = {config: (geomean([r.wl for r in group]), geomean([r.cpd_ps for r in group]))
             for config, group in groups.items()}
    base_wl, base_cpd = means[baseline]
    summary = []
    for config, (wl, cpd) in means.items():
        wl_ratio, cpd_ratio = wl / base_wl, cpd / base_cpd
        summary.append(SummaryRow(
            config_id=config, rows=len(groups[config]), wl_geomean=wl, cpd_geomean=cpd,
            wl_ratio=wl_ratio, cpd_ratio=cpd_ratio,
            wl_reduction=100.0 * (1.0 - wl_ratio), cpd_reduction=100.0 * (1.0 - cpd_ratio),
        ))
    return summary


def distribution_summary(rows: Sequence[ReportRow]) -> List[DistributionRow]:
    """ Five-number summary of CPD per config, quantiles by linear interpolation. """

    result = []
    for config, group in _by_config(_successful(rows)).items():
        low, q1, median, q3, high = np.quantile([r.cpd_ps for r in group], [0.0, 0.25, 0.5, 0.75, 1.0],
                                                method="linear")
        result.append(DistributionRow(config_id=config, count=len(group), min=float(low), q1=float(q1),
                                      median=float(median), q3=float(q3), max=float(high)))
    return result


def ratio_of(config_id: str) -> float:
    """ Vertical delay ratio encoded as the trailing "_r<ratio>" of a config id. """

    _, _, value = config_id.rpartition("_r")
    try:
        return float(value)
    except ValueError:
        raise ReportError(f"config id '{config_id}' carries no vertical delay ratio")


def plot_data(rows: Sequence[ReportRow], kind: str) -> Dict[str, List[Tuple]]:
    """
    Series drawn by emit_plots.
        bar:  config -> [(benchmark, WL geomean over seeds)]
        line: benchmark -> [(ratio, CPD geomean over seeds)] sorted by ratio
        box:  config -> [(min, q1, median, q3, max)]

    Raises:
        ReportError: On an unknown kind or a report without successful rows.
    """

    if kind not in PLOT_KINDS:
        raise ReportError(f"unknown plot kind '{kind}'; expected one of {', '.join(PLOT_KINDS)}")
    rows = _successful(rows)
    if not rows:
        raise ReportError(f"no successful rows to plot ({kind})")

    series: Dict[str, List[Tuple]] = {}
    if kind == "bar":
        for config, group in _by_config(rows).items():
            benchmarks = sorted({r.benchmark for r in group})
            series[config] = [(b, geomean([r.wl for r in group if r.benchmark == b])) for b in benchmarks]
    elif kind == "line":
        for benchmark in sorted({r.benchmark for r in rows}):
            points: Dict[float, List[float]] = {}
            for row in rows:
                if row.benchmark == benchmark:
                    points.setdefault(ratio_of(row.config_id), []).append(row.cpd_ps)
            series[benchmark] = [(ratio, geomean(values)) for ratio, values in sorted(points.items())]
    else:
        for stats in distribution_summary(rows):
            series[stats.config_id] = [(stats.min, stats.q1, stats.median, stats.q3, stats.max)]
    return series


def emit_plots(rows: Sequence[ReportRow], kind: str) -> str:
    """
    Renders one SVG document; identical input gives identical bytes.

    Raises:
        ReportError: On an unknown kind or an empty report.
    """

    series = plot_data(rows, kind)
    figure = Figure(figsize=(8, 4.5))
    axes = figure.add_subplot()

    if kind == "bar":
        benchmarks = sorted({b for points in series.values() for b, _ in points})
        positions = np.arange(len(benchmarks))
        width = 0.8 / len(series)
        for index, (config, points) in enumerate(series.items()):
            values = dict(points)
            axes.bar(positions + index * width, [values.get(b, 0.0) for b in benchmarks], width, label=config)
        axes.set_xticks(positions + 0.4 - width / 2, benchmarks, rotation=45, ha="right")
        axes.set_xlabel("Benchmark")
        axes.set_ylabel("Routed wirelength (tiles)")
    elif kind == "line":
        for benchmark, points in series.items():
            axes.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=benchmark)
        axes.set_xscale("log")
        axes.set_xlabel("Vertical delay ratio (x base switch delay)")
        axes.set_ylabel("Critical path delay (ps)")
    else:
        stats = [{"label": config, "whislo": s[0][0], "q1": s[0][1], "med": s[0][2], "q3": s[0][3],
                  "whishi": s[0][4], "fliers": []} for config, s in series.items()]
        axes.bxp(stats, showfliers=False)
        axes.tick_params(axis="x", labelrotation=45)
        axes.set_xlabel("Configuration")
        axes.set_ylabel("Critical path delay (ps)")

    if kind != "box":
        axes.legend(fontsize="small")
    axes.grid(True, alpha=0.3)
    figure.tight_layout()

    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        figure.savefig(buffer, format="svg", metadata={"Date": None})
    _logger.debug("Rendered %s plot with %d series", kind, len(series))
    return buffer.getvalue()


class ReportService:
    """ Facade used by the HTTP layer. """

    def summarize(self, rows: List[ReportRow], baseline: str) -> List[SummaryRow]:
        return summarize(rows, baseline)

    def distribution(self, rows: List[ReportRow]) -> List[DistributionRow]:
        return distribution_summary(rows)


# Dependency for FastAPI-Router
def get_report_service() -> ReportService:
    return ReportService()
