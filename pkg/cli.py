from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from api.schemas import DesignSpaceBounds
from fabric.models import ConnectionType
from utils.config_utils import get_settings
from utils.errors import FabricError
from utils.log_utils import setup_logging

app = typer.Typer(help="3D FPGA architecture exploration toolkit.", no_args_is_help=True)
arch_app = typer.Typer(help="Architecture documents.", no_args_is_help=True)
rrg_app = typer.Typer(help="Routing resource graphs.", no_args_is_help=True)
flow_app = typer.Typer(help="Single benchmark flows.", no_args_is_help=True)
sweep_app = typer.Typer(help="Parameter sweeps.", no_args_is_help=True)
report_app = typer.Typer(help="CSV reports and plots.", no_args_is_help=True)
space_app = typer.Typer(help="Design space size.", no_args_is_help=True)
app.add_typer(arch_app, name="arch")
app.add_typer(rrg_app, name="rrg")
app.add_typer(flow_app, name="flow")
app.add_typer(sweep_app, name="sweep")
app.add_typer(report_app, name="report")
app.add_typer(space_app, name="space")

console = Console()


def _fail(message: str) -> None:
    console.print(f"[bold red]error:[/bold red] {message}")
    raise typer.Exit(code=1)


@app.callback()
def main(log_level: Optional[str] = typer.Option(None, help="Overrides FPGA3D_LOG_LEVEL.")):
    try:
        settings = get_settings()
    except ValueError as e:
        _fail(str(e))
    setup_logging((log_level or settings.log_level).upper())


# arch

@arch_app.command("validate")
def arch_validate(path: Path = typer.Argument(..., help="Architecture YAML document.")):
    """ Parses and validates an architecture document. """

    from services.arch_service import load_arch, spec_hash

    try:
        spec = load_arch(path)
    except FabricError as e:
        _fail(str(e))
    console.print(f"[green]valid[/green] {path} spec={spec_hash(spec)[:16]}")


# rrg

@rrg_app.command("build")
def rrg_build(arch: Path = typer.Argument(..., help="Architecture YAML document."),
              out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the graph in interchange format."),
              seed: int = typer.Option(0, help="Seed of the Random site placement.")):
    """ Builds the full 3D routing resource graph and prints its census. """

    from services.arch_service import load_arch
    from services.fabric_graph_service import node_census, serialize_rrg
    from services.vertical_service import build_3d_rrg, count_vertical

    try:
        rrg = build_3d_rrg(load_arch(arch), seed)
    except FabricError as e:
        _fail(str(e))
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(serialize_rrg(rrg))
        console.print(f"wrote {out}")
    _print_census(node_census(rrg), len(rrg.edges))
    counts = count_vertical(rrg)
    console.print(f"vertical connections: {counts.total} ({counts.per_grid:.3f} per grid) {counts.breakdown}")


@rrg_app.command("dump")
def rrg_dump(path: Path = typer.Argument(..., help="Graph in interchange format.")):
    """ Reads a serialized graph and prints its census. """

    from services.fabric_graph_service import deserialize_rrg, node_census

    try:
        rrg = deserialize_rrg(path.read_text())
    except FabricError as e:
        _fail(str(e))
    console.print(f"{rrg.width}x{rrg.height}x{rrg.layers} W={rrg.channel_width} spec={rrg.spec_hash[:16]}")
    _print_census(node_census(rrg), len(rrg.edges))


@rrg_app.command("netlist")
def rrg_netlist(arch: Path = typer.Argument(..., help="Architecture YAML document."),
                out_dir: Path = typer.Option(..., "--out", "-o", help="Directory of the netlist documents."),
                seed: int = typer.Option(0, help="Seed of the Random site placement.")):
    """ Emits the structural fabric netlist (top, one document per layer, library). """

    from services.arch_service import load_arch
    from services.fabricgen_service import emit_netlist, write_netlist
    from services.flow_service import build_fabric

    try:
        spec = load_arch(arch)
        _, model = build_fabric(spec, seed)
    except FabricError as e:
        _fail(str(e))
    paths = write_netlist(emit_netlist(model, spec), out_dir)
    console.print(f"wrote {len(paths)} files to {out_dir}, {model.length} config bits")


def _print_census(census, edges: int) -> None:
    table = Table("kind", "nodes")
    for kind, count in census.items():
        table.add_row(kind.value, str(count))
    table.add_row("edges", str(edges))
    console.print(table)


# flow

@flow_app.command("run")
def flow_run(arch: Path = typer.Argument(..., help="Architecture YAML document."),
             blif: Path = typer.Argument(..., help="Benchmark BLIF file."),
             seed: int = typer.Option(1, help="Placement and site seed."),
             out_dir: Optional[Path] = typer.Option(None, help="Artifact directory; defaults to FPGA3D_OUTPUT_DIR."),
             verify: bool = typer.Option(False, help="Also verify the bitstream against the golden simulation."),
             vectors: int = typer.Option(200, help="Random vectors used by --verify.")):
    """ Runs pack, place, route and timing for one benchmark and prints its report row. """

    from services.arch_service import load_arch
    from services.bench_service import load_blif
    from services.flow_service import run_flow, verify_roundtrip
    from services.report_service import format_report

    try:
        spec = load_arch(arch)
        netlist = load_blif(blif)
    except FabricError as e:
        _fail(str(e))
    row = run_flow(spec, netlist, seed, benchmark=blif.stem, out_dir=out_dir or get_settings().output_dir)
    console.print(format_report([row]), end="")
    if row.status != "ok":
        raise typer.Exit(code=1)
    if verify:
        report = verify_roundtrip(spec, netlist, seed, vectors)
        console.print(report.dump(), end="")
        if not report.passed:
            raise typer.Exit(code=1)


# sweep

@sweep_app.command("run")
def sweep_run(experiment: Path = typer.Argument(..., help="Experiment YAML config."),
              jobs: Optional[int] = typer.Option(None, help="Parallel flows; overrides the config."),
              output_dir: Optional[Path] = typer.Option(None, help="Overrides the config output directory."),
              seeds: Optional[List[int]] = typer.Option(None, "--seed", help="Replaces the seed axis."),
              ratios: Optional[List[float]] = typer.Option(None, "--ratio", help="Replaces the vertical delay ratio axis."),
              benchmarks: Optional[List[str]] = typer.Option(None, "--benchmark", help="Restricts the benchmarks."),
              record_timing: Optional[bool] = typer.Option(None, "--timing/--no-timing",
                                                           help="Record routing wall time (route_ms)."),
              allow_failures: bool = typer.Option(False, help="Exit 0 even if some flows failed.")):
    """ Runs every (config, benchmark, seed) combination and writes report.csv. """

    from services.flow_service import load_experiment, run_sweep
    from services.report_service import write_report

    settings = get_settings()
    try:
        config = load_experiment(experiment)
    except ValueError as e:
        _fail(str(e))
    overrides = {"seeds": seeds, "vertical_delay_ratios": ratios, "benchmarks": benchmarks}
    config = config.model_copy(update={key: value for key, value in overrides.items() if value})
    if record_timing is not None:
        config = config.model_copy(update={"record_timing": record_timing})

    root = output_dir or Path(config.output_dir or settings.output_dir) / config.name
    try:
        rows = run_sweep(config, jobs or (config.jobs if config.jobs > 1 else settings.jobs), out_dir=root)
    except (FabricError, ValueError) as e:
        _fail(str(e))
    path = write_report(rows, root / "report.csv")
    failed = [row for row in rows if row.status != "ok"]
    console.print(f"wrote {path}: {len(rows)} rows, {len(failed)} failed")
    if failed and not allow_failures:
        raise typer.Exit(code=1)


# report

@report_app.command("summarize")
def report_summarize(csv_path: Path = typer.Argument(..., help="Report CSV."),
                     baseline: str = typer.Option(..., help="config_id every ratio is normalized to.")):
    """ Geometric-mean WL/ CPD per config relative to the baseline. """

    from services.report_service import read_report, summarize

    try:
        summary = summarize(read_report(csv_path), baseline)
    except FabricError as e:
        _fail(str(e))
    table = Table("config_id", "rows", "WL geomean", "CPD geomean (ps)", "WL reduc. %", "CPD reduc. %")
    for row in summary:
        table.add_row(row.config_id, str(row.rows), f"{row.wl_geomean:.2f}", f"{row.cpd_geomean:.1f}",
                      f"{row.wl_reduction:.2f}", f"{row.cpd_reduction:.2f}")
    console.print(table)


@report_app.command("plot")
def report_plot(csv_path: Path = typer.Argument(..., help="Report CSV."),
                kind: str = typer.Option("bar", help="bar, line or box."),
                out: Optional[Path] = typer.Option(None, "--out", "-o", help="SVG path; defaults next to the CSV.")):
    """ Renders a bar (WL per benchmark), line (CPD vs ratio) or box (CPD over seeds) plot. """

    from services.report_service import emit_plots, read_report

    try:
        svg = emit_plots(read_report(csv_path), kind)
    except FabricError as e:
        _fail(str(e))
    target = out or csv_path.with_name(f"{csv_path.stem}_{kind}.svg")
    target.write_text(svg)
    console.print(f"wrote {target}")


# space

@space_app.command("count")
def space_count(types: List[ConnectionType] = typer.Option(..., "--type", help="Connection type (repeatable)."),
                index_min: int = typer.Option(-3, help="Smallest pattern entry."),
                index_max: int = typer.Option(3, help="Largest pattern entry."),
                pct_min: int = typer.Option(1, help="Smallest 3D SB percentage."),
                pct_max: int = typer.Option(100, help="Largest 3D SB percentage.")):
    """ Counts unique vertical configurations. """

    from services.arch_service import enumerate_design_space

    try:
        bounds = DesignSpaceBounds(types=types, index_min=index_min, index_max=index_max,
                                   percentages=list(range(pct_min, pct_max + 1)))
        count = enumerate_design_space(bounds)
    except ValueError as e:
        _fail(str(e))
    console.print(f"{count:,}")


@app.command("serve")
def serve(host: str = typer.Option("127.0.0.1"), port: int = typer.Option(8000)):
    """ Runs the HTTP API with uvicorn. """

    import uvicorn

    uvicorn.run("main:app", host=host, port=port)


if __name__ == "__main__":
    app()
