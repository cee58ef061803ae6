import pytest

from api.schemas import ExperimentConfig, ReportRow
from fabric.models import ConnectionType, LayerClass
from services.bench_service import parse_blif
from services.flow_service import (
    expand_configs, load_experiment, make_config_id, pattern_label, plan_jobs, planar_baseline, run_flow, run_sweep,
    select_benchmarks,
)
from services.report_service import (
    CSV_HEADER, distribution_summary, emit_plots, format_report, geomean, parse_report, plot_data, ratio_of,
    read_report, summarize, write_report,
)
from services.vertical_service import NAMED_PATTERNS
from tests.conftest import ARCH_DIR, MANIFEST, REPO_ROOT
from utils.errors import ReportError

SB_4X4 = str(ARCH_DIR / "sb_2layer_4x4.yaml")


def sweep_config(**overrides) -> ExperimentConfig:
    values = {"name": "tiny", "base_arch": SB_4X4, "manifest": str(MANIFEST), "connection_types": ["None2D", "SB"],
              "benchmarks": ["and2", "or3"], "seeds": [1], "record_timing": False}
    values.update(overrides)
    return ExperimentConfig(**values)


def row(config_id: str, benchmark: str = "b", seed: int = 1, wl: float = 10.0, cpd_ps: float = 100.0,
        status: str = "ok") -> ReportRow:
    return ReportRow(benchmark=benchmark, config_id=config_id, seed=seed, wl=wl, cpd_ps=cpd_ps, status=status)


# Config ids

def test_config_ids(make_spec, sb_spec, planar_spec):
    assert make_config_id(sb_spec) == "SB_p100_RepeatedInterval_subset_r0.739"
    assert make_config_id(planar_spec) == "None2D_r0.739"
    assert make_config_id(make_spec(layers=2, connection_type="CB")) == "CB_r0.739"
    assert make_config_id(make_spec(layers=2, connection_type="SB", sb_percentage=50, sb_placement="Core",
                                    timing={"vertical_delay_ratio": 2.0})) == "SB_p50_Core_subset_r2"


def test_pattern_label_names_catalog_patterns():
    assert pattern_label(NAMED_PATTERNS["revolving_offset"]) == "revolving_offset"
    label = pattern_label(NAMED_PATTERNS["subset"].model_copy(update={"input": [1, 1, 1, 1]}))
    assert label.startswith("pat") and len(label) == 11


# Sweep expansion

def test_pattern_free_types_collapse(sb_spec):
    config = sweep_config(connection_types=["None2D", "CB", "SB"], sb_percentages=[50, 100],
                          sb_placements=["RepeatedInterval", "Core"])

    configs = expand_configs(config, sb_spec)

    assert sorted(configs) == sorted([
        "None2D_r0.739", "CB_r0.739",
        "SB_p50_RepeatedInterval_subset_r0.739", "SB_p100_RepeatedInterval_subset_r0.739",
        "SB_p50_Core_subset_r0.739", "SB_p100_Core_subset_r0.739",
    ])
    assert configs["None2D_r0.739"].layer_count == 1
    assert configs["CB_r0.739"].layer_count == 2


def test_ratio_axis_and_named_patterns(sb_spec):
    config = sweep_config(connection_types=["SB"], sb_patterns=["subset", "random"],
                          vertical_delay_ratios=[0.5, 10])

    configs = expand_configs(config, sb_spec)

    assert set(configs) == {"SB_p100_RepeatedInterval_subset_r0.5", "SB_p100_RepeatedInterval_subset_r10",
                            "SB_p100_RepeatedInterval_random_r0.5", "SB_p100_RepeatedInterval_random_r10"}
    assert configs["SB_p100_RepeatedInterval_random_r10"].vertical.sb_pattern == NAMED_PATTERNS["random"]


def test_unknown_pattern_name_is_rejected(sb_spec):
    with pytest.raises(ValueError, match="unknown pattern name"):
        expand_configs(sweep_config(sb_patterns=["zigzag"]), sb_spec)


def test_planar_baseline_keeps_the_logic_layer(load_arch_file):
    spec = load_arch_file("nonlogic_hetero_2layer_4x4.yaml")

    baseline = planar_baseline(spec)

    assert baseline.layer_count == 1
    assert baseline.layers[0].columns == spec.layers[1].columns
    assert baseline.layers[0].layer_class == LayerClass.Homogeneous
    assert baseline.vertical.connection_type == ConnectionType.None2D


def test_benchmark_selection():
    assert select_benchmarks(sweep_config(benchmarks=[])) == []
    assert [entry.name for entry in select_benchmarks(sweep_config())] == ["and2", "or3"]
    assert len(select_benchmarks(sweep_config(benchmarks=None))) == 12
    with pytest.raises(ValueError, match="nosuch"):
        select_benchmarks(sweep_config(benchmarks=["and2", "nosuch"]))


def test_jobs_cover_the_product():
    jobs = plan_jobs(sweep_config(seeds=[1, 2]))

    assert len(jobs) == 2 * 2 * 2
    assert {job.config_id for job in jobs} == {"None2D_r0.739", "SB_p100_RepeatedInterval_subset_r0.739"}


def test_bundled_experiments_load():
    for path in sorted((REPO_ROOT / "experiments").glob("*.yaml")):
        config = load_experiment(path)
        assert config.seeds


def test_invalid_experiment_is_rejected(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: x\nbase_arch: a.yaml\nsb_percentages: [120]\n")

    with pytest.raises(ValueError, match="Invalid experiment config"):
        load_experiment(path)


# Flows

def test_failed_flow_keeps_its_row(make_spec):
    netlist = parse_blif(".model wide\n.inputs a b c\n.outputs y\n.names a b c y\n111 1\n.end\n")

    result = run_flow(make_spec(lut_size=2), netlist, seed=3)

    assert result.status == "failed"
    assert result.error.startswith("PackingError")
    assert (result.benchmark, result.seed) == ("wide", 3)


def test_flow_writes_route_and_bitstream(sb_spec, load_benchmark, tmp_path):
    result = run_flow(sb_spec, load_benchmark("and2"), seed=1, out_dir=tmp_path, record_timing=False)

    target = tmp_path / result.config_id
    assert result.status == "ok"
    assert result.route_ms == 0.0
    assert result.vert_total == 400
    assert (target / "and2_s1.route").is_file()
    assert (target / "and2_s1.bitstream").is_file()
    assert (target / "and2_s1.bin").is_file()


def test_sweep_report_is_independent_of_parallelism():
    config = sweep_config()

    serial = format_report(run_sweep(config, jobs=1))
    parallel = format_report(run_sweep(config, jobs=2))

    assert serial == parallel
    assert len(serial.splitlines()) == 1 + 2 * 2


@pytest.mark.slow
def test_sweep_report_is_identical_for_1_4_and_8_workers():
    config = sweep_config(benchmarks=["and2", "mux2", "adder2", "counter1"], seeds=[1, 2])

    reports = {jobs: format_report(run_sweep(config, jobs=jobs)) for jobs in (1, 4, 8)}

    assert len(reports[1].splitlines()) == 1 + 2 * 4 * 2
    assert reports[4] == reports[1]
    assert reports[8] == reports[1]


def study(name: str, **overrides) -> ExperimentConfig:
    """ Bundled experiment with absolute paths and the given axes replaced. """

    config = load_experiment(REPO_ROOT / "experiments" / f"{name}.yaml")
    values = {**config.model_dump(), "base_arch": str(REPO_ROOT / config.base_arch), "manifest": str(MANIFEST),
              **overrides}
    return ExperimentConfig.model_validate(values)


@pytest.mark.slow
def test_cb_wirelength_does_not_exceed_the_planar_baseline():
    config = study("study1_connection_types", connection_types=["None2D", "CB"], seeds=[1, 2, 3, 4, 5])

    rows = run_sweep(config, jobs=4)

    assert all(row.status == "ok" for row in rows)
    wl = {prefix: geomean([row.wl for row in rows if row.config_id.startswith(prefix)]) for prefix in ("None2D", "CB")}
    assert wl["CB"] <= wl["None2D"]


@pytest.mark.slow
def test_perimeter_sites_need_at_least_as_many_routing_iterations_as_repeated_interval():
    """ Both site plans share one placement per seed; iteration counts stand in for routing time. """

    config = study("study2_sb_placement", sb_percentages=[25], sb_placements=["RepeatedInterval", "Perimeter"],
                   seeds=[1, 2, 3, 4, 5])

    rows = run_sweep(config, jobs=4)

    assert all(row.status == "ok" for row in rows)
    iterations = {placement: [row.route_iters for row in rows if f"_{placement}_" in row.config_id]
                  for placement in ("RepeatedInterval", "Perimeter")}
    assert len(iterations["Perimeter"]) == len(iterations["RepeatedInterval"]) == 12 * 5
    assert geomean(iterations["Perimeter"]) >= geomean(iterations["RepeatedInterval"])


def test_empty_benchmark_list_gives_a_header_only_report(tmp_path):
    rows = run_sweep(sweep_config(benchmarks=[]))

    path = write_report(rows, tmp_path / "report.csv")

    assert rows == []
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


# Reports

def test_report_round_trip(tmp_path):
    rows = [ReportRow(benchmark="adder2", config_id="SB_r0.739", seed=2, wl=12.5, cpd_ps=512.25, route_iters=3,
                      route_ms=1.5, vert_total=400, vert_per_grid=16.0, crossings=0.25),
            ReportRow(benchmark="and2", config_id="CB_r0.739", seed=1, status="failed", error="UnroutableError: x")]

    again = read_report(write_report(rows, tmp_path / "report.csv"))

    assert again == rows


def test_report_rejects_foreign_header():
    with pytest.raises(ReportError, match="header"):
        parse_report("benchmark,config\nx,y\n")


def test_geomean():
    assert geomean([1.0, 4.0]) == pytest.approx(2.0)
    with pytest.raises(ReportError):
        geomean([])
    with pytest.raises(ReportError):
        geomean([1.0, 0.0])


def test_summarize_normalizes_to_the_baseline():
    rows = [row("base", "a", wl=10.0, cpd_ps=100.0), row("base", "b", wl=40.0, cpd_ps=400.0),
            row("sb", "a", wl=10.0, cpd_ps=50.0), row("sb", "b", wl=10.0, cpd_ps=200.0),
            row("sb", "c", wl=1.0, cpd_ps=1.0, status="failed")]

    summary = {entry.config_id: entry for entry in summarize(rows, "base")}

    assert summary["base"].wl_ratio == pytest.approx(1.0)
    assert summary["sb"].rows == 2
    assert summary["sb"].wl_geomean == pytest.approx(10.0)
    assert summary["sb"].wl_reduction == pytest.approx(50.0)
    assert summary["sb"].cpd_reduction == pytest.approx(50.0)


def test_summarize_needs_the_baseline():
    with pytest.raises(ReportError, match="baseline"):
        summarize([row("sb")], "None2D_r0.739")


def test_distribution_quantiles():
    rows = [row("sb", seed=seed, cpd_ps=float(seed)) for seed in range(1, 6)]

    (stats,) = distribution_summary(rows)

    assert (stats.min, stats.q1, stats.median, stats.q3, stats.max) == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert stats.count == 5


def test_ratio_is_read_from_the_config_id():
    assert ratio_of("SB_p100_RepeatedInterval_subset_r0.739") == pytest.approx(0.739)
    assert ratio_of("CB_r10") == 10.0
    with pytest.raises(ReportError):
        ratio_of("planar")


def test_plot_series():
    rows = [row("SB_r2", "a", cpd_ps=300.0), row("SB_r0.5", "a", cpd_ps=100.0),
            row("SB_r2", "a", seed=2, cpd_ps=300.0), row("CB_r2", "b", wl=8.0)]

    line = plot_data(rows, "line")
    bar = plot_data(rows, "bar")

    assert line["a"] == [(0.5, pytest.approx(100.0)), (2.0, pytest.approx(300.0))]
    assert bar["CB_r2"] == [("b", pytest.approx(8.0))]
    assert set(plot_data(rows, "box")) == {"CB_r2", "SB_r0.5", "SB_r2"}


@pytest.mark.parametrize("kind", ["bar", "line", "box"])
def test_plots_are_deterministic_svg(kind):
    rows = [row("SB_r0.5", "a", cpd_ps=100.0), row("SB_r2", "a", cpd_ps=200.0), row("SB_r2", "a", seed=2)]

    first, second = emit_plots(rows, kind), emit_plots(rows, kind)

    assert first == second
    assert "<svg" in first


def test_plots_need_rows_and_a_known_kind():
    with pytest.raises(ReportError, match="no successful rows"):
        emit_plots([row("x", status="failed")], "bar")
    with pytest.raises(ReportError, match="unknown plot kind"):
        plot_data([row("x")], "pie")
