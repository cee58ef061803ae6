import hashlib
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import ValidationError
from tqdm import tqdm

from api.schemas import ArchSpec, BenchmarkEntry, ExperimentConfig, ReportRow, SBPattern
from fabric.delay import DelayModel
from fabric.models import PATTERN_BEARING_TYPES, BlockKind, ConnectionType, LayerClass, RoutingResourceGraph
from services.arch_service import load_arch
from services.bench_service import LogicNetlist, load_blif, load_manifest, random_vectors, simulate_golden
from services.bitstream_service import Bitstream, generate_bitstream, simulate_fabric, write_bitstream
from services.fabricgen_service import FabricModel, annotate
from services.packing_service import PackedNetlist, pack
from services.placement_service import PlaceParams, Placement, place
from services.routing_service import RouteParams, RoutingResult, route, write_routing_dump
from services.timing_service import TimingReport, critical_path, sta, timing_graph
from services.vertical_service import NAMED_PATTERNS, VerticalCounts, build_3d_rrg, count_layer_crossings, \
    count_vertical, pattern_name

_logger = logging.getLogger(__name__)


@dataclass
class Implementation:
    """ Every artifact of one pack/ place/ route/ timing run. """

    spec: ArchSpec
    rrg: RoutingResourceGraph
    packed: PackedNetlist
    placement: Placement
    routing: RoutingResult
    timing: TimingReport
    counts: VerticalCounts
    crossings: float


@dataclass
class VerificationReport:
    benchmark: str
    vectors: int
    mismatches: List[Tuple[int, Tuple[int, ...], Tuple[int, ...]]] = field(default_factory=list)
    bitstream_bits: int = 0

    @property
    def passed(self) -> bool:
        return not self.mismatches

    @property
    def verdict(self) -> str:
        """ Single-line machine-readable result. """

        status = "PASS" if self.passed else "FAIL"
        return (f"{status} benchmark={self.benchmark} vectors={self.vectors} "
                f"mismatches={len(self.mismatches)} bits={self.bitstream_bits}")

    def dump(self) -> str:
        lines = [self.verdict]
        for cycle, expected, observed in self.mismatches:
            lines.append(f"cycle {cycle}: expected {''.join(map(str, expected))} "
                         f"got {''.join(map(str, observed))}")
        return "\n".join(lines) + "\n"


def pattern_label(pattern: SBPattern) -> str:
    """ Catalog name, or a short digest for ad-hoc patterns. """

    name = pattern_name(pattern)
    if name is not None:
        return name
    digest = hashlib.sha256(f"{pattern.input}{pattern.output}".encode("utf-8")).hexdigest()
    return f"pat{digest[:8]}"


def make_config_id(spec: ArchSpec) -> str:
    vertical = spec.vertical
    ratio = f"r{spec.vertical_delay_ratio:g}"
    if vertical.connection_type in PATTERN_BEARING_TYPES:
        return (f"{vertical.connection_type.value}_p{vertical.sb_percentage}_{vertical.sb_placement.value}"
                f"_{pattern_label(vertical.sb_pattern)}_{ratio}")
    return f"{vertical.connection_type.value}_{ratio}"


def build_fabric(spec: ArchSpec, seed: int = 0) -> Tuple[RoutingResourceGraph, FabricModel]:
    """ Full 3D routing resource graph plus its configuration-bit inventory. """

    rrg = build_3d_rrg(spec, seed)
    return rrg, annotate(rrg, spec)


def implement(spec: ArchSpec, netlist: LogicNetlist, seed: int = 0, place_params: Optional[PlaceParams] = None,
              route_params: Optional[RouteParams] = None, rrg: Optional[RoutingResourceGraph] = None) -> Implementation:
    """
    Runs pack, place, route and timing analysis on one architecture.

    Raises:
        PackingError: If the netlist does not fit.
        UnroutableError: If routing does not converge.
    """

    rrg = rrg or build_3d_rrg(spec, seed)
    delay_model = DelayModel.from_spec(spec)
    packed = pack(netlist, spec)
    placement = place(packed, rrg, seed, place_params)
    routing = route(placement, rrg, delay_model, route_params)
    timing = sta(routing, packed, delay_model)
    return Implementation(spec, rrg, packed, placement, routing, timing,
                          count_vertical(rrg), count_layer_crossings(routing))


def cpd_at_ratios(implementation: Implementation, ratios: Sequence[float]) -> Dict[float, float]:
    """ Critical path delay in ps re-evaluated on the fixed routing for each vertical delay ratio. """

    base = DelayModel.from_spec(implementation.spec)
    result = {}
    for ratio in ratios:
        graph = timing_graph(implementation.routing, implementation.packed, base.with_ratio(ratio))
        result[ratio] = critical_path(graph)[0] * 1e12
    return result


def run_flow(spec: ArchSpec, netlist: LogicNetlist, seed: int = 0, benchmark: Optional[str] = None,
             config_id: Optional[str] = None, out_dir: Optional[Union[str, Path]] = None,
             place_params: Optional[PlaceParams] = None, route_params: Optional[RouteParams] = None,
             record_timing: bool = True) -> ReportRow:
    """
    Runs the whole flow and condenses it into one report row.
    With out_dir set, the routing dump and the bitstream are written under out_dir/<config_id>/.
    Any failure is returned as a row with status "failed" and the error text.
    """

    benchmark = benchmark or netlist.name
    config_id = config_id or make_config_id(spec)
    row = ReportRow(benchmark=benchmark, config_id=config_id, seed=seed)
    started = time.perf_counter()
    try:
        result = implement(spec, netlist, seed, place_params, route_params)
        routing = result.routing
        row = row.model_copy(update={
            "wl": routing.wirelength,
            "cpd_ps": result.timing.cpd_ps,
            "route_iters": routing.iterations,
            "route_ms": routing.elapsed_ms if record_timing else 0.0,
            "vert_total": result.counts.total,
            "vert_per_grid": result.counts.per_grid,
            "crossings": result.crossings,
        })
        if out_dir is not None:
            target = Path(out_dir) / config_id
            target.mkdir(parents=True, exist_ok=True)
            stem = f"{benchmark}_s{seed}"
            (target / f"{stem}.route").write_text(write_routing_dump(routing, row.cpd_ps, row.crossings))
            model = annotate(result.rrg, spec)
            write_bitstream(generate_bitstream(routing, result.placement, result.packed, model),
                            target / f"{stem}.bitstream")
    except Exception as e:
        _logger.error("Flow %s/%s seed %d failed: %s", config_id, benchmark, seed, e)
        row = row.model_copy(update={"status": "failed", "error": f"{type(e).__name__}: {e}"})
    _logger.info("Flow %s/%s seed %d finished in %.0f ms (%s)", config_id, benchmark, seed,
                 (time.perf_counter() - started) * 1000.0, row.status)
    return row


def program(spec: ArchSpec, netlist: LogicNetlist, seed: int = 0, place_params: Optional[PlaceParams] = None,
            route_params: Optional[RouteParams] = None) -> Tuple[FabricModel, Bitstream, Implementation]:
    """ Implements the netlist and returns the fabric model with its programmed bitstream. """

    rrg, model = build_fabric(spec, seed)
    result = implement(spec, netlist, seed, place_params, route_params, rrg=rrg)
    return model, generate_bitstream(result.routing, result.placement, result.packed, model), result


def verify_roundtrip(spec: ArchSpec, netlist: LogicNetlist, seed: int = 0, vectors: int = 200,
                     place_params: Optional[PlaceParams] = None,
                     route_params: Optional[RouteParams] = None) -> VerificationReport:
    """
    Programs the fabric and compares its simulation against the golden netlist simulation.

    Raises:
        UnroutableError: If the benchmark cannot be routed on the architecture.
    """

    model, bitstream, _ = program(spec, netlist, seed, place_params, route_params)
    stimulus = random_vectors(len(netlist.inputs), vectors, seed)
    expected = simulate_golden(netlist, stimulus)
    observed = simulate_fabric(model, bitstream, stimulus)
    report = VerificationReport(netlist.name, vectors, bitstream_bits=bitstream.length)
    report.mismatches = [(cycle, want, got) for cycle, (want, got) in enumerate(zip(expected, observed))
                         if want != got]
    _logger.info(report.verdict)
    return report


# Sweeps

@dataclass(frozen=True)
class FlowJob:
    """ One independent (config, benchmark, seed) job; everything a worker process needs. """

    spec: ArchSpec
    config_id: str
    benchmark: str
    blif: str
    seed: int
    out_dir: Optional[str]
    place_params: PlaceParams
    route_params: RouteParams
    record_timing: bool


def run_job(job: FlowJob) -> ReportRow:
    try:
        netlist = load_blif(job.blif)
    except Exception as e:
        return ReportRow(benchmark=job.benchmark, config_id=job.config_id, seed=job.seed,
                         status="failed", error=f"{type(e).__name__}: {e}")
    return run_flow(job.spec, netlist, job.seed, job.benchmark, job.config_id, job.out_dir,
                    job.place_params, job.route_params, job.record_timing)


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """
    Raises:
        ValueError: If the file is not valid YAML or violates the ExperimentConfig schema.
    """

    path = Path(path)
    try:
        return ExperimentConfig.model_validate(yaml.safe_load(path.read_text()))
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise ValueError(f"Invalid experiment config {path}: {e}")


def _resolve_pattern(pattern: Union[str, SBPattern]) -> SBPattern:
    if isinstance(pattern, SBPattern):
        return pattern
    if pattern not in NAMED_PATTERNS:
        raise ValueError(f"unknown pattern name '{pattern}'; known: {', '.join(NAMED_PATTERNS)}")
    return NAMED_PATTERNS[pattern]


def expand_configs(config: ExperimentConfig, base: ArchSpec) -> Dict[str, ArchSpec]:
    """
    Cartesian product of the sweep axes applied to the base architecture, keyed by config id.
    Pattern-free types ignore the SB axes, so duplicates collapse onto one config.
    """

    vertical = base.vertical
    types = config.connection_types or [vertical.connection_type]
    percentages = config.sb_percentages or [vertical.sb_percentage]
    placements = config.sb_placements or [vertical.sb_placement]
    patterns = [_resolve_pattern(p) for p in config.sb_patterns] if config.sb_patterns else [vertical.sb_pattern]
    ratios = config.vertical_delay_ratios or [base.vertical_delay_ratio]

    configs: Dict[str, ArchSpec] = {}
    for connection_type, percentage, placement, pattern, ratio in itertools.product(
            types, percentages, placements, patterns, ratios):
        if connection_type in PATTERN_BEARING_TYPES or connection_type == ConnectionType.Custom:
            update = {"connection_type": connection_type, "sb_percentage": percentage,
                      "sb_placement": placement, "sb_pattern": pattern}
        else:
            update = {"connection_type": connection_type}
        spec = base.model_copy(update={
            "vertical": vertical.model_copy(update=update),
            "vertical_delay_ratio": ratio,
            "vertical_delay_seconds": None,
        })
        if connection_type == ConnectionType.None2D:
            spec = planar_baseline(spec)
        configs.setdefault(make_config_id(spec), spec)
    return dict(sorted(configs.items()))


def planar_baseline(spec: ArchSpec) -> ArchSpec:
    """ Single-layer fabric of the same footprint, keeping the first layer that holds logic. """

    if spec.layer_count == 1:
        return spec
    logic = next((layer for layer in spec.layers if BlockKind.CLB in layer.columns), spec.layers[0])
    return spec.model_copy(update={
        "layer_count": 1,
        "layers": [logic.model_copy(update={"layer_class": LayerClass.Homogeneous})],
        "vertical": spec.vertical.model_copy(update={"connection_type": ConnectionType.None2D}),
    })


def select_benchmarks(config: ExperimentConfig) -> List[BenchmarkEntry]:
    if config.benchmarks is not None and not config.benchmarks:
        return []
    entries = load_manifest(config.manifest)
    if config.benchmarks is None:
        return entries
    by_name = {entry.name: entry for entry in entries}
    missing = [name for name in config.benchmarks if name not in by_name]
    if missing:
        raise ValueError(f"benchmarks not in manifest {config.manifest}: {', '.join(missing)}")
    return [by_name[name] for name in config.benchmarks]


def plan_jobs(config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None) -> List[FlowJob]:
    base = load_arch(config.base_arch)
    configs = expand_configs(config, base)
    benchmarks = select_benchmarks(config)
    place_params = PlaceParams(inner_num=config.inner_num)
    route_params = RouteParams(max_iters=config.max_iters)
    artifacts = str(out_dir) if out_dir is not None else None
    return [FlowJob(spec, config_id, entry.name, entry.blif, seed, artifacts, place_params, route_params,
                    config.record_timing)
            for (config_id, spec), entry, seed in itertools.product(configs.items(), benchmarks, config.seeds)]


def run_sweep(config: ExperimentConfig, jobs: Optional[int] = None,
              out_dir: Optional[Union[str, Path]] = None) -> List[ReportRow]:
    """
    Runs every (config, benchmark, seed) job, up to `jobs` at a time.

    Returns:
        List[ReportRow]: Sorted by config id, benchmark and seed whatever the completion order.
    """

    planned = plan_jobs(config, out_dir)
    workers = jobs or config.jobs
    _logger.info("Sweep %s: %d jobs on %d workers", config.name, len(planned), workers)
    rows: List[ReportRow] = []
    if workers <= 1 or len(planned) <= 1:
        for job in tqdm(planned, desc=config.name, unit="flow"):
            rows.append(run_job(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run_job, job) for job in planned]
            for future in tqdm(as_completed(futures), total=len(futures), desc=config.name, unit="flow"):
                rows.append(future.result())
    rows.sort(key=lambda row: (row.config_id, row.benchmark, row.seed))
    failed = sum(1 for row in rows if row.status != "ok")
    if failed:
        _logger.warning("Sweep %s: %d of %d flows failed", config.name, failed, len(rows))
    return rows

