import logging
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Set, Tuple

from api.schemas import ArchSpec, SBPattern
from fabric.models import (
    BlockKind, ConnectionType, Direction, EdgeKind, NodeKind, RoutingResourceGraph, SBPlacement, SitePlan,
)
from fabric.delay import DelayModel
from services.fabric_graph_service import _GraphBuilder, build_base_rrg, corner_stubs, node_census
from utils.errors import ArchValidationError, CustomRuleError, SitePlanError

if TYPE_CHECKING:
    from services.routing_service import RoutingResult

_logger = logging.getLogger(__name__)


# Catalog of named 3D switch block patterns (input, output) per side: left, bottom, right, top
NAMED_PATTERNS: Dict[str, SBPattern] = {
    "subset": SBPattern(input=[0, 0, 0, 0], output=[0, 0, 0, 0]),
    "off_by_one_output": SBPattern(input=[0, 0, 0, 0], output=[1, 1, 1, 1]),
    "revolving_offset": SBPattern(input=[0, 1, 2, 3], output=[0, 1, 2, 3]),
    "revolving_input": SBPattern(input=[0, 1, 2, 3], output=[0, 0, 0, 0]),
    "revolving_output": SBPattern(input=[0, 0, 0, 0], output=[0, 1, 2, 3]),
    "direction_match": SBPattern(input=[0, 1, 0, 1], output=[1, 0, 1, 0]),
    "symmetric_offset": SBPattern(input=[-2, -1, 1, 2], output=[0, 0, 0, 0]),
    "random": SBPattern(input=[-3, 0, 2, 1], output=[3, -1, -2, 2]),
}

INPUT_SIDE_TYPES = frozenset({ConnectionType.CB, ConnectionType.Hybrid, ConnectionType.CBI, ConnectionType.HybridI})
OUTPUT_SIDE_TYPES = frozenset({ConnectionType.CB, ConnectionType.Hybrid, ConnectionType.CBO, ConnectionType.HybridO})
SB_TYPES = frozenset({ConnectionType.SB, ConnectionType.Hybrid, ConnectionType.HybridO, ConnectionType.HybridI})


class VerticalTrackMap(NamedTuple):
    """ Planar track per side (left, bottom, right, top) for vertical track k. """

    inputs: Tuple[int, int, int, int]
    outputs: Tuple[int, int, int, int]


@dataclass
class VerticalCounts:
    total: int = 0
    per_grid: float = 0.0
    breakdown: Dict[str, int] = field(default_factory=lambda: {"pin_in": 0, "pin_out": 0, "sb": 0})


def pattern_name(pattern: SBPattern) -> Optional[str]:
    for name, candidate in NAMED_PATTERNS.items():
        if candidate == pattern:
            return name
    return None


def _site_lattice(spec: ArchSpec) -> List[Tuple[int, int]]:
    return [(x, y) for y in range(spec.grid_height + 1) for x in range(spec.grid_width + 1)]


def site_target(percentage: int, total_sites: int) -> int:
    """ round-half-up(percentage x total_sites / 100) in integer arithmetic """

    return (2 * percentage * total_sites + 100) // 200


def _repeated_interval(lattice: List[Tuple[int, int]], target: int) -> List[Tuple[int, int]]:
    # Widest diagonal stride that still yields enough sites
    for stride in range(len(lattice), 0, -1):
        candidates = [(x, y) for x, y in lattice if (x + y) % stride == 0]
        if len(candidates) >= target:
            return candidates[:target]
    return lattice[:target]


def plan_sites(spec: ArchSpec, seed: int = 0) -> SitePlan:
    """
    Selects the 3D switch block sites.

    Args:
        spec: Architecture carrying sb_percentage, sb_placement and custom_sites.
        seed: Only used by the Random strategy.

    Returns:
        SitePlan: Sites in row-major order (y, then x).

    Raises:
        SitePlanError: CustomList coordinate out of bounds or duplicated.
    """

    vertical = spec.vertical
    width, height = spec.grid_width, spec.grid_height
    lattice = _site_lattice(spec)
    total = len(lattice)
    strategy = vertical.sb_placement

    if strategy == SBPlacement.CustomList:
        sites = []
        seen: Set[Tuple[int, int]] = set()
        for x, y in vertical.custom_sites or []:
            if not (0 <= x <= width and 0 <= y <= height):
                raise SitePlanError(f"site ({x}, {y}) outside the switch block lattice [0..{width}]x[0..{height}]")
            if (x, y) in seen:
                raise SitePlanError(f"duplicate site ({x}, {y})")
            seen.add((x, y))
            sites.append((x, y))
        return SitePlan(tuple(sites), total, vertical.sb_percentage, strategy)

    target = site_target(vertical.sb_percentage, total)
    if strategy == SBPlacement.RepeatedInterval:
        chosen = _repeated_interval(lattice, target)
    elif strategy == SBPlacement.Rows:
        chosen = sorted(lattice, key=lambda s: (abs(2 * s[1] - height), s[1], s[0]))[:target]
    elif strategy == SBPlacement.Columns:
        chosen = sorted(lattice, key=lambda s: (abs(2 * s[0] - width), s[0], s[1]))[:target]
    elif strategy == SBPlacement.Core:
        chosen = sorted(lattice, key=lambda s: (max(abs(2 * s[0] - width), abs(2 * s[1] - height)), s[1], s[0]))[:target]
    elif strategy == SBPlacement.Perimeter:
        chosen = sorted(lattice, key=lambda s: (-max(abs(2 * s[0] - width), abs(2 * s[1] - height)), s[1], s[0]))[:target]
    else:
        chosen = random.Random(seed).sample(lattice, target)

    sites = tuple(sorted(chosen, key=lambda s: (s[1], s[0])))
    _logger.debug("%s placed %d of %d 3D switch blocks", strategy.value, len(sites), total)
    return SitePlan(sites, total, vertical.sb_percentage, strategy)


def vertical_track_map(pattern: SBPattern, width: int, k: int) -> VerticalTrackMap:
    """ Planar tracks feeding (inputs) and driven by (outputs) vertical track k. Entries wrap modulo width. """

    inputs = tuple((offset + k) % width for offset in pattern.input)
    outputs = tuple((offset + k) % width for offset in pattern.output)
    return VerticalTrackMap(inputs, outputs)


def _check_custom_rules(spec: ArchSpec) -> None:
    rules = spec.vertical.custom
    if rules is None:
        raise CustomRuleError("Custom connection type requires custom rules")
    bad_inputs = [pin for pin in rules.input_pins if not 0 <= pin < spec.clb_inputs]
    bad_outputs = [pin for pin in rules.output_pins if not 0 <= pin < spec.cluster_size]
    bad_tracks = [track for track in rules.sb_tracks if not 0 <= track < spec.channel_width]
    problems = []
    if bad_inputs:
        problems.append(f"input pins {bad_inputs} do not exist (CLB has {spec.clb_inputs})")
    if bad_outputs:
        problems.append(f"output pins {bad_outputs} do not exist (CLB has {spec.cluster_size})")
    if bad_tracks:
        problems.append(f"tracks {bad_tracks} exceed channel width {spec.channel_width}")
    if problems:
        raise CustomRuleError("; ".join(problems))


def _add_pin_edges(builder: _GraphBuilder, base: RoutingResourceGraph, spec: ArchSpec) -> None:
    """ Mirrors every selected pin's planar channel connections onto the adjacent layers. """

    connection_type = spec.vertical.connection_type
    custom = spec.vertical.custom if connection_type == ConnectionType.Custom else None

    for tile_key in sorted(base.tiles):
        tile = base.tiles[tile_key]
        if custom is not None:
            if tile.block != BlockKind.CLB:
                continue
            input_pins = sorted(set(custom.input_pins))
            output_pins = sorted(tile.inputs + o for o in set(custom.output_pins))
        else:
            input_pins = list(range(tile.inputs)) if connection_type in INPUT_SIDE_TYPES else []
            output_pins = list(range(tile.inputs, tile.block_pins)) if connection_type in OUTPUT_SIDE_TYPES else []

        adjacent = [layer for layer in (tile.layer - 1, tile.layer + 1) if 0 <= layer < base.layers]
        for pin in input_pins:
            ipin = base.find(NodeKind.IPIN, tile.layer, tile.x, tile.y, pin)
            for edge_index in base.in_edges[ipin]:
                if base.edges[edge_index].kind != EdgeKind.cb:
                    continue
                wire = base.nodes[base.edges[edge_index].src]
                for layer in adjacent:
                    mirror = base.find(wire.kind, layer, wire.xlo, wire.ylo, wire.track, wire.direction)
                    if mirror is not None:
                        builder.add_edge(mirror, ipin)
        for pin in output_pins:
            opin = base.find(NodeKind.OPIN, tile.layer, tile.x, tile.y, pin)
            for edge_index in base.out_edges[opin]:
                if base.edges[edge_index].kind != EdgeKind.opin:
                    continue
                wire = base.nodes[base.edges[edge_index].dst]
                for layer in adjacent:
                    mirror = base.find(wire.kind, layer, wire.xlo, wire.ylo, wire.track, wire.direction)
                    if mirror is not None:
                        builder.add_edge(opin, mirror)


def _add_switch_block_pairs(builder: _GraphBuilder, base: RoutingResourceGraph, spec: ArchSpec,
                            plan: SitePlan) -> None:
    """ Adds an up and a down ChanzPair per planned site, vertical track and adjacent layer pair. """

    width = spec.channel_width
    pattern = spec.vertical.sb_pattern
    if spec.vertical.connection_type == ConnectionType.Custom:
        tracks = sorted(set(spec.vertical.custom.sb_tracks))
    else:
        tracks = list(range(width))
    stubs = [corner_stubs(base.nodes, layer) for layer in range(base.layers)]

    def connect(layer: int, x: int, y: int, source: int, sink: int, track_map: VerticalTrackMap, upper: int):
        # Planar "in" stubs feed the source CHANZ; the sink CHANZ drives planar "out" stubs
        site = stubs[layer].get((x, y))
        if site is not None:
            for side, track in enumerate(track_map.inputs):
                src = site[side]["in"].get(track)
                if src is not None:
                    builder.add_edge(src, source)
        site = stubs[upper].get((x, y))
        if site is not None:
            for side, track in enumerate(track_map.outputs):
                dst = site[side]["out"].get(track)
                if dst is not None:
                    builder.add_edge(sink, dst)

    for lower in range(base.layers - 1):
        upper = lower + 1
        for x, y in plan.sites:
            for k in tracks:
                track_map = vertical_track_map(pattern, width, k)
                up_source = builder.add_node(NodeKind.CHANZ, lower, x, y, x, y, k, Direction.AboveInc)
                up_sink = builder.add_node(NodeKind.CHANZ, upper, x, y, x, y, k, Direction.UnderInc)
                down_source = builder.add_node(NodeKind.CHANZ, upper, x, y, x, y, k, Direction.UnderDec)
                down_sink = builder.add_node(NodeKind.CHANZ, lower, x, y, x, y, k, Direction.AboveDec)
                builder.add_edge(up_source, up_sink)
                builder.add_edge(down_source, down_sink)
                connect(lower, x, y, up_source, up_sink, track_map, upper)
                connect(upper, x, y, down_source, down_sink, track_map, lower)


def extend_to_3d(base: RoutingResourceGraph, spec: ArchSpec, plan: SitePlan) -> RoutingResourceGraph:
    """
    Extends a base graph with the vertical connectivity of spec.vertical.connection_type.
    Base nodes and edges are kept unchanged; new edges and CHANZ nodes are appended.

    Raises:
        ArchValidationError: If a vertical type is requested on a single-layer graph.
        CustomRuleError: If Custom rules name pins or tracks that do not exist.
    """

    connection_type = spec.vertical.connection_type
    if connection_type == ConnectionType.None2D:
        return RoutingResourceGraph(
            width=base.width, height=base.height, layers=base.layers, channel_width=base.channel_width,
            spec_hash=base.spec_hash, tiles=dict(base.tiles), nodes=list(base.nodes), edges=list(base.edges),
        )
    if base.layers < 2:
        raise ArchValidationError(["vertical connectivity requires ≥2 layers"])
    if connection_type == ConnectionType.Custom:
        _check_custom_rules(spec)

    builder = _GraphBuilder(DelayModel.from_spec(spec))
    builder.nodes = list(base.nodes)
    builder.edges = list(base.edges)

    if connection_type in INPUT_SIDE_TYPES | OUTPUT_SIDE_TYPES or connection_type == ConnectionType.Custom:
        _add_pin_edges(builder, base, spec)
    if connection_type in SB_TYPES or connection_type == ConnectionType.Custom:
        _add_switch_block_pairs(builder, base, spec, plan)

    rrg = RoutingResourceGraph(
        width=base.width, height=base.height, layers=base.layers, channel_width=base.channel_width,
        spec_hash=base.spec_hash, tiles=dict(base.tiles), nodes=builder.nodes, edges=builder.edges,
    )
    _logger.info("Extended RRG with %s: +%d nodes, +%d edges", connection_type.value,
                 len(rrg.nodes) - len(base.nodes), len(rrg.edges) - len(base.edges))
    return rrg


def build_3d_rrg(spec: ArchSpec, seed: int = 0) -> RoutingResourceGraph:
    """ Base graph plus vertical extension in one call. """

    return extend_to_3d(build_base_rrg(spec), spec, plan_sites(spec, seed))


def count_vertical(rrg: RoutingResourceGraph) -> VerticalCounts:
    counts = VerticalCounts()
    for edge in rrg.edges:
        if edge.kind == EdgeKind.pin_in_3d:
            counts.breakdown["pin_in"] += 1
        elif edge.kind == EdgeKind.pin_out_3d:
            counts.breakdown["pin_out"] += 1
        elif edge.kind == EdgeKind.via:
            counts.breakdown["sb"] += 1
    counts.total = sum(counts.breakdown.values())
    grid = rrg.width * rrg.height
    counts.per_grid = counts.total / grid if grid else 0.0
    return counts


def count_layer_crossings(routing: "RoutingResult") -> float:
    """ Average number of routed edges per net whose endpoints lie on different layers. """

    nets = [net for net in routing.trees if routing.sink_of.get(net)]
    if not nets:
        return 0.0
    crossings = 0
    for net in nets:
        for edge_index in routing.trees[net].values():
            edge = routing.rrg.edges[edge_index]
            if routing.rrg.nodes[edge.src].layer != routing.rrg.nodes[edge.dst].layer:
                crossings += 1
    return crossings / len(nets)


class VerticalService:
    def census(self, spec: ArchSpec, seed: int = 0) -> Tuple[Dict[str, int], int, VerticalCounts]:
        """ Node census, edge count and vertical connection counts of the full 3D graph. """

        rrg = build_3d_rrg(spec, seed)
        census = {kind.value: count for kind, count in node_census(rrg).items()}
        return census, len(rrg.edges), count_vertical(rrg)


def get_vertical_service() -> VerticalService:
    return VerticalService()
