import logging
import math
from collections import defaultdict
from typing import Dict, List, Optional, Tuple

from api.schemas import ArchSpec
from fabric.delay import DelayModel
from fabric.models import (
    BlockKind, Direction, HARD_BLOCK_PINS, NodeKind, PlanarSB, RREdge, RRNode, RoutingResourceGraph, SBSite, Side,
    Tile, classify_edge,
)
from services.arch_service import spec_hash, validate
from utils.errors import ArchValidationError, RRGFormatError

_logger = logging.getLogger(__name__)

Corner = Tuple[int, int]
Stubs = Dict[Corner, Dict[Side, Dict[str, Dict[int, int]]]]


def fc_in_tracks(spec: ArchSpec) -> int:
    return min(spec.channel_width, spec.fc_in or max(1, math.ceil(0.15 * spec.channel_width)))


def fc_out_tracks(spec: ArchSpec) -> int:
    return min(spec.channel_width, spec.fc_out or max(1, math.ceil(0.10 * spec.channel_width)))


def build_tiles(spec: ArchSpec) -> Dict[Tuple[int, int, int], Tile]:
    """ Block instance and pin layout of every (layer, x, y). """

    tiles = {}
    for layer, layer_spec in enumerate(spec.layers):
        for y in range(spec.grid_height):
            for x in range(spec.grid_width):
                block = layer_spec.columns[x]
                perimeter = x in (0, spec.grid_width - 1) or y in (0, spec.grid_height - 1)
                inputs, outputs = 0, 0
                if block == BlockKind.CLB:
                    inputs, outputs = spec.clb_inputs, spec.cluster_size
                elif block in HARD_BLOCK_PINS:
                    inputs, outputs = HARD_BLOCK_PINS[block]
                pads = 0
                if block == BlockKind.IO or (block != BlockKind.RoutingOnly and perimeter):
                    pads = spec.io_capacity
                tiles[(layer, x, y)] = Tile(layer, x, y, block, inputs, outputs, pads)
    return tiles


def track_layout(spec: ArchSpec) -> List[Tuple[int, int]]:
    """ (segment length, index within the segment group) for every track. """

    layout = []
    for segment in spec.segments:
        layout.extend((segment.length, index) for index in range(segment.tracks))
    return layout


def wire_spans(positions: int, length: int, offset: int) -> List[Tuple[int, int]]:
    """ Splits a channel of `positions` tiles into wires of at most `length` tiles, staggered by `offset`. """

    starts = [0] + [p for p in range(1, positions) if (p + offset) % length == 0]
    ends = [start - 1 for start in starts[1:]] + [positions - 1]
    return list(zip(starts, ends))


def wilton_target(from_side: Side, to_side: Side, track: int, width: int) -> int:
    """ Wilton switch block permutation for unidirectional wires. """

    if from_side == Side.LEFT:
        targets = {Side.RIGHT: track, Side.TOP: (width - track) % width, Side.BOTTOM: (width + track - 1) % width}
    elif from_side == Side.RIGHT:
        targets = {Side.LEFT: track, Side.TOP: (width + track - 1) % width, Side.BOTTOM: (2 * width - 2 - track) % width}
    elif from_side == Side.BOTTOM:
        targets = {Side.TOP: track, Side.LEFT: (track + 1) % width, Side.RIGHT: (2 * width - 2 - track) % width}
    else:
        targets = {Side.BOTTOM: track, Side.LEFT: (width - track) % width, Side.RIGHT: (track + 1) % width}
    return targets[to_side]


def planar_target(pattern: PlanarSB, from_side: Side, to_side: Side, track: int, width: int) -> int:
    if pattern == PlanarSB.Subset:
        return track
    return wilton_target(from_side, to_side, track, width)


def stub_positions(node: RRNode) -> List[Tuple[Corner, Side, str]]:
    """
    Corners a planar wire touches.
    A wire is an "out" stub where it starts and an "in" stub where it ends.
    """

    if node.kind == NodeKind.CHANX:
        row = node.ylo + 1
        if node.direction == Direction.Inc:
            return [((node.xlo, row), Side.RIGHT, "out"), ((node.xhi + 1, row), Side.LEFT, "in")]
        return [((node.xhi + 1, row), Side.LEFT, "out"), ((node.xlo, row), Side.RIGHT, "in")]
    if node.kind == NodeKind.CHANY:
        column = node.xlo + 1
        if node.direction == Direction.Inc:
            return [((column, node.ylo), Side.TOP, "out"), ((column, node.yhi + 1), Side.BOTTOM, "in")]
        return [((column, node.yhi + 1), Side.BOTTOM, "out"), ((column, node.ylo), Side.TOP, "in")]
    return []


def corner_stubs(nodes: List[RRNode], layer: int) -> Stubs:
    stubs: Stubs = defaultdict(lambda: {side: {"in": {}, "out": {}} for side in Side})
    for node in nodes:
        if node.layer != layer or not node.is_wire:
            continue
        for corner, side, role in stub_positions(node):
            stubs[corner][side][role][node.track] = node.id
    return stubs


def sb_sites(rrg: RoutingResourceGraph) -> List[SBSite]:
    """ All channel intersections with their stubs, layer-major then row-major. """

    chanz_sites = {(node.layer, node.xlo, node.ylo) for node in rrg.nodes if node.kind == NodeKind.CHANZ}
    sites = []
    for layer in range(rrg.layers):
        stubs = corner_stubs(rrg.nodes, layer)
        for y in range(rrg.height + 1):
            for x in range(rrg.width + 1):
                sites.append(SBSite(
                    layer=layer, x=x, y=y,
                    is_3d=(layer, x, y) in chanz_sites,
                    stubs=stubs.get((x, y), {side: {"in": {}, "out": {}} for side in Side}),
                ))
    return sites


class _GraphBuilder:
    """ Accumulates nodes and edges in the documented order. """

    def __init__(self, delay_model: DelayModel):
        self.delay_model = delay_model
        self.nodes: List[RRNode] = []
        self.edges: List[RREdge] = []

    def add_node(self, kind: NodeKind, layer: int, xlo: int, ylo: int, xhi: int, yhi: int, track: int,
                 direction: Direction = Direction.NONE, capacity: int = 1) -> int:
        node = RRNode(len(self.nodes), kind, layer, xlo, ylo, xhi, yhi, track, direction, capacity)
        self.nodes.append(node)
        return node.id

    def add_edge(self, src: int, dst: int) -> int:
        kind = classify_edge(self.nodes[src], self.nodes[dst])
        self.edges.append(RREdge(src, dst, self.delay_model.edge_delay(kind, self.nodes[dst]), kind))
        return len(self.edges) - 1


def build_base_rrg(spec: ArchSpec) -> RoutingResourceGraph:
    """
    Builds the planar routing resource graph of every layer.

    Args:
        spec: A valid architecture.

    Returns:
        RoutingResourceGraph: One planar subgraph per layer, no CHANZ nodes.

    Raises:
        ArchValidationError: If validate(spec) reports violations.
    """

    violations = validate(spec)
    if violations:
        raise ArchValidationError(violations)

    width, height, channel_width = spec.grid_width, spec.grid_height, spec.channel_width
    tiles = build_tiles(spec)
    layout = track_layout(spec)
    builder = _GraphBuilder(DelayModel.from_spec(spec))

    # Wire spans per track for horizontal rows and vertical columns
    x_spans = [wire_spans(width, length, index % length) for length, index in layout]
    y_spans = [wire_spans(height, length, index % length) for length, index in layout]
    x_starts = [{lo: hi for lo, hi in spans} for spans in x_spans]
    y_starts = [{lo: hi for lo, hi in spans} for spans in y_spans]

    pin_node: Dict[Tuple[int, int, int, int], int] = {}
    class_node: Dict[Tuple[int, int, int, int], int] = {}
    # (layer, kind, channel index, position, track, direction) -> wire covering that position
    wire_at: Dict[Tuple[int, NodeKind, int, int, int, Direction], int] = {}

    for layer in range(spec.layer_count):
        for y in range(height):
            for x in range(width):
                tile = tiles[(layer, x, y)]
                pin_classes = tile.classes()
                for rep, kind in pin_classes:
                    if kind == NodeKind.SOURCE:
                        class_node[(layer, x, y, rep)] = builder.add_node(kind, layer, x, y, x, y, rep)
                for rep, kind in pin_classes:
                    if kind == NodeKind.SINK:
                        capacity = tile.inputs if rep == 0 and tile.inputs else 1
                        class_node[(layer, x, y, rep)] = builder.add_node(kind, layer, x, y, x, y, rep, capacity=capacity)
                for pin in range(tile.pin_count):
                    if tile.is_input_pin(pin):
                        pin_node[(layer, x, y, pin)] = builder.add_node(NodeKind.IPIN, layer, x, y, x, y, pin)
                for pin in range(tile.pin_count):
                    if not tile.is_input_pin(pin):
                        pin_node[(layer, x, y, pin)] = builder.add_node(NodeKind.OPIN, layer, x, y, x, y, pin)

                for track in range(channel_width):
                    hi = x_starts[track].get(x)
                    if hi is None:
                        continue
                    for direction in (Direction.Inc, Direction.Dec):
                        node = builder.add_node(NodeKind.CHANX, layer, x, y, hi, y, track, direction)
                        for position in range(x, hi + 1):
                            wire_at[(layer, NodeKind.CHANX, y, position, track, direction)] = node
                for track in range(channel_width):
                    hi = y_starts[track].get(y)
                    if hi is None:
                        continue
                    for direction in (Direction.Inc, Direction.Dec):
                        node = builder.add_node(NodeKind.CHANY, layer, x, y, x, hi, track, direction)
                        for position in range(y, hi + 1):
                            wire_at[(layer, NodeKind.CHANY, x, position, track, direction)] = node

    fc_in = fc_in_tracks(spec)
    fc_out = fc_out_tracks(spec)

    for layer in range(spec.layer_count):
        for y in range(height):
            for x in range(width):
                tile = tiles[(layer, x, y)]
                for pin in range(tile.pin_count):
                    node = pin_node[(layer, x, y, pin)]
                    source_or_sink = class_node[(layer, x, y, tile.class_of_pin(pin))]
                    if tile.is_input_pin(pin):
                        builder.add_edge(node, source_or_sink)
                    else:
                        builder.add_edge(source_or_sink, node)

                for pin in range(tile.pin_count):
                    node = pin_node[(layer, x, y, pin)]
                    # Even pins sit on the channel above the tile, odd pins on the channel to its right
                    if pin % 2 == 0:
                        kind, channel, position, starts = NodeKind.CHANX, y, x, x_starts
                    else:
                        kind, channel, position, starts = NodeKind.CHANY, x, y, y_starts

                    if tile.is_input_pin(pin):
                        step = channel_width // fc_in
                        for j in range(fc_in):
                            track = (pin + j * step) % channel_width
                            for direction in (Direction.Inc, Direction.Dec):
                                builder.add_edge(wire_at[(layer, kind, channel, position, track, direction)], node)
                        continue

                    for direction in (Direction.Inc, Direction.Dec):
                        # Output pins only drive wires that begin at this tile
                        if direction == Direction.Inc:
                            candidates = [t for t in range(channel_width) if position in starts[t]]
                        else:
                            candidates = [t for t in range(channel_width)
                                          if any(hi == position for hi in starts[t].values())]
                        if not candidates:
                            continue
                        count = min(fc_out, len(candidates))
                        step = max(1, len(candidates) // count)
                        chosen = dict.fromkeys(candidates[(pin + j * step) % len(candidates)] for j in range(count))
                        for track in chosen:
                            builder.add_edge(node, wire_at[(layer, kind, channel, position, track, direction)])

        stubs = corner_stubs(builder.nodes, layer)
        for y in range(height + 1):
            for x in range(width + 1):
                if (x, y) not in stubs:
                    continue
                site = stubs[(x, y)]
                for from_side in Side:
                    for track, src in sorted(site[from_side]["in"].items()):
                        for to_side in Side:
                            if to_side == from_side:
                                continue
                            target = planar_target(spec.planar_sb_pattern, from_side, to_side, track, channel_width)
                            dst = site[to_side]["out"].get(target)
                            if dst is not None:
                                builder.add_edge(src, dst)

    rrg = RoutingResourceGraph(
        width=width, height=height, layers=spec.layer_count, channel_width=channel_width,
        spec_hash=spec_hash(spec), tiles=tiles, nodes=builder.nodes, edges=builder.edges,
    )
    _logger.info("Built base RRG: %d nodes, %d edges over %d layer(s)", len(rrg.nodes), len(rrg.edges), rrg.layers)
    return rrg


def node_census(rrg: RoutingResourceGraph) -> Dict[NodeKind, int]:
    census = {kind: 0 for kind in NodeKind}
    for node in rrg.nodes:
        census[node.kind] += 1
    return census


def serialize_rrg(rrg: RoutingResourceGraph) -> str:
    """ Line-oriented interchange document: header, T (tile), N (node) and E (edge) lines, END trailer. """

    lines = [
        f"RRG v1 spec={rrg.spec_hash} width={rrg.width} height={rrg.height} "
        f"layers={rrg.layers} channel_width={rrg.channel_width}"
    ]
    for (layer, x, y), tile in sorted(rrg.tiles.items()):
        lines.append(f"T {layer} {x} {y} {tile.block.value} {tile.inputs} {tile.outputs} {tile.pads}")
    for node in rrg.nodes:
        lines.append(
            f"N {node.id} {node.kind.value} {node.layer} {node.xlo} {node.ylo} {node.xhi} {node.yhi} "
            f"{node.track} {node.direction.value}"
        )
    for edge in rrg.edges:
        lines.append(f"E {edge.src} {edge.dst} {edge.delay * 1e12:.3f}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def _parse_header(line: str) -> Dict[str, str]:
    parts = line.split()
    if len(parts) != 7 or parts[0] != "RRG" or parts[1] != "v1":
        raise RRGFormatError("expected header 'RRG v1 spec=... width=... height=... layers=... channel_width=...'", 1)
    fields = dict(part.split("=", 1) for part in parts[2:] if "=" in part)
    if set(fields) != {"spec", "width", "height", "layers", "channel_width"}:
        raise RRGFormatError("incomplete header", 1)
    return fields


def deserialize_rrg(text: str) -> RoutingResourceGraph:
    """
    Reads an interchange document back into a graph.

    Raises:
        RRGFormatError: With the 1-based line number of the first malformed or missing line.
    """

    lines = text.splitlines()
    if not lines:
        raise RRGFormatError("empty document", 1)
    header = _parse_header(lines[0])
    try:
        width, height = int(header["width"]), int(header["height"])
        layers, channel_width = int(header["layers"]), int(header["channel_width"])
    except ValueError:
        raise RRGFormatError("non-integer header field", 1)

    tiles: Dict[Tuple[int, int, int], Tile] = {}
    nodes: List[RRNode] = []
    raw_edges: List[Tuple[int, int, float, int]] = []
    ended = False

    for number, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if ended:
            raise RRGFormatError("content after END", number)
        tag = parts[0]
        try:
            if tag == "T" and len(parts) == 8:
                layer, x, y = int(parts[1]), int(parts[2]), int(parts[3])
                tiles[(layer, x, y)] = Tile(layer, x, y, BlockKind(parts[4]), int(parts[5]), int(parts[6]), int(parts[7]))
            elif tag == "N" and len(parts) == 10:
                node_id = int(parts[1])
                if node_id != len(nodes):
                    raise RRGFormatError(f"node id {node_id} out of sequence (expected {len(nodes)})", number)
                nodes.append(RRNode(
                    node_id, NodeKind(parts[2]), int(parts[3]), int(parts[4]), int(parts[5]),
                    int(parts[6]), int(parts[7]), int(parts[8]), Direction(parts[9]),
                ))
            elif tag == "E" and len(parts) == 4:
                src, dst = int(parts[1]), int(parts[2])
                if not (0 <= src < len(nodes) and 0 <= dst < len(nodes)):
                    raise RRGFormatError(f"edge endpoint out of range ({src} -> {dst})", number)
                raw_edges.append((src, dst, float(parts[3]) * 1e-12, number))
            elif tag == "END" and len(parts) == 1:
                ended = True
            else:
                raise RRGFormatError(f"malformed line {line!r}", number)
        except ValueError as e:
            if isinstance(e, RRGFormatError):
                raise
            raise RRGFormatError(f"malformed line {line!r}: {e}", number)

    if not ended:
        raise RRGFormatError("truncated document: missing END", len(lines) + 1)

    # SINK capacity equals the number of input pins feeding it
    sink_fanin: Dict[int, int] = defaultdict(int)
    for src, dst, _, _ in raw_edges:
        if nodes[dst].kind == NodeKind.SINK and nodes[src].kind == NodeKind.IPIN:
            sink_fanin[dst] += 1
    for node_id, fanin in sink_fanin.items():
        node = nodes[node_id]
        nodes[node_id] = RRNode(node.id, node.kind, node.layer, node.xlo, node.ylo, node.xhi, node.yhi,
                                node.track, node.direction, max(1, fanin))

    edges = []
    for src, dst, delay, number in raw_edges:
        try:
            kind = classify_edge(nodes[src], nodes[dst])
        except ValueError as e:
            raise RRGFormatError(str(e), number)
        edges.append(RREdge(src, dst, delay, kind))

    return RoutingResourceGraph(
        width=width, height=height, layers=layers, channel_width=channel_width,
        spec_hash=header["spec"], tiles=tiles, nodes=nodes, edges=edges,
    )


def find_tile_node(rrg: RoutingResourceGraph, kind: NodeKind, tile: Tile, pin: int) -> Optional[int]:
    """ Node of a pin (IPIN/ OPIN) or pin class (SOURCE/ SINK) of a tile. """

    if kind in (NodeKind.SOURCE, NodeKind.SINK):
        pin = tile.class_of_pin(pin)
    return rrg.find(kind, tile.layer, tile.x, tile.y, pin)
