# import of standard python libraries
from dataclasses import dataclass, field
from enum import Enum as PyEnum, IntEnum
from functools import cached_property
from typing import Dict, List, Optional, Tuple


class NodeKind(str, PyEnum):
    """ Class to define the routing resource node kinds """

    SOURCE = "SOURCE"
    SINK = "SINK"
    IPIN = "IPIN"
    OPIN = "OPIN"
    CHANX = "CHANX"
    CHANY = "CHANY"
    CHANZ = "CHANZ"


# Ordering used by the documented node numbering
NODE_KIND_ORDER = {kind: index for index, kind in enumerate(NodeKind)}


class Direction(str, PyEnum):
    """ Class to define wire directions.
    Inc/ Dec for planar wires, the Above*/ Under* values for CHANZ nodes.
    """

    Inc = "Inc"
    Dec = "Dec"
    AboveInc = "AboveInc"
    AboveDec = "AboveDec"
    UnderInc = "UnderInc"
    UnderDec = "UnderDec"
    NONE = "None"


PLANAR_DIRECTIONS = (Direction.Inc, Direction.Dec)
VERTICAL_DIRECTIONS = (Direction.AboveInc, Direction.AboveDec, Direction.UnderInc, Direction.UnderDec)


class EdgeKind(str, PyEnum):
    """ Class to define the role of an RRG edge, derived from its endpoints """

    intra = "intra"
    opin = "opin"
    cb = "cb"
    sb = "sb"
    sb_in = "sb_in"
    sb_out = "sb_out"
    via = "via"
    pin_in_3d = "pin_in_3d"
    pin_out_3d = "pin_out_3d"


CROSS_LAYER_EDGE_KINDS = frozenset({EdgeKind.via, EdgeKind.pin_in_3d, EdgeKind.pin_out_3d})


class BlockKind(str, PyEnum):
    CLB = "CLB"
    DSP = "DSP"
    BRAM = "BRAM"
    IO = "IO"
    RoutingOnly = "RoutingOnly"


class ConnectionType(str, PyEnum):
    """ Class to define the vertical connection types.
    CBI/ HybridI are the input-only mirrors of CBO/ HybridO.
    """

    None2D = "None2D"
    CB = "CB"
    CBO = "CBO"
    CBI = "CBI"
    SB = "SB"
    Hybrid = "Hybrid"
    HybridO = "HybridO"
    HybridI = "HybridI"
    Custom = "Custom"


PATTERN_FREE_TYPES = frozenset({ConnectionType.None2D, ConnectionType.CB, ConnectionType.CBO, ConnectionType.CBI})
PATTERN_BEARING_TYPES = frozenset({ConnectionType.SB, ConnectionType.Hybrid, ConnectionType.HybridO, ConnectionType.HybridI})


class SBPlacement(str, PyEnum):
    RepeatedInterval = "RepeatedInterval"
    Rows = "Rows"
    Columns = "Columns"
    Core = "Core"
    Perimeter = "Perimeter"
    Random = "Random"
    CustomList = "CustomList"


class PlanarSB(str, PyEnum):
    Wilton = "Wilton"
    Subset = "Subset"


class LayerClass(str, PyEnum):
    Homogeneous = "Homogeneous"
    NonLogicHetero = "NonLogicHetero"
    LogicHetero = "LogicHetero"


class Side(IntEnum):
    """ Switch block sides in counter-clockwise order, matching SBPattern indexing """

    LEFT = 0
    BOTTOM = 1
    RIGHT = 2
    TOP = 3


# Pin counts of the hard blocks; the fabric treats them as black boxes
HARD_BLOCK_PINS = {BlockKind.DSP: (4, 2), BlockKind.BRAM: (4, 2)}


@dataclass(frozen=True)
class RRNode:
    """ One routing resource.
    For SOURCE/ SINK `track` holds the representative pin of the pin class,
    for IPIN/ OPIN the pin index, for channels the track index.
    """

    id: int
    kind: NodeKind
    layer: int
    xlo: int
    ylo: int
    xhi: int
    yhi: int
    track: int
    direction: Direction = Direction.NONE
    capacity: int = 1

    @property
    def span(self) -> int:
        """ Length in tiles; zero for everything that is not a planar wire. """

        if self.kind == NodeKind.CHANX:
            return self.xhi - self.xlo + 1
        if self.kind == NodeKind.CHANY:
            return self.yhi - self.ylo + 1
        return 0

    @property
    def is_wire(self) -> bool:
        return self.kind in (NodeKind.CHANX, NodeKind.CHANY)


@dataclass(frozen=True)
class RREdge:
    src: int
    dst: int
    delay: float
    kind: EdgeKind


@dataclass(frozen=True)
class Tile:
    """ Block instance at (layer, x, y) and its pin layout.

    Pin numbering: block inputs [0, inputs), block outputs [inputs, inputs + outputs),
    then per pad p an output pin (fabric input) followed by an input pin (fabric output).
    """

    layer: int
    x: int
    y: int
    block: BlockKind
    inputs: int = 0
    outputs: int = 0
    pads: int = 0

    @property
    def block_pins(self) -> int:
        return self.inputs + self.outputs

    @property
    def pin_count(self) -> int:
        return self.block_pins + 2 * self.pads

    def pad_output_pin(self, pad: int) -> int:
        return self.block_pins + 2 * pad

    def pad_input_pin(self, pad: int) -> int:
        return self.block_pins + 2 * pad + 1

    def is_input_pin(self, pin: int) -> bool:
        if pin < self.inputs:
            return True
        if pin < self.block_pins:
            return False
        return (pin - self.block_pins) % 2 == 1

    def class_of_pin(self, pin: int) -> int:
        """ Representative pin of the class a pin belongs to. Block inputs share one class. """

        return 0 if pin < self.inputs else pin

    def classes(self) -> List[Tuple[int, NodeKind]]:
        """ (representative pin, SOURCE|SINK) for every pin class, ordered by representative pin. """

        result = []
        if self.inputs:
            result.append((0, NodeKind.SINK))
        for pin in range(self.inputs, self.pin_count):
            result.append((pin, NodeKind.SINK if self.is_input_pin(pin) else NodeKind.SOURCE))
        return result


@dataclass(frozen=True)
class ChanzPair:
    """ One vertical connection: a CHANZ node on each of two adjacent layers and the via between them. """

    source: int
    sink: int
    direction: Direction
    site: Tuple[int, int]
    lower_layer: int
    track: int
    via_edge: int


@dataclass(frozen=True)
class SitePlan:
    sites: Tuple[Tuple[int, int], ...]
    total_sites: int
    percentage: int
    strategy: SBPlacement

    @property
    def realized_percentage(self) -> float:
        if self.total_sites == 0:
            return 0.0
        return 100.0 * len(self.sites) / self.total_sites


@dataclass
class SBSite:
    """ Channel intersection with its incident wire stubs.
    stubs[side]["in"|"out"] maps track index -> node id.
    """

    layer: int
    x: int
    y: int
    is_3d: bool = False
    stubs: Dict[Side, Dict[str, Dict[int, int]]] = field(default_factory=dict)


NodeKey = Tuple[NodeKind, int, int, int, int, Direction]


@dataclass
class RoutingResourceGraph:
    """ Typed node/ edge graph of all fabric connectivity.
    Treated as immutable once built; adjacency and lookups are derived lazily.
    """

    width: int
    height: int
    layers: int
    channel_width: int
    spec_hash: str
    tiles: Dict[Tuple[int, int, int], Tile]
    nodes: List[RRNode] = field(default_factory=list)
    edges: List[RREdge] = field(default_factory=list)

    @cached_property
    def in_edges(self) -> List[List[int]]:
        result: List[List[int]] = [[] for _ in self.nodes]
        for index, edge in enumerate(self.edges):
            result[edge.dst].append(index)
        return result

    @cached_property
    def out_edges(self) -> List[List[int]]:
        result: List[List[int]] = [[] for _ in self.nodes]
        for index, edge in enumerate(self.edges):
            result[edge.src].append(index)
        return result

    @cached_property
    def node_index(self) -> Dict[NodeKey, int]:
        return {node_key(node): node.id for node in self.nodes}

    def find(self, kind: NodeKind, layer: int, x: int, y: int, track: int,
             direction: Direction = Direction.NONE) -> Optional[int]:
        return self.node_index.get((kind, layer, x, y, track, direction))

    def tile_of(self, node: RRNode) -> Optional[Tile]:
        return self.tiles.get((node.layer, node.xlo, node.ylo))

    @cached_property
    def chanz_pairs(self) -> List[ChanzPair]:
        pairs = []
        for index, edge in enumerate(self.edges):
            if edge.kind != EdgeKind.via:
                continue
            source = self.nodes[edge.src]
            sink = self.nodes[edge.dst]
            pairs.append(ChanzPair(
                source=source.id,
                sink=sink.id,
                direction=source.direction,
                site=(source.xlo, source.ylo),
                lower_layer=min(source.layer, sink.layer),
                track=source.track,
                via_edge=index,
            ))
        return pairs


def node_key(node: RRNode) -> NodeKey:
    return node.kind, node.layer, node.xlo, node.ylo, node.track, node.direction


def node_sort_key(node: RRNode) -> Tuple:
    """ Documented numbering: layer-major, then y, x, kind, track, direction. CHANZ sorts last. """

    if node.kind == NodeKind.CHANZ:
        return (1, node.id)
    return (0, node.layer, node.ylo, node.xlo, NODE_KIND_ORDER[node.kind], node.track,
            0 if node.direction == Direction.Inc else 1)


def classify_edge(src: RRNode, dst: RRNode) -> EdgeKind:
    """ Derives the edge role from the endpoint kinds and layers. """

    planar = (NodeKind.CHANX, NodeKind.CHANY)
    if src.layer != dst.layer:
        if src.kind == NodeKind.CHANZ and dst.kind == NodeKind.CHANZ:
            return EdgeKind.via
        if src.kind == NodeKind.OPIN:
            return EdgeKind.pin_out_3d
        if dst.kind == NodeKind.IPIN:
            return EdgeKind.pin_in_3d
        raise ValueError(f"Unsupported cross-layer edge {src.kind.value} -> {dst.kind.value}")

    if src.kind == NodeKind.SOURCE or dst.kind == NodeKind.SINK:
        return EdgeKind.intra
    if src.kind == NodeKind.OPIN:
        return EdgeKind.opin
    if dst.kind == NodeKind.IPIN:
        return EdgeKind.cb
    if src.kind in planar and dst.kind in planar:
        return EdgeKind.sb
    if src.kind in planar and dst.kind == NodeKind.CHANZ:
        return EdgeKind.sb_in
    if src.kind == NodeKind.CHANZ and dst.kind in planar:
        return EdgeKind.sb_out
    raise ValueError(f"Unsupported edge {src.kind.value} -> {dst.kind.value}")
