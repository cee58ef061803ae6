import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from jinja2 import Environment, FileSystemLoader

from api.schemas import ArchSpec
from fabric.models import (
    CROSS_LAYER_EDGE_KINDS, BlockKind, EdgeKind, HARD_BLOCK_PINS, NodeKind, RRNode, RoutingResourceGraph,
)
from services.fabric_graph_service import stub_positions
from utils.errors import AnnotationError

_logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates" / "netlist"
NETLIST_SUFFIX = ".snl"

TileKey = Tuple[int, int, int]


@dataclass
class Mux:
    """ One configurable multiplexer of the inventory.
    Routing muxes list RRG edge ids as candidates; CLB crossbar/ output-select muxes list local input indices.
    """

    name: str
    owner: str
    layer: int
    kind: str
    candidates: List[int]
    node: Optional[int] = None
    tile: Optional[TileKey] = None
    ble: Optional[int] = None
    offset: int = 0

    @property
    def fanin(self) -> int:
        return len(self.candidates)

    @property
    def width(self) -> int:
        return (self.fanin - 1).bit_length() if self.fanin > 1 else 0


@dataclass(frozen=True)
class ConfigField:
    tile: TileKey
    ble: int
    offset: int
    width: int


@dataclass
class FabricModel:
    rrg: RoutingResourceGraph
    spec_hash: str
    lut_size: int
    cluster_size: int
    clb_inputs: int
    muxes: List[Mux] = field(default_factory=list)
    luts: List[ConfigField] = field(default_factory=list)
    ffs: List[ConfigField] = field(default_factory=list)
    direct_wires: List[int] = field(default_factory=list)
    undriven: List[int] = field(default_factory=list)
    cross_layer_edges: List[int] = field(default_factory=list)
    node_mux: Dict[int, int] = field(default_factory=dict)
    edge_slot: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    clb_mux: Dict[Tuple[TileKey, int, str, int], int] = field(default_factory=dict)
    lut_index: Dict[Tuple[TileKey, int], int] = field(default_factory=dict)
    ff_index: Dict[Tuple[TileKey, int], int] = field(default_factory=dict)

    @property
    def length(self) -> int:
        """ Config-bit accounting: mux select widths + LUT table bits + FF init bits. """

        return (sum(mux.width for mux in self.muxes) + sum(lut.width for lut in self.luts)
                + sum(ff.width for ff in self.ffs))

    @property
    def clb_tiles(self) -> List[TileKey]:
        return [key for key, tile in sorted(self.rrg.tiles.items()) if tile.block == BlockKind.CLB]


@dataclass
class CoverageReport:
    unaccounted: List[int] = field(default_factory=list)
    duplicated: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unaccounted and not self.duplicated


def signal_name(node: RRNode) -> str:
    """ Layer-local net name of an RRG node. """

    if node.kind in (NodeKind.CHANX, NodeKind.CHANY, NodeKind.CHANZ):
        return f"{node.kind.value.lower()}_x{node.xlo}_y{node.ylo}_t{node.track}_{node.direction.value.lower()}"
    if node.kind in (NodeKind.IPIN, NodeKind.OPIN):
        return f"{node.kind.value.lower()}_x{node.xlo}_y{node.ylo}_p{node.track}"
    return f"{node.kind.value.lower()}_x{node.xlo}_y{node.ylo}_c{node.track}"


def owner_of(node: RRNode) -> str:
    """
    Block that owns the routing mux driving `node`.

    Raises:
        AnnotationError: If no block type owns muxes for this node kind.
    """

    if node.kind == NodeKind.IPIN:
        return f"cb_x{node.xlo}_y{node.ylo}"
    if node.kind in (NodeKind.CHANX, NodeKind.CHANY):
        (corner_x, corner_y), _, _ = stub_positions(node)[0]
        return f"sb_x{corner_x}_y{corner_y}"
    if node.kind == NodeKind.CHANZ:
        return f"sb3d_x{node.xlo}_y{node.ylo}"
    raise AnnotationError(f"no block owns a multiplexer driving {node.kind.value} node {node.id}")


def _candidate_order(rrg: RoutingResourceGraph, edges: List[int]) -> List[int]:
    # Planar sources first so that candidate 0 never crosses layers
    return sorted(edges, key=lambda e: (rrg.edges[e].kind in CROSS_LAYER_EDGE_KINDS, rrg.edges[e].src, e))


def annotate(rrg: RoutingResourceGraph, spec: ArchSpec) -> FabricModel:
    """
    Maps every RRG edge onto a mux candidate slot or a direct wire and lays out the config bits:
    routing muxes in node order, CLB crossbar and output-select muxes, LUT tables, FF init bits.

    Raises:
        AnnotationError: If an edge cannot be assigned to any block.
    """

    model = FabricModel(rrg=rrg, spec_hash=rrg.spec_hash, lut_size=spec.lut_size,
                        cluster_size=spec.cluster_size, clb_inputs=spec.clb_inputs)

    for edge_index, edge in enumerate(rrg.edges):
        if edge.kind == EdgeKind.intra:
            model.direct_wires.append(edge_index)
        if edge.kind in CROSS_LAYER_EDGE_KINDS:
            model.cross_layer_edges.append(edge_index)

    for node in rrg.nodes:
        inputs = [e for e in rrg.in_edges[node.id] if rrg.edges[e].kind != EdgeKind.intra]
        if node.kind in (NodeKind.SOURCE, NodeKind.SINK, NodeKind.OPIN):
            if inputs:
                raise AnnotationError(f"{node.kind.value} node {node.id} has routing inputs {inputs}")
            continue
        if not inputs:
            model.undriven.append(node.id)
        elif len(inputs) == 1:
            model.direct_wires.append(inputs[0])
        else:
            mux = Mux(name=f"m_{signal_name(node)}", owner=owner_of(node), layer=node.layer, kind="routing",
                      candidates=_candidate_order(rrg, inputs), node=node.id)
            model.node_mux[node.id] = len(model.muxes)
            model.muxes.append(mux)

    inputs, outputs, k = spec.clb_inputs, spec.cluster_size, spec.lut_size
    for key in model.clb_tiles:
        layer, x, y = key
        for ble in range(outputs):
            for i in range(k):
                model.clb_mux[(key, ble, "xbar", i)] = len(model.muxes)
                model.muxes.append(Mux(name=f"xbar_b{ble}_i{i}", owner=f"clb_x{x}_y{y}", layer=layer, kind="xbar",
                                       candidates=list(range(inputs + outputs)), tile=key, ble=ble))
            model.clb_mux[(key, ble, "osel", 0)] = len(model.muxes)
            model.muxes.append(Mux(name=f"osel_b{ble}", owner=f"clb_x{x}_y{y}", layer=layer, kind="osel",
                                   candidates=[0, 1], tile=key, ble=ble))

    offset = 0
    for mux in model.muxes:
        mux.offset = offset
        offset += mux.width
    for key in model.clb_tiles:
        for ble in range(outputs):
            model.lut_index[(key, ble)] = len(model.luts)
            model.luts.append(ConfigField(key, ble, offset, 1 << k))
            offset += 1 << k
    for key in model.clb_tiles:
        for ble in range(outputs):
            model.ff_index[(key, ble)] = len(model.ffs)
            model.ffs.append(ConfigField(key, ble, offset, 1))
            offset += 1

    for index, mux in enumerate(model.muxes):
        if mux.kind == "routing":
            for slot, edge in enumerate(mux.candidates):
                model.edge_slot[edge] = (index, slot)

    report = audit_coverage(model, rrg)
    if not report.ok:
        raise AnnotationError(f"orphan edges {report.unaccounted[:10]}, duplicated edges {report.duplicated[:10]}")
    _logger.info("Annotated fabric: %d muxes, %d direct wires, %d config bits",
                 len(model.muxes), len(model.direct_wires), model.length)
    return model


def audit_coverage(model: FabricModel, rrg: RoutingResourceGraph) -> CoverageReport:
    """ Every RRG edge must land in exactly one mux candidate slot or direct wire. """

    seen = Counter(model.direct_wires)
    for mux in model.muxes:
        if mux.kind == "routing":
            seen.update(mux.candidates)
    return CoverageReport(
        unaccounted=[edge for edge in range(len(rrg.edges)) if seen[edge] == 0],
        duplicated=[edge for edge in range(len(rrg.edges)) if seen[edge] > 1],
    )


# Netlist emission

@dataclass
class Instance:
    module: str
    name: str
    pins: List[Tuple[str, str]]


@dataclass
class ModuleDef:
    name: str
    ports: List[Tuple[str, str]] = field(default_factory=list)
    nets: List[str] = field(default_factory=list)
    instances: List[Instance] = field(default_factory=list)


def _mux_module(fanin: int) -> ModuleDef:
    width = (fanin - 1).bit_length()
    ports = [("input", f"in{i}") for i in range(fanin)] + [("input", f"s{b}") for b in range(width)]
    return ModuleDef(f"mux{fanin}", ports + [("output", "out")])


def _config_instances(module: ModuleDef, prefix: str, count: int) -> List[str]:
    nets = [f"c_{prefix}_{bit}" for bit in range(count)]
    for net in nets:
        module.nets.append(net)
        module.instances.append(Instance("cfgbit", net, [("out", net)]))
    return nets


def _clb_module(spec: ArchSpec) -> ModuleDef:
    inputs, outputs, k = spec.clb_inputs, spec.cluster_size, spec.lut_size
    module = ModuleDef("clb", [("input", f"i{p}") for p in range(inputs)] + [("input", "clk")]
                       + [("output", f"o{b}") for b in range(outputs)])
    xbar_fanin = inputs + outputs
    xbar_width = (xbar_fanin - 1).bit_length()
    sources = [f"i{p}" for p in range(inputs)] + [f"ble{b}" for b in range(outputs)]
    for ble in range(outputs):
        module.nets.extend([f"ble{ble}", f"lout_b{ble}", f"q_b{ble}"])
        lut_inputs = []
        for i in range(k):
            select = _config_instances(module, f"xbar_b{ble}_i{i}", xbar_width)
            net = f"lin_b{ble}_{i}"
            module.nets.append(net)
            lut_inputs.append(net)
            pins = [(f"in{j}", source) for j, source in enumerate(sources)]
            pins += [(f"s{b}", bit) for b, bit in enumerate(select)] + [("out", net)]
            module.instances.append(Instance(f"mux{xbar_fanin}", f"xbar_b{ble}_i{i}", pins))
        table = _config_instances(module, f"lut_b{ble}", 1 << k)
        pins = [(f"in{i}", net) for i, net in enumerate(lut_inputs)]
        pins += [(f"cfg{j}", bit) for j, bit in enumerate(table)] + [("out", f"lout_b{ble}")]
        module.instances.append(Instance(f"lut{k}", f"lut_b{ble}", pins))
        init = _config_instances(module, f"ff_b{ble}", 1)
        module.instances.append(Instance("dff", f"ff_b{ble}",
                                         [("d", f"lout_b{ble}"), ("init", init[0]), ("clk", "clk"), ("q", f"q_b{ble}")]))
        select = _config_instances(module, f"osel_b{ble}", 1)
        module.instances.append(Instance("mux2", f"osel_b{ble}", [("in0", f"lout_b{ble}"), ("in1", f"q_b{ble}"),
                                                                  ("s0", select[0]), ("out", f"ble{ble}")]))
        module.instances.append(Instance("wire", f"ob{ble}", [("in", f"ble{ble}"), ("out", f"o{ble}")]))
    return module


def _library(spec: ArchSpec, fanins: List[int]) -> List[ModuleDef]:
    k = spec.lut_size
    modules = [_mux_module(fanin) for fanin in sorted(set(fanins) | {2, spec.clb_inputs + spec.cluster_size})]
    modules.append(ModuleDef(f"lut{k}", [("input", f"in{i}") for i in range(k)]
                             + [("input", f"cfg{j}") for j in range(1 << k)] + [("output", "out")]))
    modules.append(ModuleDef("dff", [("input", "d"), ("input", "init"), ("input", "clk"), ("output", "q")]))
    modules.append(ModuleDef("cfgbit", [("output", "out")]))
    modules.append(ModuleDef("wire", [("input", "in"), ("output", "out")]))
    modules.append(ModuleDef("const0", [("output", "out")]))
    modules.append(ModuleDef("pad_in", [("input", "pad"), ("output", "out")]))
    modules.append(ModuleDef("pad_out", [("input", "in"), ("output", "pad")]))
    hard_in, hard_out = max(HARD_BLOCK_PINS.values())
    modules.append(ModuleDef("bbox", [("input", f"in{i}") for i in range(hard_in)] + [("input", "clk")]
                             + [("output", f"out{o}") for o in range(hard_out)]))
    modules.append(_clb_module(spec))
    return modules


def _source_net(rrg: RoutingResourceGraph, edge_index: int) -> str:
    """ Net a candidate edge reads on the destination layer. """

    edge = rrg.edges[edge_index]
    if edge.kind in CROSS_LAYER_EDGE_KINDS:
        return f"xi_e{edge_index}"
    return signal_name(rrg.nodes[edge.src])


def _layer_modules(model: FabricModel, layer: int) -> List[ModuleDef]:
    rrg = model.rrg
    suffix = f"_l{layer + 1}"
    blocks: Dict[str, ModuleDef] = {}
    produced: Dict[str, List[str]] = {}
    consumed: Dict[str, List[str]] = {}

    for mux in model.muxes:
        if mux.layer != layer or mux.kind != "routing":
            continue
        module = blocks.setdefault(mux.owner, ModuleDef(mux.owner + suffix))
        output = signal_name(rrg.nodes[mux.node])
        select = _config_instances(module, output, mux.width)
        pins = [(f"in{i}", _source_net(rrg, edge)) for i, edge in enumerate(mux.candidates)]
        pins += [(f"s{b}", bit) for b, bit in enumerate(select)] + [("out", output)]
        module.instances.append(Instance(f"mux{mux.fanin}", mux.name, pins))
        produced.setdefault(mux.owner, []).append(output)
        consumed.setdefault(mux.owner, []).extend(net for _, net in pins[:mux.fanin])

    for owner, module in blocks.items():
        outputs = list(dict.fromkeys(produced[owner]))
        inputs = [net for net in dict.fromkeys(consumed[owner]) if net not in outputs]
        module.ports = [("input", net) for net in inputs] + [("output", net) for net in outputs]

    # Layer wrapper
    top = ModuleDef(f"layer_{layer + 1}", [("input", "clk")])
    tiles = [tile for key, tile in sorted(rrg.tiles.items()) if key[0] == layer]
    for tile in tiles:
        for pad in range(tile.pads):
            top.ports.append(("input", f"pad_i_x{tile.x}_y{tile.y}_k{pad}"))
            top.ports.append(("output", f"pad_o_x{tile.x}_y{tile.y}_k{pad}"))
    exports = [e for e in model.cross_layer_edges if rrg.nodes[rrg.edges[e].src].layer == layer]
    imports = [e for e in model.cross_layer_edges if rrg.nodes[rrg.edges[e].dst].layer == layer]
    top.ports += [("output", f"xo_e{e}") for e in exports] + [("input", f"xi_e{e}") for e in imports]

    top.nets = [signal_name(node) for node in rrg.nodes
                if node.layer == layer and node.kind not in (NodeKind.SOURCE, NodeKind.SINK)]

    def pin_net(tile, kind: NodeKind, pin: int) -> str:
        return signal_name(rrg.nodes[rrg.find(kind, tile.layer, tile.x, tile.y, pin)])

    for tile in tiles:
        if tile.block == BlockKind.CLB:
            pins = [(f"i{p}", pin_net(tile, NodeKind.IPIN, p)) for p in range(tile.inputs)] + [("clk", "clk")]
            pins += [(f"o{b}", pin_net(tile, NodeKind.OPIN, tile.inputs + b)) for b in range(tile.outputs)]
            top.instances.append(Instance("clb", f"clb_x{tile.x}_y{tile.y}", pins))
        elif tile.block in HARD_BLOCK_PINS:
            pins = [(f"in{p}", pin_net(tile, NodeKind.IPIN, p)) for p in range(tile.inputs)] + [("clk", "clk")]
            pins += [(f"out{o}", pin_net(tile, NodeKind.OPIN, tile.inputs + o)) for o in range(tile.outputs)]
            top.instances.append(Instance("bbox", f"{tile.block.value.lower()}_x{tile.x}_y{tile.y}", pins))
        for pad in range(tile.pads):
            top.instances.append(Instance("pad_in", f"pi_x{tile.x}_y{tile.y}_k{pad}", [
                ("pad", f"pad_i_x{tile.x}_y{tile.y}_k{pad}"),
                ("out", pin_net(tile, NodeKind.OPIN, tile.pad_output_pin(pad)))]))
            top.instances.append(Instance("pad_out", f"po_x{tile.x}_y{tile.y}_k{pad}", [
                ("in", pin_net(tile, NodeKind.IPIN, tile.pad_input_pin(pad))),
                ("pad", f"pad_o_x{tile.x}_y{tile.y}_k{pad}")]))

    for owner, module in blocks.items():
        top.instances.append(Instance(module.name, owner, [(net, net) for _, net in module.ports]))

    for edge_index in model.direct_wires:
        edge = rrg.edges[edge_index]
        if edge.kind == EdgeKind.intra or rrg.nodes[edge.dst].layer != layer:
            continue
        src, dst = _source_net(rrg, edge_index), signal_name(rrg.nodes[edge.dst])
        top.instances.append(Instance("wire", f"w_{src}__{dst}", [("in", src), ("out", dst)]))
    for node_id in model.undriven:
        node = rrg.nodes[node_id]
        if node.layer == layer:
            top.instances.append(Instance("const0", f"z_{signal_name(node)}", [("out", signal_name(node))]))
    for edge_index in exports:
        src = signal_name(rrg.nodes[rrg.edges[edge_index].src])
        top.instances.append(Instance("wire", f"x_e{edge_index}", [("in", src), ("out", f"xo_e{edge_index}")]))

    return [blocks[owner] for owner in blocks] + [top]


def _top_module(model: FabricModel) -> ModuleDef:
    rrg = model.rrg
    top = ModuleDef("top", [("input", "clk")])
    top.nets = [f"xl_e{e}" for e in model.cross_layer_edges]
    for layer in range(rrg.layers):
        prefix = f"l{layer + 1}_"
        pins = [("clk", "clk")]
        for key, tile in sorted(rrg.tiles.items()):
            if key[0] != layer:
                continue
            for pad in range(tile.pads):
                for direction, port in (("input", f"pad_i_x{tile.x}_y{tile.y}_k{pad}"),
                                        ("output", f"pad_o_x{tile.x}_y{tile.y}_k{pad}")):
                    top.ports.append((direction, prefix + port))
                    pins.append((port, prefix + port))
        for e in model.cross_layer_edges:
            edge = rrg.edges[e]
            if rrg.nodes[edge.src].layer == layer:
                pins.append((f"xo_e{e}", f"xl_e{e}"))
            if rrg.nodes[edge.dst].layer == layer:
                pins.append((f"xi_e{e}", f"xl_e{e}"))
        top.instances.append(Instance(f"layer_{layer + 1}", f"l{layer + 1}", pins))
    return top


def _environment() -> Environment:
    return Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), trim_blocks=True, lstrip_blocks=True,
                       keep_trailing_newline=True, autoescape=False)


def emit_netlist(model: FabricModel, spec: ArchSpec) -> Dict[str, str]:
    """
    Renders the hierarchical structural netlist.

    Returns:
        Dict[str, str]: Documents "top", "layer_1".."layer_L" and "library", in that order.
    """

    template = _environment().get_template("document.j2")
    documents = {"top": template.render(modules=[_top_module(model)])}
    for layer in range(model.rrg.layers):
        documents[f"layer_{layer + 1}"] = template.render(modules=_layer_modules(model, layer))
    fanins = [mux.fanin for mux in model.muxes if mux.kind == "routing"]
    documents["library"] = template.render(modules=_library(spec, fanins))
    return documents


def document_manifest(documents: Dict[str, str]) -> str:
    """ sha256sum-style listing of the document set. """

    return "".join(f"{hashlib.sha256(text.encode()).hexdigest()}  {name}{NETLIST_SUFFIX}\n"
                   for name, text in documents.items())


def write_netlist(documents: Dict[str, str], out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in documents.items():
        path = out_dir / f"{name}{NETLIST_SUFFIX}"
        path.write_text(text)
        paths.append(path)
    manifest = out_dir / "manifest.sha256"
    manifest.write_text(document_manifest(documents))
    paths.append(manifest)
    return paths
