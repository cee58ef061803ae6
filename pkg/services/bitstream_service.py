import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from fabric.models import BlockKind, EdgeKind, NodeKind
from services.fabricgen_service import FabricModel, TileKey
from services.packing_service import PackedNetlist
from services.placement_service import Placement
from services.routing_service import RoutingResult
from utils.errors import BitstreamMismatchError, CombinationalLoopError, VectorWidthError

_logger = logging.getLogger(__name__)

FORMAT_HEADER = "BITSTREAM v1"
HEX_LINE_WIDTH = 64

# PI/ PO name -> (layer, x, y, pad)
PadBinding = Tuple[int, int, int, int]


@dataclass
class Bitstream:
    """ Configuration bits, bit i at byte i // 8, position i % 8 once packed. """

    bits: np.ndarray
    spec_hash: str
    benchmark: str = ""
    inputs: Dict[str, PadBinding] = field(default_factory=dict)
    outputs: Dict[str, PadBinding] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return int(self.bits.size)

    def field_value(self, offset: int, width: int) -> int:
        """ Unsigned LSB-first integer stored at [offset, offset + width). """

        return sum(int(self.bits[offset + b]) << b for b in range(width))

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits, bitorder="little").tobytes()


def empty_bitstream(model: FabricModel, benchmark: str = "") -> Bitstream:
    return Bitstream(np.zeros(model.length, dtype=np.uint8), model.spec_hash, benchmark)


def _write_field(bits: np.ndarray, offset: int, width: int, value: int) -> None:
    for b in range(width):
        bits[offset + b] = (value >> b) & 1


def physical_table(table: Sequence[int], lut_size: int) -> List[int]:
    """ Expands an n-input table onto a K-input LUT; the unused low-order inputs are ignored. """

    fanin = (len(table) - 1).bit_length()
    return [int(table[j >> (lut_size - fanin)]) for j in range(1 << lut_size)]


def generate_bitstream(routing: RoutingResult, placement: Placement, packed: PackedNetlist,
                       model: FabricModel) -> Bitstream:
    """
    Programs the routed muxes, the CLB crossbars/ output selects, the LUT tables and FF init values.
    Unused muxes keep select 0.

    Raises:
        BitstreamMismatchError: If the routing was produced on a different graph than the model.
    """

    if routing.rrg.spec_hash != model.spec_hash:
        raise BitstreamMismatchError(f"routing spec {routing.rrg.spec_hash[:12]} != model spec {model.spec_hash[:12]}")
    rrg = model.rrg
    bitstream = empty_bitstream(model, packed.netlist.name)
    bits = bitstream.bits
    direct = set(model.direct_wires)

    for net in sorted(routing.trees):
        for node, edge in sorted(routing.trees[net].items()):
            if not 0 <= edge < len(rrg.edges):
                raise BitstreamMismatchError(f"net {net}: edge {edge} does not exist in the fabric model")
            if rrg.edges[edge].dst != node:
                raise BitstreamMismatchError(f"net {net}: edge {edge} does not drive node {node}")
            if edge in model.edge_slot:
                mux_index, slot = model.edge_slot[edge]
                mux = model.muxes[mux_index]
                _write_field(bits, mux.offset, mux.width, slot)
            elif edge not in direct:
                raise BitstreamMismatchError(f"net {net}: edge {edge} is neither a mux candidate nor a direct wire")

    inputs = model.clb_inputs
    for cluster in packed.clusters:
        layer, x, y, _ = placement.locations[cluster.name]
        key = (layer, x, y)
        local = {ble.output: slot for slot, ble in enumerate(cluster.bles)}
        for slot, ble in enumerate(cluster.bles):
            for i, signal in enumerate(ble.inputs):
                if signal in local:
                    select = inputs + local[signal]
                else:
                    sink = routing.sink_of[signal][cluster.name]
                    select = rrg.nodes[rrg.edges[routing.trees[signal][sink]].src].track
                mux = model.muxes[model.clb_mux[(key, slot, "xbar", i)]]
                _write_field(bits, mux.offset, mux.width, select)
            mux = model.muxes[model.clb_mux[(key, slot, "osel", 0)]]
            _write_field(bits, mux.offset, mux.width, int(ble.registered))
            lut = model.luts[model.lut_index[(key, slot)]]
            bits[lut.offset:lut.offset + lut.width] = physical_table(ble.table, model.lut_size)
            bits[model.ffs[model.ff_index[(key, slot)]].offset] = ble.init

    bitstream.inputs = {signal: placement.locations[f"in:{signal}"] for signal in packed.netlist.inputs}
    bitstream.outputs = {signal: placement.locations[f"out:{signal}"] for signal in packed.netlist.outputs}
    _logger.info("Generated %d-bit bitstream for %s", bitstream.length, bitstream.benchmark)
    return bitstream


def _format_binding(name: str, binding: PadBinding) -> str:
    return f"{name}@{','.join(str(v) for v in binding)}"


def serialize_bitstream(bitstream: Bitstream) -> str:
    """ Text header (spec hash, lengths, pad bindings) followed by the hex payload. """

    payload = bitstream.to_bytes().hex()
    lines = [
        FORMAT_HEADER,
        f"spec={bitstream.spec_hash}",
        f"benchmark={bitstream.benchmark}",
        f"bits={bitstream.length}",
        f"bytes={len(payload) // 2}",
        "inputs=" + " ".join(_format_binding(n, b) for n, b in bitstream.inputs.items()),
        "outputs=" + " ".join(_format_binding(n, b) for n, b in bitstream.outputs.items()),
        "payload",
    ]
    lines += [payload[i:i + HEX_LINE_WIDTH] for i in range(0, len(payload), HEX_LINE_WIDTH)]
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_bindings(value: str) -> Dict[str, PadBinding]:
    result = {}
    for token in value.split():
        name, _, location = token.rpartition("@")
        layer, x, y, pad = (int(v) for v in location.split(","))
        result[name] = (layer, x, y, pad)
    return result


def parse_bitstream(text: str) -> Bitstream:
    """
    Raises:
        ValueError: If the document is not a well-formed bitstream file.
    """

    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError("not a bitstream document")
    header: Dict[str, str] = {}
    index = 1
    while index < len(lines) and lines[index] != "payload":
        key, _, value = lines[index].partition("=")
        header[key] = value
        index += 1
    if index == len(lines) or lines[-1] != "end":
        raise ValueError("truncated bitstream document")
    payload = bytes.fromhex("".join(lines[index + 1:-1]))
    length = int(header["bits"])
    if len(payload) != int(header["bytes"]) or length > 8 * len(payload):
        raise ValueError("bitstream payload length does not match its header")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")[:length].astype(np.uint8)
    return Bitstream(bits, header.get("spec", ""), header.get("benchmark", ""),
                     _parse_bindings(header.get("inputs", "")), _parse_bindings(header.get("outputs", "")))


def write_bitstream(bitstream: Bitstream, path: Union[str, Path]) -> Tuple[Path, Path]:
    """ Writes the text document and its packed binary twin (same stem, .bin). """

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_bitstream(bitstream))
    binary = path.with_suffix(".bin")
    binary.write_bytes(bitstream.to_bytes())
    return path, binary


def read_bitstream(path: Union[str, Path]) -> Bitstream:
    return parse_bitstream(Path(path).read_text())


class FabricSimulator:
    """
    Cycle simulation of a programmed fabric, evaluated on demand from the output pads.
    Signals: ("n", node) RRG nodes, ("out"|"lut"|"ffq", tile, ble) CLB internals.
    """

    def __init__(self, model: FabricModel, bitstream: Bitstream):
        if bitstream.length != model.length:
            raise BitstreamMismatchError(f"bitstream has {bitstream.length} bits, fabric needs {model.length}")
        self.model = model
        self.bitstream = bitstream
        self.rrg = model.rrg
        self.routing_inputs = {node.id: [e for e in self.rrg.in_edges[node.id]
                                         if self.rrg.edges[e].kind != EdgeKind.intra]
                               for node in self.rrg.nodes}
        self.pad_of_source: Dict[int, str] = {}
        for name, (layer, x, y, pad) in bitstream.inputs.items():
            tile = self.rrg.tiles[(layer, x, y)]
            self.pad_of_source[self.rrg.find(NodeKind.SOURCE, layer, x, y, tile.pad_output_pin(pad))] = name
        self.output_nodes = []
        for name, (layer, x, y, pad) in bitstream.outputs.items():
            tile = self.rrg.tiles[(layer, x, y)]
            self.output_nodes.append(("n", self.rrg.find(NodeKind.IPIN, layer, x, y, tile.pad_input_pin(pad))))
        self.graph = nx.DiGraph()
        self._build()
        self.order = list(nx.topological_sort(self.graph))

    def _select(self, mux_index: int) -> int:
        mux = self.model.muxes[mux_index]
        return self.bitstream.field_value(mux.offset, mux.width)

    def _lut_bits(self, tile: TileKey, ble: int) -> List[int]:
        lut = self.model.luts[self.model.lut_index[(tile, ble)]]
        return [int(b) for b in self.bitstream.bits[lut.offset:lut.offset + lut.width]]

    def _lut_uses_input(self, table: List[int], i: int) -> bool:
        k = self.model.lut_size
        mask = 1 << (k - 1 - i)
        return any(table[j] != table[j ^ mask] for j in range(len(table)))

    def dependencies(self, signal: Tuple) -> List[Tuple]:
        """ Signals `signal` reads under the current configuration. """

        rrg, model = self.rrg, self.model
        kind = signal[0]
        if kind == "n":
            node = rrg.nodes[signal[1]]
            if node.kind == NodeKind.SOURCE:
                tile = rrg.tiles[(node.layer, node.xlo, node.ylo)]
                if node.id in self.pad_of_source or tile.block != BlockKind.CLB or node.track >= tile.block_pins:
                    return []
                return [("out", (node.layer, node.xlo, node.ylo), node.track - tile.inputs)]
            if node.kind == NodeKind.OPIN:
                return [("n", rrg.edges[e].src) for e in rrg.in_edges[node.id]]
            choice = self._chosen_edge(node.id)
            return [] if choice is None else [("n", rrg.edges[choice].src)]
        tile, ble = signal[1], signal[2]
        if kind == "out":
            if self._select(model.clb_mux[(tile, ble, "osel", 0)]) == 1:
                return [("ffq", tile, ble)]
            return [("lut", tile, ble)]
        if kind == "lut":
            table = self._lut_bits(tile, ble)
            return [source for i in range(model.lut_size) if self._lut_uses_input(table, i)
                    for source in [self._xbar_source(tile, ble, i)] if source is not None]
        return []

    def _chosen_edge(self, node: int) -> Optional[int]:
        inputs = self.routing_inputs[node]
        if not inputs:
            return None
        if node not in self.model.node_mux:
            return inputs[0]
        mux = self.model.muxes[self.model.node_mux[node]]
        select = self._select(self.model.node_mux[node])
        return mux.candidates[select] if select < mux.fanin else None

    def _xbar_source(self, tile: TileKey, ble: int, i: int) -> Optional[Tuple]:
        select = self._select(self.model.clb_mux[(tile, ble, "xbar", i)])
        inputs = self.model.clb_inputs
        if select < inputs:
            layer, x, y = tile
            return ("n", self.rrg.find(NodeKind.IPIN, layer, x, y, select))
        if select < inputs + self.model.cluster_size:
            return ("out", tile, select - inputs)
        return None

    def _build(self) -> None:
        pending: List[Tuple] = list(self.output_nodes)
        visited = set()
        while pending:
            signal = pending.pop()
            if signal in visited:
                continue
            visited.add(signal)
            self.graph.add_node(signal)
            extra = [("lut", signal[1], signal[2])] if signal[0] == "ffq" else []
            for dependency in self.dependencies(signal):
                self.graph.add_edge(dependency, signal)
                pending.append(dependency)
            pending.extend(extra)
        if not nx.is_directed_acyclic_graph(self.graph):
            raise CombinationalLoopError([src for src, _ in nx.find_cycle(self.graph)])

    def run(self, vectors: Sequence[Sequence[int]]) -> List[Tuple[int, ...]]:
        flops = [signal for signal in self.order if signal[0] == "ffq"]
        state = {flop: int(self.bitstream.bits[self.model.ffs[self.model.ff_index[(flop[1], flop[2])]].offset])
                 for flop in flops}
        width = len(self.bitstream.inputs)
        results = []
        for cycle, vector in enumerate(vectors):
            if len(vector) != width:
                raise VectorWidthError(f"vector {cycle} has {len(vector)} bits, fabric has {width} inputs")
            pi_values = dict(zip(self.bitstream.inputs, (int(bit) & 1 for bit in vector)))
            values: Dict[Tuple, int] = {}
            for signal in self.order:
                values[signal] = self._evaluate(signal, values, state, pi_values)
            results.append(tuple(values[node] for node in self.output_nodes))
            state = {flop: values[("lut", flop[1], flop[2])] for flop in flops}
        return results

    def _evaluate(self, signal: Tuple, values: Dict[Tuple, int], state: Dict[Tuple, int],
                  pi_values: Dict[str, int]) -> int:
        if signal[0] == "ffq":
            return state[signal]
        if signal[0] == "n":
            if signal[1] in self.pad_of_source:
                return pi_values[self.pad_of_source[signal[1]]]
            dependencies = list(self.graph.predecessors(signal))
            return values[dependencies[0]] if dependencies else 0
        if signal[0] == "out":
            return values[next(iter(self.graph.predecessors(signal)))]
        tile, ble = signal[1], signal[2]
        table = self._lut_bits(tile, ble)
        index = 0
        for i in range(self.model.lut_size):
            index <<= 1
            if self._lut_uses_input(table, i):
                source = self._xbar_source(tile, ble, i)
                index |= values[source] if source is not None else 0
        return table[index]


def simulate_fabric(model: FabricModel, bitstream: Bitstream, vectors: Sequence[Sequence[int]]) -> List[Tuple[int, ...]]:
    """
    Simulates the programmed fabric. Inputs follow bitstream.inputs order, outputs bitstream.outputs order.

    Raises:
        CombinationalLoopError: If the configuration closes a combinational loop.
        VectorWidthError: If a vector does not match the number of bound inputs.
    """

    return FabricSimulator(model, bitstream).run(vectors)
