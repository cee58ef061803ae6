import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

from api.schemas import ArchSpec
from fabric.models import BlockKind
from services.bench_service import LogicNetlist
from services.fabric_graph_service import build_tiles
from utils.errors import PackingError

_logger = logging.getLogger(__name__)

IDENTITY_TABLE = (0, 1)


@dataclass(frozen=True)
class BLE:
    """
    Basic logic element: a LUT, an optional flip-flop and the output select.
    `output` is the signal the BLE presents to the cluster output pin.
    """

    name: str
    inputs: Tuple[str, ...]
    table: Tuple[int, ...]
    output: str
    registered: bool = False
    init: int = 0
    comb_output: str = ""

    @property
    def signals(self) -> Tuple[str, ...]:
        return self.inputs + (self.output,)


@dataclass
class Cluster:
    name: str
    bles: List[BLE] = field(default_factory=list)

    @property
    def outputs(self) -> List[str]:
        return [ble.output for ble in self.bles]

    @property
    def external_inputs(self) -> List[str]:
        """ Signals read by the cluster that are not produced inside it, in first-use order. """

        local = set(self.outputs)
        return list(dict.fromkeys(s for ble in self.bles for s in ble.inputs if s not in local))


@dataclass(frozen=True)
class PackedNet:
    name: str
    driver: str
    sinks: Tuple[str, ...]


@dataclass
class PackedNetlist:
    """ Clusters, IO blocks and the inter-block nets. IO blocks are named "in:<pi>" / "out:<po>". """

    netlist: LogicNetlist
    lut_size: int
    cluster_size: int
    clusters: List[Cluster] = field(default_factory=list)
    nets: Dict[str, PackedNet] = field(default_factory=dict)

    @property
    def input_blocks(self) -> List[str]:
        return [f"in:{signal}" for signal in self.netlist.inputs]

    @property
    def output_blocks(self) -> List[str]:
        return [f"out:{signal}" for signal in self.netlist.outputs]

    @property
    def io_blocks(self) -> List[str]:
        return self.input_blocks + self.output_blocks

    @property
    def blocks(self) -> List[str]:
        return [cluster.name for cluster in self.clusters] + self.io_blocks

    @cached_property
    def cluster_by_name(self) -> Dict[str, Cluster]:
        return {cluster.name: cluster for cluster in self.clusters}

    @cached_property
    def location_of_signal(self) -> Dict[str, Tuple[str, int]]:
        """ BLE output signal -> (cluster name, BLE slot) """

        return {ble.output: (cluster.name, slot)
                for cluster in self.clusters for slot, ble in enumerate(cluster.bles)}

    def nets_of_block(self) -> Dict[str, List[str]]:
        result: Dict[str, List[str]] = {block: [] for block in self.blocks}
        for net in self.nets.values():
            result[net.driver].append(net.name)
            for sink in net.sinks:
                result[sink].append(net.name)
        return result


def build_bles(netlist: LogicNetlist, lut_size: int) -> List[BLE]:
    """
    One BLE per LUT. A latch shares the BLE of the LUT driving its D input when
    that LUT feeds nothing else and is not a primary output; any other latch gets an identity LUT.

    Raises:
        PackingError: If a LUT has more inputs than the architecture's LUT size.
    """

    for cell in netlist.cells:
        if len(cell.inputs) > lut_size:
            raise PackingError(f"LUT '{cell.output}' has fanin {len(cell.inputs)} > K={lut_size}")

    consumers: Dict[str, int] = {}
    for cell in netlist.cells:
        for signal in set(cell.inputs):
            consumers[signal] = consumers.get(signal, 0) + 1
    for latch in netlist.latches:
        consumers[latch.d] = consumers.get(latch.d, 0) + 1
    outputs = set(netlist.outputs)

    absorbed = {}
    for latch in netlist.latches:
        if (latch.d in netlist.cell_of and consumers.get(latch.d) == 1
                and latch.d not in outputs and latch.d not in absorbed):
            absorbed[latch.d] = latch

    bles = []
    for cell in netlist.cells:
        latch = absorbed.get(cell.output)
        if latch is None:
            bles.append(BLE(cell.output, cell.inputs, cell.table, cell.output, comb_output=cell.output))
        else:
            bles.append(BLE(latch.q, cell.inputs, cell.table, latch.q, True, latch.init, comb_output=cell.output))
    for latch in netlist.latches:
        if latch.d not in absorbed or absorbed[latch.d] is not latch:
            bles.append(BLE(latch.q, (latch.d,), IDENTITY_TABLE, latch.q, True, latch.init,
                            comb_output=f"{latch.q}$d"))
    return bles


def cluster_bles(bles: List[BLE], cluster_size: int) -> List[Cluster]:
    """ Greedy affinity clustering: seed with the first free BLE, absorb the most signal-sharing BLE until full. """

    free = list(range(len(bles)))
    clusters = []
    while free:
        seed = free.pop(0)
        members = [seed]
        signals = set(bles[seed].signals)
        while len(members) < cluster_size and free:
            best = max(free, key=lambda i: (len(signals.intersection(bles[i].signals)), -i))
            free.remove(best)
            members.append(best)
            signals.update(bles[best].signals)
        clusters.append(Cluster(f"clb{len(clusters)}", [bles[i] for i in members]))
    return clusters


def _build_nets(packed: PackedNetlist) -> Dict[str, PackedNet]:
    netlist = packed.netlist
    driver_of: Dict[str, str] = {signal: f"in:{signal}" for signal in netlist.inputs}
    for cluster in packed.clusters:
        for signal in cluster.outputs:
            driver_of[signal] = cluster.name

    sinks: Dict[str, List[str]] = {signal: [] for signal in driver_of}
    for cluster in packed.clusters:
        for signal in cluster.external_inputs:
            sinks[signal].append(cluster.name)
    for signal in netlist.outputs:
        sinks[signal].append(f"out:{signal}")

    return {signal: PackedNet(signal, driver_of[signal], tuple(targets))
            for signal, targets in sinks.items() if targets}


def pack(netlist: LogicNetlist, spec: ArchSpec) -> PackedNetlist:
    """
    Packs the netlist into clusters of spec.cluster_size BLEs.

    Raises:
        PackingError: On LUT fanin > K or when the grid has too few CLB tiles or pads.
    """

    bles = build_bles(netlist, spec.lut_size)
    packed = PackedNetlist(netlist, spec.lut_size, spec.cluster_size, cluster_bles(bles, spec.cluster_size))

    tiles = build_tiles(spec).values()
    clb_tiles = sum(1 for tile in tiles if tile.block == BlockKind.CLB)
    pads = sum(tile.pads for tile in tiles)
    if len(packed.clusters) > clb_tiles:
        raise PackingError(f"{len(packed.clusters)} clusters need more than the {clb_tiles} CLB tiles")
    if len(packed.io_blocks) > pads:
        raise PackingError(f"{len(packed.io_blocks)} IO blocks need more than the {pads} pads")

    packed.nets = _build_nets(packed)
    _logger.info("Packed %d BLEs into %d clusters, %d nets", len(bles), len(packed.clusters), len(packed.nets))
    return packed
