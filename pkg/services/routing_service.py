import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from fabric.delay import DelayModel
from fabric.models import CROSS_LAYER_EDGE_KINDS, EdgeKind, NodeKind, RoutingResourceGraph
from services.placement_service import Placement
from utils.errors import RRGFormatError, UnroutableError

_logger = logging.getLogger(__name__)

# node id -> id of the edge that reaches it from its parent; the root is not a key
RouteTree = Dict[int, int]


@dataclass(frozen=True)
class RouteParams:
    max_iters: int = 50
    pres_fac_initial: float = 0.5
    pres_fac_mult: float = 1.5
    hist_fac: float = 1.0
    criticality_exp: float = 1.0
    max_criticality: float = 0.99
    via_cost: float = 1.0
    vertical_wl_weight: float = 1.0
    wire_base_cost: float = 1.0
    chanz_base_cost: float = 0.5
    ipin_base_cost: float = 0.95


@dataclass
class RoutingResult:
    rrg: RoutingResourceGraph
    trees: Dict[str, RouteTree] = field(default_factory=dict)
    roots: Dict[str, int] = field(default_factory=dict)
    sink_of: Dict[str, Dict[str, int]] = field(default_factory=dict)
    occupancy: List[int] = field(default_factory=list)
    wirelength: float = 0.0
    net_delays: Dict[str, Dict[str, float]] = field(default_factory=dict)
    iterations: int = 0
    placement: Optional[Placement] = None
    elapsed_ms: float = 0.0

    def nodes_of(self, net: str) -> Set[int]:
        return {self.roots[net], *self.trees[net]}


def edge_delays(rrg: RoutingResourceGraph, delay_model: DelayModel) -> List[float]:
    return [delay_model.edge_delay(edge.kind, rrg.nodes[edge.dst]) for edge in rrg.edges]


def tree_arrivals(rrg: RoutingResourceGraph, tree: RouteTree, root: int, delays: List[float]) -> Dict[int, float]:
    """ Interconnect delay from the root to every node of a route tree. """

    arrival = {root: 0.0}
    for node in tree:
        chain = []
        current = node
        while current not in arrival:
            chain.append(current)
            current = rrg.edges[tree[current]].src
        for item in reversed(chain):
            arrival[item] = arrival[rrg.edges[tree[item]].src] + delays[tree[item]]
    return arrival


def routed_wirelength(rrg: RoutingResourceGraph, trees: Dict[str, RouteTree], vertical_weight: float = 1.0) -> float:
    """ Sum of used wire spans in tiles plus vertical_weight per used via. """

    total = 0.0
    for tree in trees.values():
        for node, edge in tree.items():
            total += rrg.nodes[node].span
            if rrg.edges[edge].kind == EdgeKind.via:
                total += vertical_weight
    return total


def net_terminals(placement: Placement, rrg: RoutingResourceGraph) -> Dict[str, Tuple[int, Dict[str, int]]]:
    """ net -> (SOURCE node, {sink block: SINK node}) """

    packed = placement.packed
    terminals = {}
    for name, net in packed.nets.items():
        layer, x, y, sub = placement.locations[net.driver]
        tile = rrg.tiles[(layer, x, y)]
        if net.driver.startswith("in:"):
            pin = tile.pad_output_pin(sub)
        else:
            pin = tile.inputs + packed.location_of_signal[name][1]
        source = rrg.find(NodeKind.SOURCE, layer, x, y, pin)

        sinks = {}
        for block in net.sinks:
            layer, x, y, sub = placement.locations[block]
            tile = rrg.tiles[(layer, x, y)]
            rep = tile.class_of_pin(tile.pad_input_pin(sub)) if block.startswith("out:") else 0
            sinks[block] = rrg.find(NodeKind.SINK, layer, x, y, rep)
        terminals[name] = (source, sinks)
    return terminals


class PathFinderRouter:
    """ Negotiated congestion router: every net is ripped up and rerouted each iteration. """

    def __init__(self, rrg: RoutingResourceGraph, delay_model: DelayModel, params: RouteParams):
        self.rrg = rrg
        self.params = params
        self.delays = edge_delays(rrg, delay_model)
        self.delay_norm = max(delay_model.base_switch_delay, 1e-12)
        self.capacity = [node.capacity for node in rrg.nodes]
        self.occupancy = [0] * len(rrg.nodes)
        self.history = [0.0] * len(rrg.nodes)
        self.pres_fac = params.pres_fac_initial

        base = {NodeKind.CHANX: params.wire_base_cost, NodeKind.CHANY: params.wire_base_cost,
                NodeKind.CHANZ: params.chanz_base_cost, NodeKind.IPIN: params.ipin_base_cost,
                NodeKind.OPIN: 1.0, NodeKind.SOURCE: 0.0, NodeKind.SINK: 0.0}
        self.base_cost = [base[node.kind] for node in rrg.nodes]
        self.edge_penalty = [params.via_cost if edge.kind in CROSS_LAYER_EDGE_KINDS else 0.0 for edge in rrg.edges]
        self.ipin_sink = {node.id: rrg.edges[rrg.out_edges[node.id][0]].dst
                          for node in rrg.nodes if node.kind == NodeKind.IPIN and rrg.out_edges[node.id]}

    def node_cost(self, node: int, edge: int, criticality: float) -> float:
        overuse = max(0, self.occupancy[node] + 1 - self.capacity[node])
        congestion = self.base_cost[node] * (1 + self.pres_fac * overuse) + self.history[node] + self.edge_penalty[edge]
        return (1 - criticality) * congestion + criticality * self.delays[edge] / self.delay_norm

    def shortest_path(self, start: Set[int], target: int, criticality: float) -> List[Tuple[int, int]]:
        """ Cheapest (node, edge) chain from any node of `start` to `target`, in root-to-target order. """

        rrg = self.rrg
        cost = {node: 0.0 for node in start}
        previous: Dict[int, int] = {}
        heap = [(0.0, node) for node in sorted(start)]
        heapq.heapify(heap)
        while heap:
            current_cost, node = heapq.heappop(heap)
            if node == target:
                break
            if current_cost > cost.get(node, float("inf")):
                continue
            for edge in rrg.out_edges[node]:
                nxt = rrg.edges[edge].dst
                if nxt in start:
                    continue
                kind = rrg.nodes[nxt].kind
                if kind == NodeKind.SINK and nxt != target:
                    continue
                if kind == NodeKind.IPIN and self.ipin_sink.get(nxt) != target:
                    continue
                new_cost = current_cost + self.node_cost(nxt, edge, criticality)
                if new_cost < cost.get(nxt, float("inf")):
                    cost[nxt] = new_cost
                    previous[nxt] = edge
                    heapq.heappush(heap, (new_cost, nxt))
        else:
            return []
        if target not in previous:
            return []

        path = []
        node = target
        while node not in start:
            edge = previous[node]
            path.append((node, edge))
            node = rrg.edges[edge].src
        path.reverse()
        return path

    def route_net(self, source: int, sinks: List[Tuple[str, int]], criticality: Dict[str, float]) -> RouteTree:
        tree: RouteTree = {}
        in_tree = {source}
        for block, sink in sinks:
            path = self.shortest_path(in_tree, sink, criticality.get(block, 0.0))
            if not path:
                raise UnroutableError(0, [f"no path to sink {sink} of {block}"])
            for node, edge in path:
                tree[node] = edge
                in_tree.add(node)
        return tree

    def occupy(self, source: int, tree: RouteTree, amount: int) -> None:
        self.occupancy[source] += amount
        for node in tree:
            self.occupancy[node] += amount

    def overused(self) -> List[int]:
        return [node for node, occupancy in enumerate(self.occupancy) if occupancy > self.capacity[node]]

    def describe(self, node: int) -> str:
        rr = self.rrg.nodes[node]
        return (f"{rr.kind.value}#{node}(l{rr.layer},x{rr.xlo},y{rr.ylo},t{rr.track}) "
                f"{self.occupancy[node]}/{self.capacity[node]}")


def route(placement: Placement, rrg: RoutingResourceGraph, delay_model: DelayModel,
          params: Optional[RouteParams] = None) -> RoutingResult:
    """
    Routes every net of the placement over the (3D) routing resource graph.

    Returns:
        RoutingResult: Legal route trees with occupancy, wirelength and per-sink interconnect delays.

    Raises:
        UnroutableError: If congestion remains after params.max_iters iterations.
    """

    params = params or RouteParams()
    started = time.perf_counter()
    router = PathFinderRouter(rrg, delay_model, params)
    terminals = net_terminals(placement, rrg)

    def distance(source: int, sink: int) -> int:
        a, b = rrg.nodes[source], rrg.nodes[sink]
        return abs(a.xlo - b.xlo) + abs(a.ylo - b.ylo) + abs(a.layer - b.layer)

    order = sorted(terminals, key=lambda net: (-len(terminals[net][1]), net))
    ordered_sinks = {net: sorted(terminals[net][1].items(), key=lambda item: (distance(terminals[net][0], item[1]), item[0]))
                     for net in order}
    criticality: Dict[str, Dict[str, float]] = {net: {} for net in order}
    trees: Dict[str, RouteTree] = {}
    delays: Dict[str, Dict[str, float]] = {}

    iteration = 0
    for iteration in range(1, params.max_iters + 1):
        for net in order:
            source = terminals[net][0]
            if net in trees:
                router.occupy(source, trees[net], -1)
            trees[net] = router.route_net(source, ordered_sinks[net], criticality[net])
            router.occupy(source, trees[net], 1)

        delays = {}
        for net in order:
            source, sinks = terminals[net]
            arrival = tree_arrivals(rrg, trees[net], source, router.delays)
            delays[net] = {block: arrival[sink] for block, sink in sinks.items()}
        overused = router.overused()
        _logger.debug("Routing iteration %d: %d overused nodes, pres_fac %.3f", iteration, len(overused), router.pres_fac)
        if not overused:
            break
        if iteration == params.max_iters:
            raise UnroutableError(iteration, [router.describe(node) for node in overused])

        for node in overused:
            router.history[node] += params.hist_fac * (router.occupancy[node] - router.capacity[node])
        router.pres_fac *= params.pres_fac_mult
        worst = max((d for sinks in delays.values() for d in sinks.values()), default=0.0)
        for net, sinks in delays.items():
            criticality[net] = {
                block: min(params.max_criticality, (d / worst) ** params.criticality_exp) if worst > 0 else 0.0
                for block, d in sinks.items()
            }

    result = RoutingResult(
        rrg=rrg,
        trees=trees,
        roots={net: terminals[net][0] for net in order},
        sink_of={net: dict(terminals[net][1]) for net in order},
        occupancy=list(router.occupancy),
        wirelength=routed_wirelength(rrg, trees, params.vertical_wl_weight),
        net_delays=delays,
        iterations=iteration,
        placement=placement,
        elapsed_ms=(time.perf_counter() - started) * 1000.0,
    )
    _logger.info("Routed %d nets in %d iterations, wirelength %.1f", len(trees), iteration, result.wirelength)
    return result


def check_legality(routing: RoutingResult) -> List[str]:
    """ Independent re-scan: occupancy from the trees against node capacities, and tree connectivity. """

    rrg = routing.rrg
    occupancy = [0] * len(rrg.nodes)
    problems = []
    for net, tree in routing.trees.items():
        nodes = routing.nodes_of(net)
        for node in nodes:
            occupancy[node] += 1
        for node, edge in tree.items():
            if rrg.edges[edge].dst != node or rrg.edges[edge].src not in nodes:
                problems.append(f"{net}: edge {edge} does not connect the tree to node {node}")
        missing = [sink for sink in routing.sink_of.get(net, {}).values() if sink not in nodes]
        if missing:
            problems.append(f"{net}: sinks {missing} not reached")
    for node, count in enumerate(occupancy):
        if count > rrg.nodes[node].capacity:
            problems.append(f"node {node} used {count} times, capacity {rrg.nodes[node].capacity}")
    return problems


def _preorder(rrg: RoutingResourceGraph, tree: RouteTree, root: int) -> List[int]:
    children: Dict[int, List[int]] = {}
    for node, edge in tree.items():
        children.setdefault(rrg.edges[edge].src, []).append(node)
    order, stack = [], [root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(sorted(children.get(node, []), reverse=True))
    return order


def write_routing_dump(routing: RoutingResult, cpd_ps: float = 0.0, crossings: float = 0.0) -> str:
    """ One "NET <name>: <node ids>" line per net in depth-first preorder, then a summary block. """

    lines = []
    for net in sorted(routing.trees):
        nodes = _preorder(routing.rrg, routing.trees[net], routing.roots[net])
        lines.append(f"NET {net}: " + " ".join(str(node) for node in nodes))
    lines.append("SUMMARY")
    lines.append(f"WL {routing.wirelength:.3f}")
    lines.append(f"CPD_PS {cpd_ps:.3f}")
    lines.append(f"CROSSINGS {crossings:.6f}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def read_routing_dump(text: str, rrg: RoutingResourceGraph) -> Tuple[Dict[str, RouteTree], Dict[str, int], Dict[str, float]]:
    """
    Rebuilds route trees from a dump. Each node's parent is the deepest node
    on the current preorder path with an edge into it.

    Returns:
        (trees, roots, summary)

    Raises:
        RRGFormatError: With the line of the first malformed entry.
    """

    trees: Dict[str, RouteTree] = {}
    roots: Dict[str, int] = {}
    summary: Dict[str, float] = {}
    in_summary = False
    ended = False
    lines = text.splitlines()
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if ended:
            raise RRGFormatError("content after END", number)
        if line.startswith("NET ") and not in_summary:
            name, _, ids = line[4:].partition(":")
            try:
                nodes = [int(token) for token in ids.split()]
            except ValueError:
                raise RRGFormatError(f"non-integer node id in {line!r}", number)
            if not nodes or any(not 0 <= node < len(rrg.nodes) for node in nodes):
                raise RRGFormatError(f"empty or out-of-range node list for net {name.strip()}", number)
            tree: RouteTree = {}
            stack = [nodes[0]]
            for node in nodes[1:]:
                while stack:
                    edge = next((e for e in rrg.out_edges[stack[-1]] if rrg.edges[e].dst == node), None)
                    if edge is not None:
                        break
                    stack.pop()
                if not stack:
                    raise RRGFormatError(f"node {node} of net {name.strip()} is not reachable from its path", number)
                tree[node] = edge
                stack.append(node)
            trees[name.strip()] = tree
            roots[name.strip()] = nodes[0]
        elif line == "SUMMARY":
            in_summary = True
        elif line == "END":
            ended = True
        elif in_summary and len(line.split()) == 2:
            key, value = line.split()
            try:
                summary[key] = float(value)
            except ValueError:
                raise RRGFormatError(f"non-numeric summary value {value!r}", number)
        else:
            raise RRGFormatError(f"malformed line {line!r}", number)
    if not ended:
        raise RRGFormatError("truncated dump: missing END", len(lines) + 1)
    return trees, roots, summary
