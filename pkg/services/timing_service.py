import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import networkx as nx

from fabric.delay import DelayModel
from services.packing_service import PackedNetlist
from services.routing_service import RoutingResult, edge_delays, tree_arrivals
from utils.errors import CombinationalLoopError

_logger = logging.getLogger(__name__)

TimingNode = Tuple[str, ...]


@dataclass
class TimingReport:
    cpd: float = 0.0
    critical_path: List[str] = field(default_factory=list)
    net_slack: Dict[str, float] = field(default_factory=dict)

    @property
    def cpd_ps(self) -> float:
        return self.cpd * 1e12


def _label(node: TimingNode) -> str:
    return ":".join(str(part) for part in node)


def critical_path(graph: nx.DiGraph) -> Tuple[float, List[TimingNode]]:
    """
    Longest path over edge attribute "delay" in a timing DAG.

    Raises:
        CombinationalLoopError: If the graph has a cycle.
    """

    if not nx.is_directed_acyclic_graph(graph):
        raise CombinationalLoopError([src for src, _ in nx.find_cycle(graph)])
    arrival: Dict[TimingNode, float] = {}
    best_pred: Dict[TimingNode, TimingNode] = {}
    for node in nx.lexicographical_topological_sort(graph, key=str):
        preds = list(graph.predecessors(node))
        if not preds:
            arrival[node] = 0.0
            continue
        best = max(preds, key=lambda p: (arrival[p] + graph.edges[p, node]["delay"], str(p)))
        arrival[node] = arrival[best] + graph.edges[best, node]["delay"]
        best_pred[node] = best
    if not arrival:
        return 0.0, []
    end = max(arrival, key=lambda node: (arrival[node], str(node)))
    path = [end]
    while path[-1] in best_pred:
        path.append(best_pred[path[-1]])
    return arrival[end], list(reversed(path))


def _interconnect_delays(routing: RoutingResult, delay_model: DelayModel) -> Dict[str, Dict[str, float]]:
    """ Routed source-to-sink delays recomputed under `delay_model`. """

    delays = edge_delays(routing.rrg, delay_model)
    result = {}
    for net, tree in routing.trees.items():
        arrival = tree_arrivals(routing.rrg, tree, routing.roots[net], delays)
        result[net] = {block: arrival[sink] for block, sink in routing.sink_of[net].items()}
    return result


def timing_graph(routing: RoutingResult, packed: PackedNetlist, delay_model: DelayModel) -> nx.DiGraph:
    """
    Timing DAG: pi/ ffq start points, lut nodes, ffd/ po end points.
    Edge delay = routed interconnect + delay of the LUT it enters; LUT -> FF edges carry the setup time.
    Local feedback inside a cluster has zero interconnect delay.
    """

    interconnect = _interconnect_delays(routing, delay_model)
    graph = nx.DiGraph()
    graph.add_nodes_from(("pi", signal) for signal in packed.netlist.inputs)

    def driver_node(signal: str) -> TimingNode:
        if signal in packed.location_of_signal:
            cluster, slot = packed.location_of_signal[signal]
            ble = packed.cluster_by_name[cluster].bles[slot]
            return ("ffq" if ble.registered else "lut", cluster, slot)
        return ("pi", signal)

    def add(src: TimingNode, dst: TimingNode, delay: float, net: str) -> None:
        if graph.has_edge(src, dst):
            delay = max(delay, graph.edges[src, dst]["delay"])
        graph.add_edge(src, dst, delay=delay, net=net)

    for cluster in packed.clusters:
        for slot, ble in enumerate(cluster.bles):
            lut = ("lut", cluster.name, slot)
            graph.add_node(lut)
            for signal in ble.inputs:
                src = driver_node(signal)
                local = len(src) == 3 and src[1] == cluster.name
                wire = 0.0 if local else interconnect[signal][cluster.name]
                add(src, lut, wire + delay_model.lut_delay, signal)
            if ble.registered:
                add(lut, ("ffd", cluster.name, slot), delay_model.setup_time, ble.comb_output)
                graph.add_node(("ffq", cluster.name, slot))

    for signal in packed.netlist.outputs:
        add(driver_node(signal), ("po", signal), interconnect[signal][f"out:{signal}"], signal)
    return graph


def sta(routing: RoutingResult, packed: PackedNetlist, delay_model: DelayModel) -> TimingReport:
    """
    Static timing over routed delays.

    Returns:
        TimingReport: Critical path delay (seconds), the critical path and the worst slack per net.
    """

    graph = timing_graph(routing, packed, delay_model)
    cpd, path = critical_path(graph)

    # Required times propagate backwards from every end point at the CPD
    required: Dict[TimingNode, float] = {}
    for node in reversed(list(nx.lexicographical_topological_sort(graph, key=str))):
        successors = list(graph.successors(node))
        if not successors:
            required[node] = cpd
        else:
            required[node] = min(required[s] - graph.edges[node, s]["delay"] for s in successors)
    arrival: Dict[TimingNode, float] = {}
    for node in nx.lexicographical_topological_sort(graph, key=str):
        arrival[node] = max((arrival[p] + graph.edges[p, node]["delay"] for p in graph.predecessors(node)), default=0.0)

    slack: Dict[str, float] = {}
    for src, dst, data in graph.edges(data=True):
        value = required[dst] - (arrival[src] + data["delay"])
        slack[data["net"]] = min(value, slack.get(data["net"], value))

    report = TimingReport(cpd=cpd, critical_path=[_label(node) for node in path], net_slack=dict(sorted(slack.items())))
    _logger.info("Critical path delay %.1f ps over %d timing nodes", report.cpd_ps, len(path))
    return report
