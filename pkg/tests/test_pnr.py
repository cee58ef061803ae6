import itertools
import math
import random

import networkx as nx
import pytest

from fabric.delay import DelayModel
from services.bench_service import LogicNetlist, LutCell, generate_random_netlist, load_blif, load_manifest, parse_blif
from services.fabric_graph_service import build_base_rrg
from services.flow_service import cpd_at_ratios, implement
from services.packing_service import build_bles, cluster_bles, pack
from services.placement_service import PlaceParams, Placement, PlacementEngine, place
from services.routing_service import RouteParams, check_legality, read_routing_dump, route, write_routing_dump
from services.timing_service import critical_path, sta
from services.vertical_service import build_3d_rrg, count_layer_crossings
from tests.conftest import MANIFEST
from utils.errors import CombinationalLoopError, PackingError, UnroutableError

INVERTER = (1, 0)


def chain_netlist(length: int) -> LogicNetlist:
    """ pi -> n0 -> n1 -> ... -> n<length-1> (primary output) """

    cells, previous = [], "pi"
    for index in range(length):
        cells.append(LutCell(f"n{index}", (previous,), INVERTER))
        previous = f"n{index}"
    return LogicNetlist(name=f"chain{length}", inputs=["pi"], outputs=[previous], cells=cells)


# Packing

def test_clustering_keeps_connected_luts_together():
    clusters = cluster_bles(build_bles(chain_netlist(4), lut_size=4), cluster_size=2)

    assert [[ble.name for ble in cluster.bles] for cluster in clusters] == [["n0", "n1"], ["n2", "n3"]]


def test_latch_is_absorbed_into_its_driving_lut(load_benchmark):
    (ble,) = build_bles(load_benchmark("counter1"), lut_size=4)

    assert ble.registered
    assert ble.output == "q"
    assert ble.comb_output == "nq"
    assert ble.inputs == ("q",)


def test_latch_without_private_lut_gets_an_identity_lut(load_benchmark):
    bles = build_bles(load_benchmark("shift3"), lut_size=4)

    assert [ble.output for ble in bles] == ["q0", "q1", "q2"]
    assert all(ble.registered and ble.table == (0, 1) for ble in bles)
    assert bles[2].init == 1


def test_pack_rejects_wide_luts(make_spec):
    netlist = parse_blif(".model t\n.inputs a b c\n.outputs y\n.names a b c y\n111 1\n.end\n")

    with pytest.raises(PackingError, match="fanin 3 > K=2"):
        pack(netlist, make_spec(lut_size=2))


def test_pack_rejects_netlists_larger_than_the_grid(make_spec):
    with pytest.raises(PackingError, match="clusters need more"):
        pack(chain_netlist(3), make_spec(width=1, height=1, cluster_size=1))


def test_packed_nets_connect_pads_and_clusters(make_spec, load_benchmark):
    packed = pack(load_benchmark("and2"), make_spec())

    assert [cluster.name for cluster in packed.clusters] == ["clb0"]
    assert packed.nets["a"].driver == "in:a" and packed.nets["a"].sinks == ("clb0",)
    assert packed.nets["y"].driver == "clb0" and packed.nets["y"].sinks == ("out:y",)
    assert packed.blocks == ["clb0", "in:a", "in:b", "out:y"]


# Placement

def test_layer_move_probability(make_spec):
    spec = make_spec(layers=2, connection_type="SB")
    packed = pack(generate_random_netlist(cells=12, inputs=4, outputs=2, seed=1), spec)
    engine = PlacementEngine(packed, build_base_rrg(spec), seed=5, params=PlaceParams(interlayer_move_prob=0.10))
    engine.initial_placement()

    for _ in range(10_000):
        engine.propose_move()

    fraction = engine.stats.interlayer_proposed / engine.stats.proposed
    assert 0.08 <= fraction <= 0.12


def test_layer_changes_without_a_target_layer_are_not_counted(make_spec):
    """ Only the second layer holds CLBs and pads, so no block can leave its layer. """

    spec = make_spec(layers=2, connection_type="SB", layer_class="NonLogicHetero",
                     columns=[["RoutingOnly"] * 4, ["CLB"] * 4])
    packed = pack(generate_random_netlist(cells=12, inputs=4, outputs=2, seed=1), spec)
    engine = PlacementEngine(packed, build_base_rrg(spec), seed=5, params=PlaceParams(interlayer_move_prob=0.5))
    engine.initial_placement()

    moves = [engine.propose_move() for _ in range(2_000)]

    assert engine.stats.proposed == 2_000
    assert engine.stats.interlayer_proposed == 0
    assert not any(move.cross_layer for move in moves)
    assert all(move.target[0] == 1 for move in moves)


def test_greedy_moves_never_increase_cost(make_spec):
    spec = make_spec()
    packed = pack(generate_random_netlist(cells=10, inputs=4, outputs=2, seed=2), spec)
    engine = PlacementEngine(packed, build_base_rrg(spec), seed=2)
    engine.initial_placement()

    for _ in range(500):
        before = engine.cost
        engine.try_move(0.0)
        assert engine.cost <= before + 1e-9
    assert engine.cost == pytest.approx(engine.total_cost())


def exhaustive_optimum(engine: PlacementEngine) -> float:
    clusters = [block for block in engine.blocks if engine.block_class[block] == "clb"]
    pads = [block for block in engine.blocks if engine.block_class[block] == "io"]
    clb_slots = [slot for layer in engine.slots["clb"] for slot in layer]
    io_slots = [slot for layer in engine.slots["io"] for slot in layer]
    best = math.inf
    for clb_choice in itertools.permutations(clb_slots, len(clusters)):
        for io_choice in itertools.permutations(io_slots, len(pads)):
            engine.locations = {**dict(zip(clusters, clb_choice)), **dict(zip(pads, io_choice))}
            best = min(best, engine.total_cost())
    return best


@pytest.mark.slow
@pytest.mark.parametrize("layers, cells", [(1, 2), (1, 3), (2, 2), (2, 3)])
def test_annealing_reaches_the_exhaustive_optimum(make_spec, layers, cells):
    spec = make_spec(width=2, height=2, layers=layers, cluster_size=1, io_capacity=1,
                     connection_type="SB" if layers == 2 else "None2D")
    rrg = build_base_rrg(spec)
    packed = pack(chain_netlist(cells), spec)
    optimum = exhaustive_optimum(PlacementEngine(packed, rrg))

    hits = sum(1 for seed in range(100) if place(packed, rrg, seed).cost == pytest.approx(optimum))

    assert hits >= 95


def test_placement_is_seed_deterministic(make_spec, load_benchmark):
    spec = make_spec(layers=2, connection_type="SB")
    packed = pack(load_benchmark("adder2"), spec)
    rrg = build_base_rrg(spec)

    first, second = place(packed, rrg, seed=4), place(packed, rrg, seed=4)

    assert first.locations == second.locations
    assert first.cost == second.cost


def test_every_block_gets_a_compatible_unique_slot(make_spec, load_benchmark):
    spec = make_spec(layers=2, connection_type="SB")
    packed = pack(load_benchmark("decoder2"), spec)
    rrg = build_base_rrg(spec)

    placement = place(packed, rrg, seed=1)

    pads = [placement.locations[block] for block in packed.io_blocks]
    assert len(set(pads)) == len(pads)
    for layer, x, y, pad in pads:
        assert pad < rrg.tiles[(layer, x, y)].pads
    for cluster in packed.clusters:
        layer, x, y, _ = placement.locations[cluster.name]
        assert rrg.tiles[(layer, x, y)].inputs == spec.clb_inputs


# Routing

def test_same_tile_net_routes_through_one_wire(make_spec, load_benchmark):
    spec = make_spec()
    rrg = build_base_rrg(spec)
    packed = pack(load_benchmark("and2"), spec)
    placement = Placement(packed, {"clb0": (0, 1, 0, 0), "in:a": (0, 1, 0, 0), "in:b": (0, 1, 0, 1),
                                   "out:y": (0, 2, 0, 0)}, 0.0)

    routing = route(placement, rrg, DelayModel.from_spec(spec))

    wires = [node for node in routing.trees["a"] if rrg.nodes[node].is_wire]
    assert 1 <= sum(rrg.nodes[node].span for node in wires) <= 2
    assert check_legality(routing) == []


def test_pigeonhole_congestion_is_unroutable(make_spec):
    """ Three pad inputs, but a W=1 single-tile fabric only has two wires leaving the pads. """

    spec = make_spec(width=1, height=1, channel_width=1, cluster_size=1, io_capacity=4)
    netlist = parse_blif(".model t\n.inputs a b c\n.outputs y\n.names a b c y\n111 1\n.end\n")
    packed = pack(netlist, spec)
    rrg = build_base_rrg(spec)

    with pytest.raises(UnroutableError) as excinfo:
        route(place(packed, rrg, seed=0), rrg, DelayModel.from_spec(spec), RouteParams(max_iters=5))

    assert excinfo.value.iterations == 5
    assert excinfo.value.overused


def test_routing_dump_round_trip(sb_spec, load_benchmark):
    rrg = build_3d_rrg(sb_spec)
    packed = pack(load_benchmark("adder2"), sb_spec)
    routing = route(place(packed, rrg, seed=1), rrg, DelayModel.from_spec(sb_spec))

    trees, roots, summary = read_routing_dump(write_routing_dump(routing, 512.25, 0.5), rrg)

    assert roots == routing.roots
    assert {net: set(tree) for net, tree in trees.items()} == {net: set(tree) for net, tree in routing.trees.items()}
    for net, tree in trees.items():
        for node, edge in tree.items():
            assert rrg.edges[edge].dst == node
    assert summary == {"WL": pytest.approx(routing.wirelength, abs=1e-3), "CPD_PS": 512.25, "CROSSINGS": 0.5}


@pytest.mark.slow
@pytest.mark.parametrize("connection_type", ["None2D", "CB", "SB", "Hybrid", "HybridO"])
def test_successful_routes_are_legal(make_spec, connection_type):
    """ 20 random netlists of 5-40 LUTs per connection type on a 6x6 grid, 100 in total. """

    layers = 1 if connection_type == "None2D" else 2
    spec = make_spec(width=6, height=6, layers=layers, connection_type=connection_type)
    rrg = build_3d_rrg(spec)
    delay_model = DelayModel.from_spec(spec)
    rng = random.Random(connection_type)
    netlists = 20
    routed = 0
    for index in range(netlists):
        cells = rng.randint(5, 40)
        netlist = generate_random_netlist(cells=cells, inputs=rng.randint(3, 8), outputs=rng.randint(1, min(4, cells)),
                                          seed=index, latches=index % 3)
        packed = pack(netlist, spec)
        try:
            routing = route(place(packed, rrg, seed=index), rrg, delay_model)
        except UnroutableError:
            continue
        routed += 1
        assert check_legality(routing) == [], netlist.name
        assert all(routing.occupancy[node] <= rrg.nodes[node].capacity for node in range(len(rrg.nodes)))

    assert routed >= netlists // 2



def test_layer_crossings_per_net(planar_spec, sb_spec, load_benchmark):
    flat = implement(planar_spec, load_benchmark("adder2"), seed=1)
    stacked = implement(sb_spec, load_benchmark("adder2"), seed=1)
    nodes, edges = stacked.rrg.nodes, stacked.rrg.edges
    nets = [net for net in stacked.routing.trees if stacked.routing.sink_of.get(net)]
    crossing_edges = sum(1 for net in nets for edge in stacked.routing.trees[net].values()
                         if nodes[edges[edge].src].layer != nodes[edges[edge].dst].layer)

    assert count_layer_crossings(flat.routing) == 0.0
    assert flat.crossings == 0.0
    assert count_layer_crossings(stacked.routing) == pytest.approx(crossing_edges / len(nets))


# Timing

def test_hand_built_path_delay():
    graph = nx.DiGraph()
    graph.add_edge(("pi", "a"), ("n", "1"), delay=100e-12)
    graph.add_edge(("n", "1"), ("n", "2"), delay=185.4e-12)
    graph.add_edge(("n", "2"), ("po", "y"), delay=137e-12)

    cpd, path = critical_path(graph)

    assert cpd == pytest.approx(422.4e-12)
    assert path == [("pi", "a"), ("n", "1"), ("n", "2"), ("po", "y")]


def test_timing_graph_cycle_is_rejected():
    graph = nx.DiGraph()
    graph.add_edge("a", "b", delay=1.0)
    graph.add_edge("b", "a", delay=1.0)

    with pytest.raises(CombinationalLoopError):
        critical_path(graph)


def test_single_lut_critical_path_is_the_lut_delay(make_spec, load_benchmark):
    spec = make_spec(timing={"vertical_delay_ratio": 1.0, "base_switch_delay": 0.0,
                             "wire_delay_per_tile": 0.0, "lut_delay": 1e-9})
    rrg = build_base_rrg(spec)
    packed = pack(load_benchmark("and2"), spec)
    model = DelayModel.from_spec(spec)
    routing = route(place(packed, rrg, seed=0), rrg, model)

    report = sta(routing, packed, model)

    assert report.cpd == pytest.approx(1e-9)
    assert report.critical_path[0].startswith("pi:")
    assert report.critical_path[-1] == "po:y"


def test_cpd_is_monotone_in_the_vertical_delay_ratio(sb_spec, load_benchmark):
    implementation = implement(sb_spec, load_benchmark("adder2"), seed=3)
    ratios = [0.5, 1, 2, 5, 10]

    cpds = cpd_at_ratios(implementation, ratios)

    values = [cpds[ratio] for ratio in ratios]
    assert values == sorted(values)
    assert implementation.timing.cpd > 0


@pytest.mark.slow
def test_rerouting_with_slower_vias_never_lowers_cpd(make_spec):
    """ Each benchmark is placed and routed again for each ratio. """

    specs = {ratio: make_spec(layers=2, connection_type="SB",
                              timing={"vertical_delay_ratio": ratio, "base_switch_delay": 185.4e-12})
             for ratio in (0.5, 10)}

    for entry in load_manifest(MANIFEST):
        netlist = load_blif(entry.blif)
        cpd = {ratio: implement(spec, netlist, seed=1).timing.cpd for ratio, spec in specs.items()}
        assert cpd[10] >= cpd[0.5], entry.name
