import random

import pytest

from api.schemas import SBPattern
from fabric.models import Direction, EdgeKind, NodeKind
from services.fabric_graph_service import build_base_rrg, node_census
from services.vertical_service import (
    NAMED_PATTERNS, build_3d_rrg, count_vertical, extend_to_3d, plan_sites, site_target, vertical_track_map,
)
from utils.errors import CustomRuleError, SitePlanError


def brute_force_track_map(pattern: SBPattern, width: int, k: int):
    inputs, outputs = [], []
    for offset in pattern.input:
        track = offset + k
        while track < 0:
            track += width
        inputs.append(track % width)
    for offset in pattern.output:
        track = offset + k
        while track < 0:
            track += width
        outputs.append(track % width)
    return tuple(inputs), tuple(outputs)


def test_track_map_examples():
    assert vertical_track_map(NAMED_PATTERNS["subset"], 4, 2).inputs == (2, 2, 2, 2)
    assert vertical_track_map(SBPattern(output=[1, 2, 3, 4]), 4, 0).outputs == (1, 2, 3, 0)
    assert vertical_track_map(SBPattern(input=[-2, -1, 1, 2]), 8, 0).inputs == (6, 7, 1, 2)


def count_track_map_mismatches(patterns) -> int:
    mismatches = 0
    for width in range(2, 17):
        for pattern in patterns:
            for k in range(width):
                track_map = vertical_track_map(pattern, width, k)
                if (track_map.inputs, track_map.outputs) != brute_force_track_map(pattern, width, k):
                    mismatches += 1
    return mismatches


def test_named_track_maps_match_brute_force():
    assert count_track_map_mismatches(NAMED_PATTERNS.values()) == 0


@pytest.mark.slow
def test_random_track_maps_match_brute_force():
    """ 10,000 random patterns with entries in -3..3, for W in 2..16. """

    rng = random.Random(0)
    patterns = [SBPattern(input=[rng.randint(-3, 3) for _ in range(4)], output=[rng.randint(-3, 3) for _ in range(4)])
                for _ in range(10_000)]

    assert count_track_map_mismatches(patterns) == 0


@pytest.mark.parametrize("percentage, expected", [(0, 0), (20, 5), (33, 8), (48, 12), (50, 13), (66, 17), (100, 25)])
def test_site_target_rounds_half_up(percentage, expected):
    assert site_target(percentage, 25) == expected


def test_repeated_interval_takes_widest_stride(make_spec):
    plan = plan_sites(make_spec(layers=2, connection_type="SB", sb_percentage=48))

    even = [(x, y) for y in range(5) for x in range(5) if (x + y) % 2 == 0]
    assert plan.sites == tuple(even[:12])
    assert plan.total_sites == 25
    assert plan.realized_percentage == pytest.approx(48.0)


def test_perimeter_starts_on_the_outer_ring(make_spec):
    plan = plan_sites(make_spec(layers=2, connection_type="SB", sb_percentage=20, sb_placement="Perimeter"))

    assert plan.sites == ((0, 0), (1, 0), (2, 0), (3, 0), (4, 0))


def test_core_grows_from_the_center(make_spec):
    plan = plan_sites(make_spec(layers=2, connection_type="SB", sb_percentage=20, sb_placement="Core"))

    assert plan.sites == ((1, 1), (2, 1), (3, 1), (1, 2), (2, 2))


def test_random_placement_is_seeded(make_spec):
    spec = make_spec(layers=2, connection_type="SB", sb_percentage=66, sb_placement="Random")

    first = plan_sites(spec, seed=3)

    assert first == plan_sites(spec, seed=3)
    assert len(first.sites) == 17
    assert list(first.sites) == sorted(first.sites, key=lambda site: (site[1], site[0]))


@pytest.mark.parametrize("sites", [[[5, 5]], [[2, 2], [2, 2]]])
def test_custom_list_rejects_bad_sites(make_spec, sites):
    spec = make_spec(layers=2, connection_type="SB", sb_placement="CustomList", vertical={"custom_sites": sites})

    with pytest.raises(SitePlanError):
        plan_sites(spec)


def test_single_site_w2_fabric(make_spec):
    """ One 3D switch block, W=2: two tracks x up/ down = 4 ChanzPairs, 8 CHANZ nodes. """

    spec = make_spec(layers=2, channel_width=2, connection_type="SB", sb_placement="CustomList",
                     vertical={"custom_sites": [[2, 2]]})

    rrg = build_3d_rrg(spec)
    counts = count_vertical(rrg)

    assert node_census(rrg)[NodeKind.CHANZ] == 8
    assert len(rrg.chanz_pairs) == 4
    assert counts.total == 4
    assert counts.per_grid == pytest.approx(0.25)
    assert {pair.site for pair in rrg.chanz_pairs} == {(2, 2)}
    assert {pair.direction for pair in rrg.chanz_pairs} == {Direction.AboveInc, Direction.UnderDec}


def test_sb_pattern_selects_planar_stubs(make_spec):
    spec = make_spec(layers=2, connection_type="SB", sb_placement="CustomList",
                     vertical={"custom_sites": [[2, 2]]}, pattern={"input": [0, 1, 2, 3], "output": [0, 1, 2, 3]})

    rrg = build_3d_rrg(spec)

    up_sources = [node for node in rrg.nodes if node.kind == NodeKind.CHANZ and node.direction == Direction.AboveInc]
    assert len(up_sources) == 8
    for node in up_sources:
        feeding = [rrg.edges[e] for e in rrg.in_edges[node.id]]
        assert {edge.kind for edge in feeding} == {EdgeKind.sb_in}
        assert {rrg.nodes[edge.src].track for edge in feeding} == {(node.track + i) % 8 for i in range(4)}
        assert {rrg.nodes[edge.src].layer for edge in feeding} == {0}


def test_structural_via_laws(make_spec):
    """ 4x4, two layers, W=8: Hybrid = CB + SB, SB = sites x 2 x W, totals grow with the SB percentage. """

    def total(connection_type: str, percentage: int = 100) -> int:
        spec = make_spec(layers=2, connection_type=connection_type, sb_percentage=percentage)
        return count_vertical(build_3d_rrg(spec)).total

    sites = len(plan_sites(make_spec(layers=2, connection_type="SB")).sites)

    assert total("SB") == sites * 2 * 8 == 400
    assert total("Hybrid") == total("CB") + total("SB")
    for connection_type in ("SB", "Hybrid", "HybridO"):
        totals = [total(connection_type, percentage) for percentage in (0, 33, 66, 100)]
        assert totals == sorted(totals), connection_type


def test_cb_and_cbo_breakdown(make_spec):
    cb = count_vertical(build_3d_rrg(make_spec(layers=2, connection_type="CB")))
    cbo = count_vertical(build_3d_rrg(make_spec(layers=2, connection_type="CBO")))

    # 16 tiles x 2 layers x 16 inputs x (2 x fc_in) tracks, mirrored onto the one adjacent layer
    assert cb.breakdown["pin_in"] == 16 * 2 * 16 * 4
    assert cbo.breakdown["pin_in"] == 0
    assert cbo.breakdown["pin_out"] == cb.breakdown["pin_out"] > 0
    assert cb.breakdown["sb"] == cbo.breakdown["sb"] == 0


@pytest.mark.parametrize("connection_type", ["CB", "SB", "Hybrid"])
def test_base_graph_is_a_prefix_of_the_3d_graph(make_spec, connection_type):
    spec = make_spec(layers=2, connection_type=connection_type)
    base = build_base_rrg(spec)

    rrg = extend_to_3d(base, spec, plan_sites(spec))

    assert rrg.nodes[:len(base.nodes)] == base.nodes
    assert rrg.edges[:len(base.edges)] == base.edges
    assert all(node.kind == NodeKind.CHANZ for node in rrg.nodes[len(base.nodes):])


def test_none2d_leaves_the_graph_unchanged(make_spec):
    spec = make_spec(layers=2)
    base = build_base_rrg(spec)

    rrg = extend_to_3d(base, spec, plan_sites(spec))

    assert rrg.nodes == base.nodes and rrg.edges == base.edges
    assert count_vertical(rrg).total == 0


def test_custom_rules_restrict_pins_and_tracks(load_arch_file):
    spec = load_arch_file("custom_2layer_6x6.yaml")

    rrg = build_3d_rrg(spec)

    kinds = {kind: [edge for edge in rrg.edges if edge.kind == kind] for kind in EdgeKind}
    assert {rrg.nodes[edge.dst].track for edge in kinds[EdgeKind.pin_in_3d]} == set(range(8))
    assert {rrg.nodes[edge.src].track for edge in kinds[EdgeKind.pin_out_3d]} <= {16, 17}
    assert {rrg.nodes[edge.src].track for edge in kinds[EdgeKind.via]} == {0, 2, 4, 6, 8, 10}


def test_custom_rules_must_name_existing_pins(make_spec):
    spec = make_spec(layers=2, connection_type="Custom",
                     vertical={"custom": {"input_pins": [99], "output_pins": [0], "sb_tracks": [0]}})

    with pytest.raises(CustomRuleError, match="input pins"):
        build_3d_rrg(spec)
