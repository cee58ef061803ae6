import pytest
import yaml

from api.schemas import DesignSpaceBounds
from fabric.models import BlockKind, ConnectionType, LayerClass, SBPlacement
from services.arch_service import (
    ArchService, enumerate_design_space, iter_design_points, load_arch, parse_arch, serialize_arch, spec_hash,
    validate,
)
from tests.conftest import ARCH_DIR, arch_document
from utils.errors import ArchParseError, ArchValidationError


def test_design_space_count_matches_published_total():
    """
    Five vertical types, pattern entries -3..3 and percentages 1..100:
    two pattern-free types plus three pattern-bearing types x 100 levels x 7^8 patterns.
    """

    bounds = DesignSpaceBounds(types=[ConnectionType.CB, ConnectionType.CBO, ConnectionType.SB,
                                      ConnectionType.Hybrid, ConnectionType.HybridO])

    assert enumerate_design_space(bounds) == 1_729_440_302


def test_design_space_count_equals_materialized_points():
    bounds = DesignSpaceBounds(types=[ConnectionType.CB, ConnectionType.SB], index_min=-1, index_max=0,
                               percentages=[10, 20])

    points = list(iter_design_points(bounds))

    assert len(points) == enumerate_design_space(bounds) == 1 + 2 * 2 ** 8
    assert len(set(points)) == len(points)


def test_design_space_ignores_duplicate_types_and_percentages():
    single = DesignSpaceBounds(types=[ConnectionType.SB], index_min=0, index_max=0, percentages=[50])
    doubled = DesignSpaceBounds(types=[ConnectionType.SB, ConnectionType.SB], index_min=0, index_max=0,
                                percentages=[50, 50])

    assert enumerate_design_space(single) == enumerate_design_space(doubled) == 1


def test_design_space_rejects_custom_type():
    bounds = DesignSpaceBounds(types=[ConnectionType.Custom])

    with pytest.raises(ValueError, match="Custom"):
        enumerate_design_space(bounds)


def test_design_space_bounds_reject_percentage_above_100():
    with pytest.raises(ValueError):
        DesignSpaceBounds(types=[ConnectionType.SB], percentages=[101])


def test_parse_fills_defaults(make_spec):
    spec = make_spec()

    assert spec.grid_width == 4 and spec.grid_height == 4
    assert spec.io_capacity == 2
    assert spec.vertical.connection_type == ConnectionType.None2D
    assert spec.vertical.sb_placement == SBPlacement.RepeatedInterval
    assert spec.layers[0].layer_class == LayerClass.Homogeneous
    assert spec.layers[0].columns == [BlockKind.CLB] * 4
    assert spec.clb_inputs == 16
    assert spec.fc_in is None and spec.fc_out is None


def test_parse_rejects_unknown_key():
    document = arch_document()
    document["grid"]["depth"] = 3

    with pytest.raises(ArchParseError, match="unknown key 'grid.depth'"):
        parse_arch(yaml.safe_dump(document))


def test_parse_reports_syntax_error_position():
    text = "grid: {width: 4, height: 4}\nlayers: [count: 2\n"

    with pytest.raises(ArchParseError) as excinfo:
        parse_arch(text)

    assert excinfo.value.line is not None
    assert "syntax error" in str(excinfo.value)


def test_parse_rejects_out_of_range_percentage(make_arch_text):
    with pytest.raises(ArchParseError, match="out-of-range"):
        parse_arch(make_arch_text(layers=2, connection_type="SB", sb_percentage=150))


def test_channel_width_must_match_segments():
    document = arch_document()
    document["routing"]["segments"] = [{"length": 1, "tracks": 6}]

    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(yaml.safe_dump(document))

    assert any("channel width mismatch" in violation for violation in excinfo.value.violations)


def test_vertical_type_needs_two_layers(make_arch_text):
    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(make_arch_text(layers=1, connection_type="CB"))

    assert "vertical connectivity requires ≥2 layers" in excinfo.value.violations


def test_custom_list_requires_sites(make_arch_text):
    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(make_arch_text(layers=2, connection_type="SB", sb_placement="CustomList"))

    assert any("custom_sites required" in violation for violation in excinfo.value.violations)


def test_custom_type_requires_rules(make_arch_text):
    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(make_arch_text(layers=2, connection_type="Custom"))

    assert any("custom rules" in violation for violation in excinfo.value.violations)


def test_homogeneous_layers_must_match(make_arch_text):
    text = make_arch_text(layers=2, connection_type="SB",
                          columns=[["CLB", "CLB", "CLB", "CLB"], ["CLB", "DSP", "CLB", "CLB"]])

    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(text)

    assert any("homogeneous layers differ" in violation for violation in excinfo.value.violations)


def test_nonlogic_stack_needs_a_logic_layer(make_arch_text):
    text = make_arch_text(layers=2, connection_type="SB", layer_class="NonLogicHetero",
                          columns=[["RoutingOnly"] * 4, ["RoutingOnly"] * 4])

    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(text)

    assert any("no logic layer" in violation for violation in excinfo.value.violations)


def test_fc_cannot_exceed_channel_width():
    document = arch_document()
    document["routing"]["fc_in"] = 9

    with pytest.raises(ArchValidationError) as excinfo:
        parse_arch(yaml.safe_dump(document))

    assert any("fc_in 9 exceeds channel_width 8" in violation for violation in excinfo.value.violations)


def test_timing_accepts_only_one_vertical_delay(make_arch_text):
    text = make_arch_text(timing={"vertical_delay_ratio": 1.0, "vertical_delay_seconds": 1e-10})

    with pytest.raises(ArchParseError, match="either"):
        parse_arch(text)


def test_validate_collects_every_violation(make_spec):
    spec = make_spec()
    broken = spec.model_copy(update={"channel_width": 10, "layer_count": 3})

    violations = validate(broken)

    assert len(violations) == 2


@pytest.mark.parametrize("path", sorted(ARCH_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_bundled_architectures_load_and_round_trip(path):
    spec = load_arch(path)

    again = parse_arch(serialize_arch(spec))

    assert again == spec
    assert spec_hash(again) == spec_hash(spec)


def test_custom_sites_file_is_read_relative_to_document():
    spec = load_arch(ARCH_DIR / "sb_perimeter_custom_6x6.yaml")

    assert spec.vertical.sb_placement == SBPlacement.CustomList
    assert len(spec.vertical.custom_sites) == 16


def test_spec_hash_changes_with_any_field(make_spec):
    base = make_spec(layers=2, connection_type="SB")
    other = make_spec(layers=2, connection_type="SB", sb_percentage=50)

    assert spec_hash(base) != spec_hash(other)
    assert len(spec_hash(base)) == 64


def test_arch_service_check_returns_violations_instead_of_raising(make_arch_text):
    spec, violations = ArchService().check(make_arch_text(layers=1, connection_type="SB"))

    assert spec is None
    assert violations == ["vertical connectivity requires ≥2 layers"]
