import csv
import hashlib
import itertools
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import yaml
from pydantic import ValidationError

from api.schemas import ArchSpec, DesignSpaceBounds, SBPattern
from fabric.models import (
    BlockKind, ConnectionType, LayerClass, PATTERN_BEARING_TYPES, PATTERN_FREE_TYPES, SBPlacement,
)
from utils.errors import ArchParseError, ArchValidationError

_logger = logging.getLogger(__name__)


# Exact key set of an architecture document, per section
ALLOWED_KEYS: Dict[str, set] = {
    "": {"grid", "layers", "routing", "logic", "vertical", "timing"},
    "grid": {"width", "height", "io_capacity"},
    "layers": {"count", "class", "columns"},
    "routing": {"channel_width", "segments", "planar_sb", "fc_in", "fc_out"},
    "routing.segments": {"length", "tracks"},
    "logic": {"lut_size", "cluster_size"},
    "vertical": {"type", "sb_percentage", "sb_placement", "custom_sites_file", "custom_sites", "pattern", "custom"},
    "vertical.pattern": {"input", "output"},
    "vertical.custom": {"input_pins", "output_pins", "sb_tracks"},
    "timing": {"vertical_delay_ratio", "vertical_delay_seconds", "base_switch_delay",
               "wire_delay_per_tile", "lut_delay", "setup_time"},
}


def _check_keys(section: str, value: Any) -> None:
    """ Recursively rejects keys that are not part of the document schema. """

    if section not in ALLOWED_KEYS or value is None:
        return
    if section == "routing.segments":
        items = value if isinstance(value, list) else []
        for index, item in enumerate(items):
            if not isinstance(item, dict):
                raise ArchParseError(f"routing.segments[{index}] must be a mapping")
            for key in item:
                if key not in ALLOWED_KEYS[section]:
                    raise ArchParseError(f"unknown key 'routing.segments[{index}].{key}'")
        return
    if not isinstance(value, dict):
        raise ArchParseError(f"section '{section or 'document'}' must be a mapping")
    for key, child in value.items():
        if key not in ALLOWED_KEYS[section]:
            raise ArchParseError(f"unknown key '{section + '.' if section else ''}{key}'")
        _check_keys(f"{section}.{key}" if section else str(key), child)


def read_sites_csv(path: Union[str, Path]) -> List[Tuple[int, int]]:
    """
    Reads a 3D SB site list: header "x,y", one site per row.

    Raises:
        ArchParseError: If the file is missing or a row is malformed.
    """

    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as e:
        raise ArchParseError(f"cannot read custom_sites_file '{path}': {e.strerror}")

    if not rows or [cell.strip() for cell in rows[0]] != ["x", "y"]:
        raise ArchParseError(f"{path}: site list must start with the header 'x,y'", line=1)

    sites = []
    for line_number, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        try:
            x, y = (int(cell) for cell in row)
        except ValueError:
            raise ArchParseError(f"{path}: malformed site row {row!r}", line=line_number)
        sites.append((x, y))
    return sites


def _document_to_fields(doc: Dict[str, Any], base_dir: Optional[Path]) -> Dict[str, Any]:
    """ Maps the nested document onto the flat ArchSpec fields. """

    grid = doc.get("grid") or {}
    layers = doc.get("layers") or {}
    routing = doc.get("routing") or {}
    logic = doc.get("logic") or {}
    vertical = doc.get("vertical") or {}
    timing = doc.get("timing") or {}

    width = grid.get("width")
    count = layers.get("count", 1)
    layer_class = layers.get("class", LayerClass.Homogeneous.value)
    columns = layers.get("columns")
    if columns is None:
        per_layer = [[BlockKind.CLB.value] * width] * count if isinstance(width, int) and isinstance(count, int) else []
    elif columns and all(isinstance(item, list) for item in columns):
        per_layer = columns
    else:
        per_layer = [columns] * count if isinstance(count, int) else []

    fields: Dict[str, Any] = {
        "grid_width": width,
        "grid_height": grid.get("height"),
        "layer_count": count,
        "layers": [{"layer_class": layer_class, "columns": cols} for cols in per_layer],
        "channel_width": routing.get("channel_width"),
        "lut_size": logic.get("lut_size"),
        "cluster_size": logic.get("cluster_size"),
    }
    if "io_capacity" in grid:
        fields["io_capacity"] = grid["io_capacity"]
    if "segments" in routing:
        fields["segments"] = routing["segments"]
    elif isinstance(routing.get("channel_width"), int):
        fields["segments"] = [{"length": 1, "tracks": routing["channel_width"]}]
    for key in ("fc_in", "fc_out"):
        if key in routing:
            fields[key] = routing[key]
    if "planar_sb" in routing:
        fields["planar_sb_pattern"] = routing["planar_sb"]

    vertical_fields: Dict[str, Any] = {}
    if "type" in vertical:
        vertical_fields["connection_type"] = vertical["type"]
    for key in ("sb_percentage", "sb_placement", "custom"):
        if key in vertical:
            vertical_fields[key] = vertical[key]
    if "pattern" in vertical:
        vertical_fields["sb_pattern"] = vertical["pattern"]
    if "custom_sites" in vertical and "custom_sites_file" in vertical:
        raise ArchParseError("vertical: give either custom_sites or custom_sites_file, not both")
    if "custom_sites" in vertical:
        vertical_fields["custom_sites"] = vertical["custom_sites"]
    if "custom_sites_file" in vertical:
        path = Path(vertical["custom_sites_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        vertical_fields["custom_sites"] = read_sites_csv(path)
    fields["vertical"] = vertical_fields

    if "vertical_delay_ratio" in timing and "vertical_delay_seconds" in timing:
        raise ArchParseError("timing: specify either vertical_delay_ratio or vertical_delay_seconds")
    for key in ("vertical_delay_ratio", "vertical_delay_seconds", "base_switch_delay",
                "wire_delay_per_tile", "lut_delay", "setup_time"):
        if key in timing:
            fields[key] = timing[key]
    return fields


def parse_arch(text: str, base_dir: Optional[Union[str, Path]] = None) -> ArchSpec:
    """
    Parses an architecture document into an ArchSpec with all defaults filled in.

    Args:
        text: The YAML document.
        base_dir: Directory that relative custom_sites_file paths are resolved against.

    Returns:
        ArchSpec: The validated architecture.

    Raises:
        ArchParseError: On syntax errors (with line/ column), unknown keys or out-of-range values.
        ArchValidationError: If the document violates a cross-field invariant.
    """

    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        if mark is not None:
            problem = getattr(e, "problem", None) or "invalid YAML"
            raise ArchParseError(
                f"syntax error at line {mark.line + 1}, column {mark.column + 1}: {problem}",
                line=mark.line + 1, column=mark.column + 1,
            )
        raise ArchParseError(f"syntax error: {e}")

    if not isinstance(doc, dict):
        raise ArchParseError("architecture document must be a mapping")
    _check_keys("", doc)

    fields = _document_to_fields(doc, Path(base_dir) if base_dir is not None else None)
    try:
        spec = ArchSpec(**fields)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        raise ArchParseError(f"out-of-range value: {details}")

    violations = validate(spec)
    if violations:
        raise ArchValidationError(violations)
    return spec


def load_arch(path: Union[str, Path]) -> ArchSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArchParseError(f"cannot read architecture '{path}': {e.strerror}")
    return parse_arch(text, base_dir=path.parent)


def arch_to_document(spec: ArchSpec) -> Dict[str, Any]:
    """ Canonical nested document of a spec; custom sites are always written inline. """

    per_layer = [[kind.value for kind in layer.columns] for layer in spec.layers]
    columns: Any = per_layer[0] if per_layer and all(cols == per_layer[0] for cols in per_layer) else per_layer
    layer_class = spec.layers[0].layer_class.value if spec.layers else LayerClass.Homogeneous.value

    vertical: Dict[str, Any] = {
        "type": spec.vertical.connection_type.value,
        "sb_percentage": spec.vertical.sb_percentage,
        "sb_placement": spec.vertical.sb_placement.value,
        "pattern": {"input": list(spec.vertical.sb_pattern.input), "output": list(spec.vertical.sb_pattern.output)},
    }
    if spec.vertical.custom_sites is not None:
        vertical["custom_sites"] = [[x, y] for x, y in spec.vertical.custom_sites]
    if spec.vertical.custom is not None:
        vertical["custom"] = spec.vertical.custom.model_dump()

    routing: Dict[str, Any] = {
        "channel_width": spec.channel_width,
        "segments": [{"length": seg.length, "tracks": seg.tracks} for seg in spec.segments],
        "planar_sb": spec.planar_sb_pattern.value,
    }
    if spec.fc_in is not None:
        routing["fc_in"] = spec.fc_in
    if spec.fc_out is not None:
        routing["fc_out"] = spec.fc_out

    timing: Dict[str, Any] = {}
    if spec.vertical_delay_seconds is not None:
        timing["vertical_delay_seconds"] = spec.vertical_delay_seconds
    else:
        timing["vertical_delay_ratio"] = spec.vertical_delay_ratio
    timing.update(
        base_switch_delay=spec.base_switch_delay,
        wire_delay_per_tile=spec.wire_delay_per_tile,
        lut_delay=spec.lut_delay,
        setup_time=spec.setup_time,
    )

    return {
        "grid": {"width": spec.grid_width, "height": spec.grid_height, "io_capacity": spec.io_capacity},
        "layers": {"count": spec.layer_count, "class": layer_class, "columns": columns},
        "routing": routing,
        "logic": {"lut_size": spec.lut_size, "cluster_size": spec.cluster_size},
        "vertical": vertical,
        "timing": timing,
    }


def serialize_arch(spec: ArchSpec) -> str:
    return yaml.safe_dump(arch_to_document(spec), sort_keys=False, default_flow_style=None)


def spec_hash(spec: ArchSpec) -> str:
    return hashlib.sha256(serialize_arch(spec).encode("utf-8")).hexdigest()


def validate(spec: ArchSpec) -> List[str]:
    """
    Checks every cross-field invariant of an ArchSpec.

    Returns:
        List[str]: One message per violation, empty if the spec is valid.
    """

    violations: List[str] = []

    tracks = sum(segment.tracks for segment in spec.segments)
    if tracks != spec.channel_width:
        violations.append(
            f"channel width mismatch: segments provide {tracks} tracks but channel_width is {spec.channel_width}"
        )

    if spec.vertical.connection_type != ConnectionType.None2D and spec.layer_count < 2:
        violations.append("vertical connectivity requires ≥2 layers")

    if len(spec.layers) != spec.layer_count:
        violations.append(f"layer list length mismatch: {len(spec.layers)} layers for layer_count {spec.layer_count}")

    for index, layer in enumerate(spec.layers):
        if len(layer.columns) != spec.grid_width:
            violations.append(
                f"layer {index}: column count mismatch ({len(layer.columns)} columns for grid width {spec.grid_width})"
            )

    classes = {layer.layer_class for layer in spec.layers}
    if len(classes) > 1:
        violations.append("mixed layer classes: " + ", ".join(sorted(c.value for c in classes)))
    elif classes == {LayerClass.Homogeneous} and any(layer.columns != spec.layers[0].columns for layer in spec.layers):
        violations.append("homogeneous layers differ in their block columns")
    elif classes == {LayerClass.NonLogicHetero} and not any(BlockKind.CLB in layer.columns for layer in spec.layers):
        violations.append("non-logic heterogeneous stack has no logic layer")

    if spec.vertical_delay_ratio <= 0:
        violations.append("vertical_delay_ratio must be > 0")
    if not 0 <= spec.vertical.sb_percentage <= 100:
        violations.append("sb_percentage must lie in 0..100")

    placement_is_custom = spec.vertical.sb_placement == SBPlacement.CustomList
    if placement_is_custom and not spec.vertical.custom_sites:
        violations.append("custom_sites required for CustomList placement")
    if not placement_is_custom and spec.vertical.custom_sites is not None:
        violations.append("custom_sites given but sb_placement is not CustomList")

    if spec.vertical.connection_type == ConnectionType.Custom and spec.vertical.custom is None:
        violations.append("Custom connection type requires custom rules")

    for key in ("fc_in", "fc_out"):
        value = getattr(spec, key)
        if value is not None and value > spec.channel_width:
            violations.append(f"{key} {value} exceeds channel_width {spec.channel_width}")

    return violations


def enumerate_design_space(bounds: DesignSpaceBounds) -> int:
    """
    Counts unique vertical configurations.

    Pattern-free types contribute 1 each; pattern-bearing types contribute
    percentage levels x (index range size)^8 (four input plus four output entries).

    Raises:
        ValueError: If the bounds contain the open-ended Custom type.
    """

    size = max(0, bounds.index_max - bounds.index_min + 1)
    levels = len(set(bounds.percentages))
    total = 0
    for connection_type in dict.fromkeys(bounds.types):
        if connection_type == ConnectionType.Custom:
            raise ValueError("Custom connection rules are open-ended and cannot be enumerated")
        if connection_type in PATTERN_FREE_TYPES:
            total += 1
        elif connection_type in PATTERN_BEARING_TYPES:
            total += levels * size ** 8
    return total


def iter_design_points(bounds: DesignSpaceBounds) -> Iterator[Tuple]:
    """ Materializes every configuration counted by enumerate_design_space. Only usable for tiny bounds. """

    indices = range(bounds.index_min, bounds.index_max + 1)
    for connection_type in dict.fromkeys(bounds.types):
        if connection_type in PATTERN_FREE_TYPES:
            yield connection_type, None, None, None
            continue
        for percentage in sorted(set(bounds.percentages)):
            for entries in itertools.product(indices, repeat=8):
                yield connection_type, percentage, tuple(entries[:4]), tuple(entries[4:])


class ArchService:
    """ Thin facade used by the HTTP layer. """

    def parse(self, text: str) -> ArchSpec:
        return parse_arch(text)

    def check(self, text: str) -> Tuple[Optional[ArchSpec], List[str]]:
        """ Parses a document and returns (spec, violations) instead of raising on invariant violations. """

        try:
            spec = parse_arch(text)
        except ArchValidationError as e:
            return None, e.violations
        return spec, []

    def count_design_space(self, bounds: DesignSpaceBounds) -> int:
        return enumerate_design_space(bounds)

    def named_patterns(self) -> Dict[str, SBPattern]:
        from services.vertical_service import NAMED_PATTERNS

        return dict(NAMED_PATTERNS)


# Dependency for FastAPI-Router
def get_arch_service() -> ArchService:
    """
    Dependency that returns an instance of ArchService
    """

    return ArchService()
