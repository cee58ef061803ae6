from typing import Dict, List, Optional, Tuple, Union

# Import BaseModel and ConfigDict for pydantic v2+
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Import of Enums from the fabric models
from fabric.models import BlockKind, ConnectionType, LayerClass, PlanarSB, SBPlacement


# Defaults of the reference operating point: 137 ps vertical hop at ratio 0.739
DEFAULT_BASE_SWITCH_DELAY = 185.4e-12
DEFAULT_VERTICAL_DELAY_RATIO = 0.739
DEFAULT_WIRE_DELAY_PER_TILE = 10e-12
DEFAULT_LUT_DELAY = 150e-12


class SBPattern(BaseModel):
    """ Pydantic model for a 3D switch block connection pattern.
    Entries are per side in counter-clockwise order (left, bottom, right, top)
    and are interpreted modulo the channel width at use time.
    """

    model_config = ConfigDict(frozen=True)

    input: List[int] = Field(default_factory=lambda: [0, 0, 0, 0], min_length=4, max_length=4,
                             examples=[[0, 1, 2, 3]], description="Planar track offsets feeding vertical track k.")
    output: List[int] = Field(default_factory=lambda: [0, 0, 0, 0], min_length=4, max_length=4,
                              examples=[[1, 2, 3, 4]], description="Planar track offsets driven by vertical track k.")


class Segment(BaseModel):
    model_config = ConfigDict(frozen=True)

    length: int = Field(ge=1, examples=[4], description="Wire length in tiles.")
    tracks: int = Field(ge=1, examples=[260], description="Number of tracks of this length.")


class LayerSpec(BaseModel):
    """ Pydantic model for one layer of the stack: its class and the block kind of every column. """

    model_config = ConfigDict(frozen=True)

    layer_class: LayerClass = Field(LayerClass.Homogeneous, description="Heterogeneity class of the stack.")
    columns: List[BlockKind] = Field(description="Block kind per grid column.")


class CustomRules(BaseModel):
    """ Pin-class/ track subsets for the Custom connection type. """

    model_config = ConfigDict(frozen=True)

    input_pins: List[int] = Field(default_factory=list, description="CLB input pin indices reachable from adjacent layers.")
    output_pins: List[int] = Field(default_factory=list, description="CLB output indices driving adjacent layers.")
    sb_tracks: List[int] = Field(default_factory=list, description="Vertical tracks realized at 3D switch blocks.")


class VerticalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    connection_type: ConnectionType = Field(ConnectionType.None2D, description="Vertical connection type.")
    sb_percentage: int = Field(100, ge=0, le=100, description="Percent of switch block sites that are 3D.")
    sb_placement: SBPlacement = Field(SBPlacement.RepeatedInterval, description="Spatial distribution of 3D SBs.")
    custom_sites: Optional[List[Tuple[int, int]]] = Field(None, description="Explicit 3D SB coordinates (CustomList).")
    sb_pattern: SBPattern = Field(default_factory=SBPattern)
    custom: Optional[CustomRules] = Field(None, description="Rules for the Custom connection type.")


class ArchSpec(BaseModel):
    """ Pydantic model of the full declarative 3D FPGA architecture.
    Range checks live here; cross-field invariants are reported by arch_service.validate().
    """

    model_config = ConfigDict(frozen=True)

    grid_width: int = Field(ge=1, description="Tiles per row.")
    grid_height: int = Field(ge=1, description="Tiles per column.")
    layer_count: int = Field(ge=1)
    layers: List[LayerSpec]
    io_capacity: int = Field(2, ge=0, description="Pads per perimeter tile.")
    channel_width: int = Field(ge=1, description="Tracks per channel (W).")
    segments: List[Segment] = Field(min_length=1)
    fc_in: Optional[int] = Field(None, ge=1, description="Tracks an input pin connects to; default ceil(0.15 W).")
    fc_out: Optional[int] = Field(None, ge=1, description="Tracks an output pin drives; default ceil(0.10 W).")
    lut_size: int = Field(ge=1, le=8, description="LUT inputs (K).")
    cluster_size: int = Field(ge=1, description="LUTs per CLB (N).")
    planar_sb_pattern: PlanarSB = PlanarSB.Wilton
    vertical: VerticalConfig = Field(default_factory=VerticalConfig)
    vertical_delay_ratio: float = Field(DEFAULT_VERTICAL_DELAY_RATIO, gt=0)
    vertical_delay_seconds: Optional[float] = Field(None, gt=0, description="Absolute vertical delay; overrides the ratio.")
    base_switch_delay: float = Field(DEFAULT_BASE_SWITCH_DELAY, ge=0)
    wire_delay_per_tile: float = Field(DEFAULT_WIRE_DELAY_PER_TILE, ge=0)
    lut_delay: float = Field(DEFAULT_LUT_DELAY, ge=0)
    setup_time: float = Field(0.0, ge=0)

    @property
    def clb_inputs(self) -> int:
        return self.lut_size * self.cluster_size


class DesignSpaceBounds(BaseModel):
    types: List[ConnectionType] = Field(default_factory=list, description="Connection types to count.")
    index_min: int = Field(-3, description="Smallest pattern entry.")
    index_max: int = Field(3, description="Largest pattern entry.")
    percentages: List[int] = Field(default_factory=lambda: list(range(1, 101)),
                                   description="Allowed 3D SB percentages (integer percent).")

    @model_validator(mode='after')
    def check_percentages(self):
        """ Raises: ValueError: If a percentage lies outside 0..100 """

        if any(p < 0 or p > 100 for p in self.percentages):
            raise ValueError("percentages must lie in 0..100")
        return self


class ExperimentConfig(BaseModel):
    """ Pydantic model of a parameter sweep.
    An omitted axis keeps the base architecture's value.
    """

    name: str = Field("sweep", description="Name used for the output directory.")
    base_arch: str = Field(description="Path of the base architecture document.")
    connection_types: Optional[List[ConnectionType]] = None
    sb_percentages: Optional[List[int]] = None
    sb_placements: Optional[List[SBPlacement]] = None
    sb_patterns: Optional[List[Union[str, SBPattern]]] = Field(None, description="Catalog names or explicit patterns.")
    vertical_delay_ratios: Optional[List[float]] = None
    seeds: List[int] = Field(default_factory=lambda: [1], min_length=1)
    benchmarks: Optional[List[str]] = Field(None, description="Benchmark names; None selects the whole manifest.")
    manifest: str = "benchmarks/manifest.yaml"
    output_dir: Optional[str] = None
    jobs: int = Field(1, ge=1)
    baseline: Optional[str] = Field(None, description="config_id used by summarize.")
    inner_num: float = Field(10.0, gt=0)
    max_iters: int = Field(50, ge=1)
    record_timing: bool = True

    @model_validator(mode='after')
    def check_axes(self):
        if self.sb_percentages and any(p < 0 or p > 100 for p in self.sb_percentages):
            raise ValueError("sb_percentages must lie in 0..100")
        if self.vertical_delay_ratios and any(r <= 0 for r in self.vertical_delay_ratios):
            raise ValueError("vertical_delay_ratios must be > 0")
        return self


class BenchmarkEntry(BaseModel):
    """ One benchmark of the manifest. The blif path is relative to the manifest file. """

    name: str = Field(min_length=1)
    blif: str
    vectors: int = Field(32, ge=1, description="Random input vectors used for functional verification.")


class BenchmarkManifest(BaseModel):
    benchmarks: List[BenchmarkEntry] = Field(min_length=1)


class ReportRow(BaseModel):
    """ One (benchmark, config, seed) result. Failed flows keep their row with an error string. """

    benchmark: str
    config_id: str
    seed: int
    wl: float = 0.0
    cpd_ps: float = 0.0
    route_iters: int = 0
    route_ms: float = 0.0
    vert_total: int = 0
    vert_per_grid: float = 0.0
    crossings: float = 0.0
    status: str = "ok"
    error: str = ""


class SummaryRow(BaseModel):
    config_id: str
    rows: int
    wl_geomean: float
    cpd_geomean: float
    wl_ratio: float
    cpd_ratio: float
    wl_reduction: float
    cpd_reduction: float


class DistributionRow(BaseModel):
    config_id: str
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


# Request and response bodies of the HTTP API

class ArchDocument(BaseModel):
    text: str = Field(min_length=1, description="YAML architecture document.")


class ArchValidationResponse(BaseModel):
    valid: bool
    violations: List[str]
    spec_hash: Optional[str] = None


class CensusResponse(BaseModel):
    nodes: Dict[str, int]
    edges: int
    vertical_total: int
    vertical_per_grid: float
    vertical_breakdown: Dict[str, int]


class SpaceCountResponse(BaseModel):
    count: int
    digits: int


class SummarizeRequest(BaseModel):
    rows: List[ReportRow]
    baseline: str


class DistributionRequest(BaseModel):
    rows: List[ReportRow]
