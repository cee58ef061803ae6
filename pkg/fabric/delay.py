from dataclasses import dataclass, replace
from typing import Optional

from api.schemas import (
    ArchSpec, DEFAULT_BASE_SWITCH_DELAY, DEFAULT_LUT_DELAY, DEFAULT_VERTICAL_DELAY_RATIO, DEFAULT_WIRE_DELAY_PER_TILE,
)
from fabric.models import EdgeKind, RRNode


@dataclass(frozen=True)
class DelayModel:
    """ All delays in seconds.
    The vertical hop costs vertical_delay_ratio x base_switch_delay unless
    an absolute vertical_delay_seconds is given.
    """

    base_switch_delay: float = DEFAULT_BASE_SWITCH_DELAY
    wire_delay_per_tile: float = DEFAULT_WIRE_DELAY_PER_TILE
    vertical_delay_ratio: float = DEFAULT_VERTICAL_DELAY_RATIO
    vertical_delay_seconds: Optional[float] = None
    lut_delay: float = DEFAULT_LUT_DELAY
    setup_time: float = 0.0

    def __post_init__(self):
        values = (self.base_switch_delay, self.wire_delay_per_tile, self.vertical_delay_ratio,
                  self.lut_delay, self.setup_time, self.vertical_delay_seconds or 0.0)
        if any(value < 0 for value in values):
            raise ValueError("delays must be >= 0")

    @classmethod
    def from_spec(cls, spec: ArchSpec) -> "DelayModel":
        return cls(
            base_switch_delay=spec.base_switch_delay,
            wire_delay_per_tile=spec.wire_delay_per_tile,
            vertical_delay_ratio=spec.vertical_delay_ratio,
            vertical_delay_seconds=spec.vertical_delay_seconds,
            lut_delay=spec.lut_delay,
            setup_time=spec.setup_time,
        )

    def with_ratio(self, ratio: float) -> "DelayModel":
        return replace(self, vertical_delay_ratio=ratio, vertical_delay_seconds=None)

    @property
    def vertical_delay(self) -> float:
        if self.vertical_delay_seconds is not None:
            return self.vertical_delay_seconds
        return self.vertical_delay_ratio * self.base_switch_delay

    def edge_delay(self, kind: EdgeKind, dst: RRNode) -> float:
        """ Delay of an RRG edge, charged to the node it drives. """

        wire = dst.span * self.wire_delay_per_tile
        if kind == EdgeKind.intra:
            return 0.0
        if kind in (EdgeKind.sb, EdgeKind.opin, EdgeKind.sb_out):
            return self.base_switch_delay + wire
        if kind in (EdgeKind.cb, EdgeKind.sb_in):
            return self.base_switch_delay
        if kind == EdgeKind.via:
            return self.vertical_delay
        if kind == EdgeKind.pin_in_3d:
            return self.vertical_delay + self.base_switch_delay
        # pin_out_3d
        return self.vertical_delay + self.base_switch_delay + wire
