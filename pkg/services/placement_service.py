import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from fabric.models import BlockKind, RoutingResourceGraph
from services.packing_service import PackedNetlist

_logger = logging.getLogger(__name__)

# (layer, x, y, sub-slot); sub-slot is the pad index for IO blocks and 0 for clusters
Slot = Tuple[int, int, int, int]


@dataclass(frozen=True)
class PlaceParams:
    inner_num: float = 10.0
    alpha: float = 0.95
    interlayer_move_prob: float = 0.10
    layer_weight: float = 1.0
    initial_moves: int = 100
    exit_factor: float = 0.005
    max_temperatures: int = 300


@dataclass
class PlacementStats:
    proposed: int = 0
    interlayer_proposed: int = 0
    accepted: int = 0
    temperatures: int = 0
    initial_temperature: float = 0.0


@dataclass
class Placement:
    """ Block -> slot map with the final annealing cost. """

    packed: PackedNetlist
    locations: Dict[str, Slot]
    cost: float
    stats: PlacementStats = field(default_factory=PlacementStats)

    def layer_of(self, block: str) -> int:
        return self.locations[block][0]


@dataclass(frozen=True)
class Move:
    block: str
    source: Slot
    target: Slot
    swapped: Optional[str]
    cross_layer: bool


class PlacementEngine:
    """
    Simulated annealing state: slot occupancy, per-net bounding boxes and the seeded RNG.
    Cost = sum over nets of HPWL(x, y) + layer_weight x layer span.
    """

    def __init__(self, packed: PackedNetlist, rrg: RoutingResourceGraph, seed: int = 0,
                 params: Optional[PlaceParams] = None):
        self.packed = packed
        self.rrg = rrg
        self.params = params or PlaceParams()
        self.rng = random.Random(seed)
        self.stats = PlacementStats()

        # Compatible slots per block class and layer
        self.slots: Dict[str, List[List[Slot]]] = {"clb": [[] for _ in range(rrg.layers)],
                                                    "io": [[] for _ in range(rrg.layers)]}
        for (layer, x, y), tile in sorted(rrg.tiles.items()):
            if tile.block == BlockKind.CLB:
                self.slots["clb"][layer].append((layer, x, y, 0))
            for pad in range(tile.pads):
                self.slots["io"][layer].append((layer, x, y, pad))

        self.blocks = packed.blocks
        self.block_class = {block: ("io" if ":" in block else "clb") for block in self.blocks}
        self.block_nets = packed.nets_of_block()
        self.net_blocks = {name: [net.driver, *net.sinks] for name, net in packed.nets.items()}
        self.locations: Dict[str, Slot] = {}
        self.occupant: Dict[Tuple[str, Slot], str] = {}
        self.net_cost: Dict[str, float] = {}
        self.cost = 0.0

    # Initial placement

    def initial_placement(self) -> None:
        """ Layer with the most already-placed connected blocks, ties broken at random; then a random free slot. """

        for block in self.blocks:
            kind = self.block_class[block]
            free_layers = [layer for layer in range(self.rrg.layers)
                           if any((kind, slot) not in self.occupant for slot in self.slots[kind][layer])]
            votes = {layer: 0 for layer in free_layers}
            for net in self.block_nets[block]:
                for other in self.net_blocks[net]:
                    if other != block and other in self.locations and self.locations[other][0] in votes:
                        votes[self.locations[other][0]] += 1
            best = max(votes.values())
            layer = self.rng.choice([layer for layer in free_layers if votes[layer] == best])
            free = [slot for slot in self.slots[kind][layer] if (kind, slot) not in self.occupant]
            slot = self.rng.choice(free)
            self.locations[block] = slot
            self.occupant[(kind, slot)] = block
        self.net_cost = {net: self._net_cost(net) for net in self.net_blocks}
        self.cost = sum(self.net_cost.values())

    # Cost

    def _net_cost(self, net: str, overrides: Optional[Dict[str, Slot]] = None) -> float:
        slots = [(overrides or {}).get(block) or self.locations[block] for block in self.net_blocks[net]]
        xs = [slot[1] for slot in slots]
        ys = [slot[2] for slot in slots]
        layers = [slot[0] for slot in slots]
        return (max(xs) - min(xs)) + (max(ys) - min(ys)) + self.params.layer_weight * (max(layers) - min(layers))

    def total_cost(self) -> float:
        return sum(self._net_cost(net) for net in self.net_blocks)

    # Moves

    def propose_move(self) -> Move:
        """ Random relocation of one block: across layers with interlayer_move_prob, otherwise within its layer. """

        block = self.rng.choice(self.blocks)
        kind = self.block_class[block]
        source = self.locations[block]
        wants_layer_change = self.rrg.layers > 1 and self.rng.random() < self.params.interlayer_move_prob
        self.stats.proposed += 1
        candidates: List[Slot] = []
        cross_layer = False
        if wants_layer_change:
            layers = [layer for layer in range(self.rrg.layers) if layer != source[0] and self.slots[kind][layer]]
            # Only counted when another layer can take the block
            if layers:
                cross_layer = True
                self.stats.interlayer_proposed += 1
                candidates = self.slots[kind][self.rng.choice(layers)]
        if not candidates:
            candidates = [slot for slot in self.slots[kind][source[0]] if slot != source] or [source]
        target = self.rng.choice(candidates)
        swapped = self.occupant.get((kind, target))
        return Move(block, source, target, swapped if swapped != block else None, cross_layer)

    def move_delta(self, move: Move) -> Tuple[float, Dict[str, float]]:
        overrides = {move.block: move.target}
        if move.swapped is not None:
            overrides[move.swapped] = move.source
        affected = dict.fromkeys(self.block_nets[move.block]
                                 + (self.block_nets[move.swapped] if move.swapped else []))
        new_costs = {net: self._net_cost(net, overrides) for net in affected}
        delta = sum(new_costs[net] - self.net_cost[net] for net in affected)
        return delta, new_costs

    def apply_move(self, move: Move, new_costs: Dict[str, float], delta: float) -> None:
        kind = self.block_class[move.block]
        del self.occupant[(kind, move.source)]
        if move.swapped is not None:
            self.locations[move.swapped] = move.source
            self.occupant[(kind, move.source)] = move.swapped
        self.locations[move.block] = move.target
        self.occupant[(kind, move.target)] = move.block
        self.net_cost.update(new_costs)
        self.cost += delta
        self.stats.accepted += 1

    def try_move(self, temperature: float) -> None:
        move = self.propose_move()
        if move.target == move.source:
            return
        delta, new_costs = self.move_delta(move)
        if delta <= 0 or (temperature > 0 and self.rng.random() < math.exp(-delta / temperature)):
            self.apply_move(move, new_costs, delta)

    # Schedule

    def initial_temperature(self) -> float:
        deltas = []
        for _ in range(self.params.initial_moves):
            move = self.propose_move()
            deltas.append(self.move_delta(move)[0] if move.target != move.source else 0.0)
        return float(np.std(deltas))

    def anneal(self) -> None:
        n = len(self.blocks)
        nets = max(1, len(self.net_blocks))
        moves_per_temperature = max(1, int(self.params.inner_num * n ** (4 / 3)))
        temperature = self.initial_temperature()
        self.stats.initial_temperature = temperature

        while self.stats.temperatures < self.params.max_temperatures:
            if self.cost <= 0 or temperature < self.params.exit_factor * self.cost / nets:
                break
            for _ in range(moves_per_temperature):
                self.try_move(temperature)
            self.stats.temperatures += 1
            _logger.debug("T=%.4f cost=%.2f", temperature, self.cost)
            temperature *= self.params.alpha

        # Greedy tail at zero temperature
        for _ in range(moves_per_temperature):
            self.try_move(0.0)
        self.cost = self.total_cost()


def place(packed: PackedNetlist, rrg: RoutingResourceGraph, seed: int = 0,
          params: Optional[PlaceParams] = None) -> Placement:
    """
    Places clusters on CLB tiles and IO blocks on pads by simulated annealing.

    Args:
        packed: Packed netlist that fits the grid.
        rrg: The (3D) routing resource graph, used for its tile map.
        seed: Seed of every random decision.
        params: Annealing parameters.

    Returns:
        Placement: Deterministic for a fixed seed.
    """

    if not packed.blocks:
        return Placement(packed, {}, 0.0)
    engine = PlacementEngine(packed, rrg, seed, params)
    engine.initial_placement()
    engine.anneal()
    _logger.info("Placed %d blocks: cost %.1f after %d temperatures (%d/%d moves accepted, %d cross-layer proposals)",
                 len(engine.blocks), engine.cost, engine.stats.temperatures, engine.stats.accepted,
                 engine.stats.proposed, engine.stats.interlayer_proposed)
    return Placement(packed, dict(engine.locations), engine.cost, engine.stats)
