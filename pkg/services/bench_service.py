import logging
import random
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
import yaml
from pydantic import ValidationError

from api.schemas import BenchmarkEntry, BenchmarkManifest
from utils.errors import BlifError, CombinationalLoopError, VectorWidthError

_logger = logging.getLogger(__name__)

SUPPORTED_DIRECTIVES = (".model", ".inputs", ".outputs", ".names", ".latch", ".end")


@dataclass(frozen=True)
class LutCell:
    """ Single-output LUT. table[i] is the output for the input assignment i, inputs[0] being the MSB. """

    output: str
    inputs: Tuple[str, ...]
    table: Tuple[int, ...]

    def evaluate(self, values: Sequence[int]) -> int:
        index = 0
        for value in values:
            index = (index << 1) | value
        return self.table[index]


@dataclass(frozen=True)
class Latch:
    d: str
    q: str
    init: int = 0


@dataclass(frozen=True)
class Net:
    driver: str
    sinks: Tuple[str, ...]


@dataclass
class LogicNetlist:
    name: str
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    cells: List[LutCell] = field(default_factory=list)
    latches: List[Latch] = field(default_factory=list)

    @cached_property
    def drivers(self) -> Dict[str, str]:
        """ signal -> "pi" | "lut" | "latch" """

        result = {signal: "pi" for signal in self.inputs}
        result.update({cell.output: "lut" for cell in self.cells})
        result.update({latch.q: "latch" for latch in self.latches})
        return result

    @cached_property
    def cell_of(self) -> Dict[str, LutCell]:
        return {cell.output: cell for cell in self.cells}

    @cached_property
    def evaluation_order(self) -> List[LutCell]:
        """ LUT cells in topological order of the combinational core. """

        graph = combinational_graph(self)
        return [self.cell_of[signal] for signal in nx.lexicographical_topological_sort(graph)
                if signal in self.cell_of]

    def nets(self) -> Dict[str, Net]:
        """ signal -> driver and sink list. Sinks are cell outputs, latch Qs or "po:<name>". """

        sinks: Dict[str, List[str]] = {signal: [] for signal in self.drivers}
        for cell in self.cells:
            for signal in dict.fromkeys(cell.inputs):
                sinks[signal].append(cell.output)
        for latch in self.latches:
            sinks[latch.d].append(latch.q)
        for output in self.outputs:
            sinks[output].append(f"po:{output}")
        return {signal: Net(self.drivers[signal], tuple(targets)) for signal, targets in sinks.items()}


def combinational_graph(netlist: LogicNetlist) -> nx.DiGraph:
    """ Signal graph with an edge per LUT input. Latches cut the graph. """

    graph = nx.DiGraph()
    graph.add_nodes_from(netlist.drivers)
    for cell in netlist.cells:
        for signal in cell.inputs:
            graph.add_edge(signal, cell.output)
    return graph


def _logical_lines(text: str) -> Iterator[Tuple[int, List[str]]]:
    """ Yields (first line number, tokens) with comments stripped and continuations joined. """

    pending: List[str] = []
    start = 0
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not pending:
            start = number
        continued = line.endswith("\\")
        if continued:
            line = line[:-1]
        pending.extend(line.split())
        if continued:
            continue
        if pending:
            yield start, pending
        pending = []
    if pending:
        yield start, pending


def _expand_cover(inputs: Sequence[str], cubes: List[Tuple[int, str, str]], output: str) -> Tuple[int, ...]:
    """ Expands a single-output cover into a full truth table. """

    size = 1 << len(inputs)
    if not cubes:
        return tuple([0] * size)

    phases = {phase for _, _, phase in cubes}
    if len(phases) != 1 or not phases <= {"0", "1"}:
        raise BlifError(f"cover of '{output}' mixes or misuses output values {sorted(phases)}", cubes[0][0])
    on_set = phases == {"1"}

    covered = [0] * size
    for line, cube, _ in cubes:
        if len(cube) != len(inputs) or any(c not in "01-" for c in cube):
            raise BlifError(f"cube '{cube}' does not match the {len(inputs)} inputs of '{output}'", line)
        for index in range(size):
            bits = format(index, f"0{len(inputs)}b") if inputs else ""
            if all(c == "-" or c == b for c, b in zip(cube, bits)):
                covered[index] = 1
    if on_set:
        return tuple(covered)
    return tuple(1 - value for value in covered)


def parse_blif(text: str) -> LogicNetlist:
    """
    Parses a single-model BLIF document (.model/.inputs/.outputs/.names/.latch/.end).

    Raises:
        BlifError: On unsupported directives, malformed covers, multiple or missing drivers.
        CombinationalLoopError: If a cycle does not pass through a latch.
    """

    netlist: Optional[LogicNetlist] = None
    cells: List[LutCell] = []
    latches: List[Latch] = []
    inputs: List[str] = []
    outputs: List[str] = []
    driven_at: Dict[str, int] = {}
    current: Optional[Tuple[int, List[str]]] = None
    cubes: List[Tuple[int, str, str]] = []

    def drive(signal: str, line: int) -> None:
        if signal in driven_at:
            raise BlifError(f"signal '{signal}' has multiple drivers (first at line {driven_at[signal]})", line)
        driven_at[signal] = line

    def close_names() -> None:
        nonlocal current, cubes
        if current is None:
            return
        line, signals = current
        cell_inputs, output = tuple(signals[:-1]), signals[-1]
        cells.append(LutCell(output, cell_inputs, _expand_cover(cell_inputs, cubes, output)))
        current, cubes = None, []

    for line, tokens in _logical_lines(text):
        keyword = tokens[0]
        if not keyword.startswith("."):
            if current is None:
                raise BlifError(f"cover line outside .names: {' '.join(tokens)}", line)
            if len(current[1]) == 1:
                if len(tokens) != 1:
                    raise BlifError("constant cover takes a single output value", line)
                cubes.append((line, "", tokens[0]))
            else:
                if len(tokens) != 2:
                    raise BlifError(f"malformed cube line: {' '.join(tokens)}", line)
                cubes.append((line, tokens[0], tokens[1]))
            continue

        close_names()
        if keyword not in SUPPORTED_DIRECTIVES:
            raise BlifError(f"unsupported directive {keyword}", line)
        if keyword == ".model":
            if netlist is not None:
                raise BlifError("only a single .model is supported", line)
            netlist = LogicNetlist(name=tokens[1] if len(tokens) > 1 else "top")
        elif keyword == ".inputs":
            for signal in tokens[1:]:
                drive(signal, line)
                inputs.append(signal)
        elif keyword == ".outputs":
            outputs.extend(tokens[1:])
        elif keyword == ".names":
            if len(tokens) < 2:
                raise BlifError(".names needs at least an output signal", line)
            drive(tokens[-1], line)
            current = (line, tokens[1:])
        elif keyword == ".latch":
            if len(tokens) not in (3, 4, 5, 6):
                raise BlifError("expected .latch <d> <q> [<type> <control>] [<init>]", line)
            d, q = tokens[1], tokens[2]
            init = 0
            if len(tokens) in (4, 6):
                try:
                    init = int(tokens[-1])
                except ValueError:
                    raise BlifError(f"latch init value '{tokens[-1]}' is not an integer", line)
                if init in (2, 3):
                    _logger.warning("line %d: latch %s init value %d mapped to 0", line, q, init)
                    init = 0
                elif init not in (0, 1):
                    raise BlifError(f"latch init value must lie in 0..3, got {init}", line)
            drive(q, line)
            latches.append(Latch(d, q, init))
        else:
            break
    close_names()

    if netlist is None:
        netlist = LogicNetlist(name="top")
    netlist.inputs, netlist.outputs, netlist.cells, netlist.latches = inputs, outputs, cells, latches

    used = [signal for cell in cells for signal in cell.inputs] + [latch.d for latch in latches] + outputs
    undriven = sorted({signal for signal in used if signal not in driven_at})
    if undriven:
        raise BlifError(f"undriven signals: {', '.join(undriven)}")

    graph = combinational_graph(netlist)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CombinationalLoopError([src for src, _ in cycle])

    _logger.debug("Parsed BLIF model %s: %d LUTs, %d latches", netlist.name, len(cells), len(latches))
    return netlist


def load_blif(path: Union[str, Path]) -> LogicNetlist:
    return parse_blif(Path(path).read_text())


def write_blif(netlist: LogicNetlist) -> str:
    """ On-set cover per LUT, one fully specified cube per true row. """

    lines = [f".model {netlist.name}"]
    if netlist.inputs:
        lines.append(".inputs " + " ".join(netlist.inputs))
    if netlist.outputs:
        lines.append(".outputs " + " ".join(netlist.outputs))
    for latch in netlist.latches:
        lines.append(f".latch {latch.d} {latch.q} re clk {latch.init}")
    for cell in netlist.cells:
        lines.append(".names " + " ".join(cell.inputs + (cell.output,)))
        width = len(cell.inputs)
        for index, value in enumerate(cell.table):
            if value:
                lines.append(f"{format(index, f'0{width}b')} 1" if width else "1")
    lines.append(".end")
    return "\n".join(lines) + "\n"


def simulate_golden(netlist: LogicNetlist, vectors: Sequence[Sequence[int]]) -> List[Tuple[int, ...]]:
    """
    Cycle-accurate reference simulation.
    Per vector the combinational core is evaluated in topological order, outputs are sampled,
    then every latch captures its D input.

    Raises:
        VectorWidthError: If a vector does not match the number of primary inputs.
    """

    state = {latch.q: latch.init for latch in netlist.latches}
    order = netlist.evaluation_order
    results = []
    for cycle, vector in enumerate(vectors):
        if len(vector) != len(netlist.inputs):
            raise VectorWidthError(
                f"vector {cycle} has {len(vector)} bits, netlist has {len(netlist.inputs)} inputs"
            )
        values = dict(state)
        values.update(zip(netlist.inputs, (int(bit) & 1 for bit in vector)))
        for cell in order:
            values[cell.output] = cell.evaluate([values[signal] for signal in cell.inputs])
        results.append(tuple(values[signal] for signal in netlist.outputs))
        state = {latch.q: values[latch.d] for latch in netlist.latches}
    return results


def random_vectors(width: int, count: int, seed: int) -> List[Tuple[int, ...]]:
    rng = random.Random(seed)
    return [tuple(rng.randint(0, 1) for _ in range(width)) for _ in range(count)]


def generate_random_netlist(cells: int, inputs: int, outputs: int, lut_size: int = 4, seed: int = 0,
                            latches: int = 0) -> LogicNetlist:
    """
    Random acyclic LUT netlist. Cells only read primary inputs, latch outputs
    and earlier cells, so every cycle passes through a latch.
    """

    if cells < 1 or inputs < 1 or outputs < 1 or outputs > cells:
        raise ValueError("need cells >= outputs >= 1 and inputs >= 1")
    rng = random.Random(seed)
    netlist = LogicNetlist(name=f"random_{cells}_{seed}")
    netlist.inputs = [f"pi{i}" for i in range(inputs)]
    latch_q = [f"q{i}" for i in range(latches)]
    available = netlist.inputs + latch_q
    for index in range(cells):
        fanin = rng.randint(1, min(lut_size, len(available)))
        cell_inputs = tuple(rng.sample(available, fanin))
        table = tuple(rng.randint(0, 1) for _ in range(1 << fanin))
        netlist.cells.append(LutCell(f"n{index}", cell_inputs, table))
        available.append(f"n{index}")
    cell_outputs = [cell.output for cell in netlist.cells]
    netlist.latches = [Latch(rng.choice(cell_outputs), q, rng.randint(0, 1)) for q in latch_q]
    netlist.outputs = cell_outputs[-outputs:]
    return netlist


def load_manifest(path: Union[str, Path]) -> List[BenchmarkEntry]:
    """
    Reads the benchmark manifest. Relative blif paths are resolved against the manifest directory.

    Raises:
        ValueError: If the manifest is not valid YAML or misses required keys.
    """

    path = Path(path)
    try:
        document = yaml.safe_load(path.read_text())
        manifest = BenchmarkManifest.model_validate(document)
    except (yaml.YAMLError, ValidationError) as e:
        raise ValueError(f"Invalid benchmark manifest {path}: {e}")
    entries = []
    for entry in manifest.benchmarks:
        blif = Path(entry.blif)
        if not blif.is_absolute():
            blif = path.parent / blif
        entries.append(entry.model_copy(update={"blif": str(blif)}))
    return entries
