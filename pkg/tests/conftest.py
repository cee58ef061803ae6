from pathlib import Path
from typing import Any, Callable, Dict, Optional

import pytest
import yaml
from fastapi.testclient import TestClient

from api.schemas import ArchSpec
from main import app
from services.arch_service import load_arch, parse_arch
from services.bench_service import LogicNetlist, load_blif

REPO_ROOT = Path(__file__).resolve().parent.parent
ARCH_DIR = REPO_ROOT / "archs"
BENCH_DIR = REPO_ROOT / "benchmarks"
MANIFEST = BENCH_DIR / "manifest.yaml"


def arch_document(width: int = 4, height: int = 4, layers: int = 1, channel_width: int = 8,
                  lut_size: int = 4, cluster_size: int = 4, io_capacity: int = 2,
                  connection_type: str = "None2D", sb_percentage: int = 100,
                  sb_placement: str = "RepeatedInterval", pattern: Optional[Dict[str, list]] = None,
                  vertical: Optional[Dict[str, Any]] = None, timing: Optional[Dict[str, Any]] = None,
                  layer_class: str = "Homogeneous", columns: Optional[list] = None) -> Dict[str, Any]:
    """ Nested architecture document with a single length-1 segment group. """

    document: Dict[str, Any] = {
        "grid": {"width": width, "height": height, "io_capacity": io_capacity},
        "layers": {"count": layers, "class": layer_class},
        "routing": {"channel_width": channel_width, "segments": [{"length": 1, "tracks": channel_width}],
                    "planar_sb": "Wilton"},
        "logic": {"lut_size": lut_size, "cluster_size": cluster_size},
        "vertical": {"type": connection_type, "sb_percentage": sb_percentage, "sb_placement": sb_placement,
                     "pattern": pattern or {"input": [0, 0, 0, 0], "output": [0, 0, 0, 0]}},
        "timing": timing or {"vertical_delay_ratio": 0.739, "base_switch_delay": 185.4e-12},
    }
    if columns is not None:
        document["layers"]["columns"] = columns
    document["vertical"].update(vertical or {})
    return document


@pytest.fixture(scope="session")
def make_spec() -> Callable[..., ArchSpec]:
    """ Factory fixture: keyword overrides of arch_document -> parsed ArchSpec. """

    def factory(**overrides) -> ArchSpec:
        return parse_arch(yaml.safe_dump(arch_document(**overrides)))

    return factory


@pytest.fixture(scope="session")
def make_arch_text() -> Callable[..., str]:
    def factory(**overrides) -> str:
        return yaml.safe_dump(arch_document(**overrides))

    return factory


@pytest.fixture(scope="session")
def planar_spec(make_spec) -> ArchSpec:
    """ 4x4 single-layer fabric, W=8, K=4, N=4 """

    return make_spec()


@pytest.fixture(scope="session")
def sb_spec(make_spec) -> ArchSpec:
    """ 4x4 two-layer fabric with 3D switch blocks at every site """

    return make_spec(layers=2, connection_type="SB")


@pytest.fixture(scope="session")
def load_arch_file() -> Callable[[str], ArchSpec]:
    def loader(name: str) -> ArchSpec:
        return load_arch(ARCH_DIR / name)

    return loader


@pytest.fixture(scope="session")
def load_benchmark() -> Callable[[str], LogicNetlist]:
    """ Loads a bundled benchmark by name, e.g. load_benchmark("and2"). """

    def loader(name: str) -> LogicNetlist:
        return load_blif(BENCH_DIR / f"{name}.blif")

    return loader


@pytest.fixture(scope="function")
def client():
    """ Fixture for FastAPI TestClient,
    Provides FastAPI TestClient to send requests to the app.
    """

    return TestClient(app)
