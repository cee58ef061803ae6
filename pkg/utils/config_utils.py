import os

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

# Load environmental variables
load_dotenv()


class Settings(BaseModel):
    """ Runtime settings read from the environment (or a .env file). """

    output_dir: str = Field("out", description="Directory for flow artifacts and reports.")
    jobs: int = Field(1, ge=1, description="Default parallelism of sweeps.")
    log_level: str = Field("INFO", description="Root log level.")
    arch_dir: str = Field("archs", description="Directory of the bundled architecture corpus.")
    bench_manifest: str = Field("benchmarks/manifest.yaml", description="Default benchmark manifest.")


def get_settings() -> Settings:
    """
    Reads the FPGA3D_* variables.

    Raises:
        ValueError: If a variable holds an invalid value (e.g. FPGA3D_JOBS=zero).
    """

    try:
        return Settings(
            output_dir=os.getenv("FPGA3D_OUTPUT_DIR", "out"),
            jobs=os.getenv("FPGA3D_JOBS", "1"),
            log_level=os.getenv("FPGA3D_LOG_LEVEL", "INFO").upper(),
            arch_dir=os.getenv("FPGA3D_ARCH_DIR", "archs"),
            bench_manifest=os.getenv("FPGA3D_BENCH_MANIFEST", "benchmarks/manifest.yaml"),
        )
    except ValidationError as e:
        raise ValueError(f"Invalid FPGA3D_* environment setting: {e}")
