from fastapi import FastAPI

# Import of router
from api.routes import arch, reports, space
from utils.config_utils import get_settings
from utils.log_utils import setup_logging

setup_logging(get_settings().log_level)

app = FastAPI(
    title="fpga3d",
    description="3D FPGA architecture exploration: validation, resource census, design space and reports.",
)


# linking the arch_router with main.py
app.include_router(arch.arch_router)

# linking the space_router with main.py
app.include_router(space.space_router)

# linking the reports_router with main.py
app.include_router(reports.reports_router)
