from typing import Dict

from fastapi import APIRouter, Depends, HTTPException, status

from api.schemas import DesignSpaceBounds, SBPattern, SpaceCountResponse
from services.arch_service import ArchService, get_arch_service


space_router = APIRouter(
    prefix="/space",
    tags=["design space"],
)


@space_router.post("/count", response_model=SpaceCountResponse, status_code=status.HTTP_200_OK)
def count_space(
        bounds: DesignSpaceBounds,
        arch_service: ArchService = Depends(get_arch_service)
):
    """ **Endpoint to count the unique vertical configurations within the bounds.**

    **Raises:**\n
        HTTPException:\n
        - HTTP 400 Bad Request: If the bounds contain the open-ended Custom type.\n
        - 422 Unprocessable Entity, Pydantic: If a percentage lies outside 0..100.
    """

    try:
        count = arch_service.count_design_space(bounds)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    return SpaceCountResponse(count=count, digits=len(str(count)))


@space_router.get("/patterns", response_model=Dict[str, SBPattern], status_code=status.HTTP_200_OK)
def list_patterns(arch_service: ArchService = Depends(get_arch_service)):
    """ **Endpoint to list the named 3D switch block patterns.** """

    return arch_service.named_patterns()
