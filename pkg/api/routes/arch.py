# Import of necessary parts of FastAPI
from fastapi import APIRouter, Depends, HTTPException, Query, status

# Import of Pydantic schemas
from api.schemas import ArchDocument, ArchValidationResponse, CensusResponse

# Import of the services
from services.arch_service import ArchService, get_arch_service, spec_hash
from services.vertical_service import VerticalService, get_vertical_service


# Creates APIRouter instance
arch_router = APIRouter(
    prefix="/arch",
    tags=["architecture"],
)


@arch_router.post("/validate", response_model=ArchValidationResponse, status_code=status.HTTP_200_OK)
def validate_arch(
        document: ArchDocument,
        arch_service: ArchService = Depends(get_arch_service)
):
    """ **Endpoint to validate an architecture document.**

    **Returns:**\n
        valid, the list of invariant violations and the spec hash of a valid document.

    **Raises:**\n
        HTTPException:\n
        - HTTP 400 Bad Request: If the document is not valid YAML, has unknown keys or out-of-range values.
    """

    try:
        spec, violations = arch_service.check(document.text)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    return ArchValidationResponse(
        valid=spec is not None,
        violations=violations,
        spec_hash=spec_hash(spec) if spec is not None else None,
    )


@arch_router.post("/census", response_model=CensusResponse, status_code=status.HTTP_200_OK)
def arch_census(
        document: ArchDocument,
        seed: int = Query(0, description="Seed of the Random site placement."),
        arch_service: ArchService = Depends(get_arch_service),
        vertical_service: VerticalService = Depends(get_vertical_service)
):
    """ **Endpoint to build the 3D routing resource graph of a document and count its resources.**

    **Raises:**\n
        HTTPException:\n
        - HTTP 400 Bad Request: If the document is invalid or the vertical rules cannot be applied.
    """

    try:
        spec = arch_service.parse(document.text)
        census, edges, counts = vertical_service.census(spec, seed)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )
    return CensusResponse(
        nodes=census,
        edges=edges,
        vertical_total=counts.total,
        vertical_per_grid=counts.per_grid,
        vertical_breakdown=counts.breakdown,
    )
