from typing import List

from fastapi import APIRouter, Depends, HTTPException, status

from api.schemas import DistributionRequest, DistributionRow, SummarizeRequest, SummaryRow
from services.report_service import ReportService, get_report_service


reports_router = APIRouter(
    prefix="/reports",
    tags=["reports"],
)


@reports_router.post("/summarize", response_model=List[SummaryRow], status_code=status.HTTP_200_OK)
def summarize_report(
        request: SummarizeRequest,
        report_service: ReportService = Depends(get_report_service)
):
    """ **Endpoint to normalize per-config WL/ CPD geometric means to a baseline config.**

    **Raises:**\n
        HTTPException:\n
        - HTTP 400 Bad Request: If the baseline config has no successful rows.
    """

    try:
        return report_service.summarize(request.rows, request.baseline)
    except ValueError as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=str(e)
        )


@reports_router.post("/distribution", response_model=List[DistributionRow], status_code=status.HTTP_200_OK)
def distribution_report(
        request: DistributionRequest,
        report_service: ReportService = Depends(get_report_service)
):
    """ **Endpoint for the per-config CPD five-number summary (min, q1, median, q3, max).** """

    return report_service.distribution(request.rows)
