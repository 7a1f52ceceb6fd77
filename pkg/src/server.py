import argparse
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import uvicorn
from fastapi import APIRouter, FastAPI, HTTPException
from pydantic import BaseModel, Field, ValidationError

from src.solver.diagnostics import psnr
from src.solver.eirnri import solve
from src.solver.errors import CertifiedFailureError, ConfigurationError, InvalidArgumentError, NumericalError
from src.solver.models import ProblemInstance, SolverConfig, StopReason

logger = logging.getLogger(__name__)

app = FastAPI(title="EIRNRI Server")
router = APIRouter(prefix="/eirnri")


class SolveRequest(BaseModel):
    observed: List[List[float]]
    # observed (row, col) pairs
    mask: List[Tuple[int, int]]
    lam: float = Field(alias="lambda")
    p: float = 0.5
    x_star: Optional[List[List[float]]] = None
    x0: Optional[List[List[float]]] = None
    config: Dict[str, Any] = Field(default_factory=dict)


class SolveResponse(BaseModel):
    x: List[List[float]]
    rank: int
    iterations: int
    stop_reason: StopReason
    rel_dist: float
    rel_err: Optional[float] = None
    objective: float


class PsnrRequest(BaseModel):
    restored: List[Any]
    reference: List[Any]


class PsnrResponse(BaseModel):
    # null when the images are identical
    psnr: Optional[float]


@router.get("/health")
def health_check():
    return {"status": "ok"}


@router.post("/solve")
def solve_completion(request: SolveRequest) -> SolveResponse:
    """
    Complete a partially observed matrix. Invalid input or configuration
    gives 422, a failed runtime certificate or numerical breakdown gives 500.
    """
    try:
        config = SolverConfig.model_validate(request.config)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=f"invalid solver config: {e}")
    try:
        instance = ProblemInstance.from_observation(
            request.observed, request.mask, request.lam, request.p, x_star=request.x_star)
        outcome = solve(instance, config, x0=request.x0)
    except (ConfigurationError, InvalidArgumentError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except CertifiedFailureError as e:
        logger.error(f"solve failed: {e}")
        raise HTTPException(status_code=500, detail={"check": e.check, "k": e.k, "message": str(e)})
    except NumericalError as e:
        logger.error(f"solve failed: {e}")
        raise HTTPException(status_code=500, detail=str(e))

    last = outcome.trace[-1]
    return SolveResponse(
        x=outcome.x_final.tolist(),
        rank=outcome.rank_final,
        iterations=outcome.iterations,
        stop_reason=outcome.stop_reason,
        rel_dist=last.rel_dist,
        rel_err=last.rel_err,
        objective=last.objective,
    )


@router.post("/psnr")
def psnr_endpoint(request: PsnrRequest) -> PsnrResponse:
    try:
        value = psnr(np.array(request.restored, dtype=np.float64), np.array(request.reference, dtype=np.float64))
    except (InvalidArgumentError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    return PsnrResponse(psnr=value if np.isfinite(value) else None)


def parse_args():
    parser = argparse.ArgumentParser(description='EIRNRI Server')
    parser.add_argument('--port', type=int, default=5012,
                        help='Port to run the server on (default: 5012)')
    parser.add_argument('--host', type=str, default="0.0.0.0",
                        help='Host to bind the server to (default: 0.0.0.0)')
    return parser.parse_args()


app.include_router(router)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    args = parse_args()
    uvicorn.run(app, host=args.host, port=args.port)
