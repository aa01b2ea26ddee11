#!/usr/bin/env python3
"""
Spin-Photon Transfer Simulator - REST API

FastAPI-based REST API around the experiment runners.
Provides endpoints to run experiments, inspect the calibrated noise model
and check the GHZ basis decomposition.

Usage:
    uvicorn api:app --reload --port 8000

Or run directly:
    python api.py
"""

import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from calibration import get_calibration
from config import Experiment, NoiseProfile, build_config, config
from errors import SimulationError
from experiments import COLUMNS, run_experiment
from protocol import Engine

logging.basicConfig(level=config.log_level)
logger = logging.getLogger(__name__)

# ============================================================================
# FastAPI App Initialization
# ============================================================================

app = FastAPI(
    title="Spin-Photon Transfer Simulator API",
    description="Photon-to-spin quantum state transfer experiments on demand",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ============================================================================
# Pydantic Models (Request/Response Schemas)
# ============================================================================


class RunRequest(BaseModel):
    """Request body for the run endpoint."""

    experiment: Experiment = Field(..., description="Experiment to run")
    trials: int = Field(default=2000, ge=1, le=1_000_000, description="Trials per run")
    seed: int = Field(default=0, ge=0, description="Root seed")
    engine: Engine = Field(default=Engine.EXACT, description="exact or montecarlo")
    noise_profile: NoiseProfile = Field(default=NoiseProfile.CALIBRATED)
    overrides: Dict[str, Dict[str, Any]] = Field(
        default_factory=dict,
        description="Parameter blocks by section, e.g. {\"spin\": {\"t2_star_ns\": 2.0}}",
    )

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "experiment": "transfer",
                "trials": 2000,
                "seed": 7,
                "engine": "exact",
                "noise_profile": "calibrated",
                "overrides": {"protocol": {"targets": "H, D+"}},
            }
        }
    )


class RunResponse(BaseModel):
    """Response body for the run endpoint."""

    experiment: str
    engine: str
    columns: List[str]
    rows: List[Dict[str, Any]]
    summary: Dict[str, Any]


class ExperimentInfo(BaseModel):
    name: str
    columns: List[str]


class HealthResponse(BaseModel):
    status: str
    message: str


def _jsonable(value: Any) -> Any:
    """NaN and pandas NA are not valid JSON."""
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    try:
        if value != value:
            return None
    except TypeError:
        return None
    return value


# ============================================================================
# API Endpoints
# ============================================================================


@app.get("/", tags=["General"])
async def root():
    """Root endpoint with API information."""
    return {
        "name": "Spin-Photon Transfer Simulator API",
        "version": "1.0.0",
        "docs": "/docs",
        "health": "/health",
        "endpoints": {
            "experiments": "GET /api/experiments",
            "run": "POST /api/run",
            "eq5check": "GET /api/eq5check",
            "calibration": "GET /api/calibration",
        },
    }


@app.get("/health", response_model=HealthResponse, tags=["General"])
async def health_check():
    """Health check endpoint."""
    return HealthResponse(status="healthy", message="Simulator is ready")


@app.get("/api/experiments", response_model=List[ExperimentInfo], tags=["Experiments"])
async def list_experiments():
    """Available experiments and the columns of their tables."""
    return [ExperimentInfo(name=e.value, columns=COLUMNS[e]) for e in Experiment]


def _run(request: RunRequest) -> RunResponse:
    try:
        cfg = build_config(
            {
                "experiment": request.experiment,
                "trials": request.trials,
                "seed": request.seed,
                "engine": request.engine,
                "workers": 1,
                "noise_profile": request.noise_profile,
                **request.overrides,
            }
        )
        output = run_experiment(cfg)
    except SimulationError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception("Run failed")
        raise HTTPException(status_code=500, detail=f"Error running experiment: {str(e)}")

    rows = [
        {k: _jsonable(v) for k, v in row.items()}
        for row in output.frame.to_dict(orient="records")
    ]
    return RunResponse(
        experiment=cfg.experiment.value,
        engine=cfg.engine.value,
        columns=list(output.frame.columns),
        rows=rows,
        summary={k: _jsonable(v) for k, v in output.summary.items()},
    )


@app.post("/api/run", response_model=RunResponse, tags=["Experiments"])
def run(request: RunRequest):
    """
    Run one experiment and return its table and summary.

    **Experiments:** entangle, transfer, echo, ramsey, fringe, lossbudget, eq5check.
    Parameter blocks go under `overrides`, keyed by config section.
    """
    return _run(request)


@app.get("/api/eq5check", response_model=RunResponse, tags=["Experiments"])
def eq5check(seed: int = 0):
    """Residuals of the GHZ basis decomposition for the named and random targets."""
    return _run(RunRequest(experiment=Experiment.EXPANSION_CHECK, seed=seed))


@app.get("/api/calibration", tags=["Calibration"])
def calibration():
    """Noise parameters fitted to the reported measurements."""
    try:
        report = get_calibration()
    except SimulationError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return {
        "steps": report.steps,
        "noise": report.noise.model_dump(mode="json"),
    }


if __name__ == "__main__":
    uvicorn.run("api:app", host="0.0.0.0", port=8000, reload=True)
