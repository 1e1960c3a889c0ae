from fastapi import FastAPI, HTTPException, BackgroundTasks
from fastapi.responses import FileResponse
from pydantic import BaseModel, Field
import uvicorn
import os
import uuid
import json
import time
from dataclasses import asdict, replace
from typing import Any, Dict, List, Optional
import aiofiles
import logging

from app import settings
from app.config import PRESETS, preset, validate
from app.errors import ConfigError
from app.harness import ExperimentConfig, run_comms_experiment, run_sensing_experiment, sidecar_path

settings.configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(
    title="LoRadar Simulator",
    description="Monte-Carlo service for compressed-sampling joint radar and communication experiments",
    version="1.0.0",
    docs_url="/docs" if settings.ENVIRONMENT == "development" else None,
    redoc_url="/redoc" if settings.ENVIRONMENT == "development" else None
)

OUTPUT_DIR = settings.OUTPUT_DIR
os.makedirs(OUTPUT_DIR, exist_ok=True)

# Storage for experiment status
processing_status: Dict[str, Dict] = {}


class ExperimentRequest(BaseModel):
    task: str = "sensing"
    scheme: str = "cs"
    preset: str = "paper-1ghz"
    snr_db: Optional[List[float]] = None
    trials: Optional[int] = None
    seed: Optional[int] = None
    waveform: Dict[str, Any] = Field(default_factory=dict)
    scene: Dict[str, Any] = Field(default_factory=dict)
    experiment: Dict[str, Any] = Field(default_factory=dict)


def _build_config(request: ExperimentRequest, output_path: str) -> ExperimentConfig:
    params = preset(request.preset, **request.waveform)
    if request.seed is not None:
        params = replace(params, seed=request.seed)
    experiment = {k: v for k, v in request.experiment.items() if k not in ("output_path", "trace_path", "iq_dump_path")}
    return ExperimentConfig.from_sections(
        request.task, params, request.scene, experiment,
        scheme=request.scheme,
        snr_grid_db=tuple(request.snr_db) if request.snr_db else None,
        trials=request.trials,
        output_path=output_path,
    )


@app.get("/health")
async def health():
    return {"status": "ok", "environment": settings.ENVIRONMENT, "workers": settings.worker_count()}


@app.get("/presets")
async def list_presets():
    """Preset waveform parameters with their derived constants."""
    result = {}
    for name in PRESETS:
        params = preset(name)
        result[name] = {"params": params.to_dict(), "derived": asdict(validate(params))}
    return result


@app.post("/experiments")
async def submit_experiment(request: ExperimentRequest, background_tasks: BackgroundTasks):
    """
    Validate an experiment request and start it in the background.

    Args:
        request: Task, scheme, preset and optional overrides

    Returns:
        JSON response with task_id for status checking
    """
    task_id = str(uuid.uuid4())
    task_dir = os.path.join(OUTPUT_DIR, task_id)
    csv_path = os.path.join(task_dir, "results.csv")

    try:
        cfg = _build_config(request, csv_path)
    except ConfigError as e:
        logger.warning(f"Rejected experiment request: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except TypeError as e:
        raise HTTPException(status_code=400, detail=f"Invalid experiment fields: {e}")

    try:
        os.makedirs(task_dir, exist_ok=True)
        async with aiofiles.open(os.path.join(task_dir, "request.json"), 'w') as f:
            await f.write(json.dumps(request.model_dump(), indent=2, sort_keys=True))
    except OSError as e:
        logger.error(f"Failed to persist request for task {task_id}: {e}")
        raise HTTPException(status_code=500, detail=f"Failed to store request: {str(e)}")

    processing_status[task_id] = {
        "status": "queued",
        "task": cfg.task,
        "scheme": cfg.scheme,
        "csv_path": csv_path,
        "start_time": time.time(),
        "progress": 0,
        "message": "Experiment queued"
    }
    background_tasks.add_task(run_experiment_task, task_id, cfg)
    logger.info(f"Experiment queued: task={cfg.task}, scheme={cfg.scheme}, Task ID: {task_id}")

    return {
        "task_id": task_id,
        "task": cfg.task,
        "scheme": cfg.scheme,
        "status": "queued",
        "message": "Experiment accepted. Processing started."
    }


def run_experiment_task(task_id: str, cfg: ExperimentConfig):
    """
    Background task running one Monte-Carlo experiment.

    Args:
        task_id: Unique task identifier
        cfg: Validated experiment configuration
    """
    processing_status[task_id].update({
        "status": "running",
        "progress": 10,
        "message": f"Running {cfg.trials} trials over {len(cfg.snr_grid_db)} SNR points..."
    })
    try:
        runner = run_sensing_experiment if cfg.task == "sensing" else run_comms_experiment
        runner(cfg, workers=settings.worker_count())
        processing_time = time.time() - processing_status[task_id]["start_time"]
        processing_status[task_id].update({
            "status": "completed",
            "progress": 100,
            "message": "Experiment completed",
            "processing_time": processing_time
        })
        logger.info(f"Experiment completed for task {task_id}. Time: {processing_time:.2f}s")
    except Exception as e:
        logger.error(f"Experiment failed for task {task_id}: {e}")
        processing_status[task_id].update({
            "status": "error",
            "progress": 0,
            "message": f"Experiment failed: {str(e)}"
        })


@app.get("/status/{task_id}")
async def get_status(task_id: str):
    if task_id not in processing_status:
        raise HTTPException(status_code=404, detail="Task not found")
    status = processing_status[task_id].copy()
    # Don't expose internal file paths in the response
    status.pop("csv_path", None)
    return status


def _completed_path(task_id: str) -> str:
    if task_id not in processing_status:
        raise HTTPException(status_code=404, detail="Task not found")
    status = processing_status[task_id]
    if status["status"] != "completed":
        raise HTTPException(status_code=400, detail="Results not ready yet")
    return status["csv_path"]


@app.get("/download/{task_id}")
async def download_results(task_id: str):
    csv_path = _completed_path(task_id)
    if not os.path.exists(csv_path):
        raise HTTPException(status_code=404, detail="Results file not found")
    return FileResponse(path=csv_path, filename=f"{task_id}.csv", media_type="text/csv")


@app.get("/download-config/{task_id}")
async def download_config(task_id: str):
    config_path = str(sidecar_path(_completed_path(task_id)))
    if not os.path.exists(config_path):
        raise HTTPException(status_code=404, detail="Config file not found")
    return FileResponse(path=config_path, filename=f"{task_id}.json", media_type="application/json")


@app.on_event("startup")
async def startup_event():
    logger.info("LoRadar simulator service starting up...")
    logger.info(f"Environment: {settings.ENVIRONMENT}")
    logger.info(f"Output directory: {OUTPUT_DIR}")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("LoRadar simulator service shutting down...")


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=int(os.getenv("PORT", "8000")))
