"""HTTP JSON API for a single trained model.

Endpoints: GET /schema, POST /predict, POST /whatif, GET /model/info,
POST /admin/reload.  One model per process; reload swaps it atomically and
requests racing a reload receive 503.  Handlers are pure over the loaded
model, so identical requests always produce identical responses.

Prediction responses re-validate the prefix property of the conformal set and
the local accuracy of the attributions before leaving the process; a breach
returns 500 rather than a silently inconsistent explanation.
"""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from dataclasses import replace

from .model import (
    MissingLagBlockError,
    PredictionReport,
    RequestValidationError,
    TrainedModel,
)
from .sampling import resolve_feature_subset

LOCAL_ACCURACY_TOL = 1e-9


class PredictRequest(BaseModel):
    values: dict = Field(default_factory=dict)
    gender: str = ""
    age_years: float = 0.0
    previous_exams: Optional[list[dict]] = None


class WhatIfRequest(PredictRequest):
    overrides: list[dict] = Field(default_factory=list)


class ReloadRequest(BaseModel):
    model_path: Optional[str] = None


class _State:
    def __init__(self) -> None:
        self.model: Optional[TrainedModel] = None
        self.model_path: Optional[str] = None
        self.alpha_override: Optional[float] = None
        self.reload_lock = threading.Lock()
        self.reloading = False


def _apply_alpha_override(model: TrainedModel, alpha: Optional[float]) -> TrainedModel:
    if alpha is None:
        return model
    model.conformal_cfg = replace(model.conformal_cfg, alpha=alpha)
    return model


def _verify_response(report: PredictionReport) -> None:
    """Boundary re-validation: prefix property and local accuracy."""
    ps = report.prediction_set
    expected_prefix = [int(c) for c in ps.sorted_classes[: ps.set_size]]
    if [int(lbl) for lbl in ps.labels] != expected_prefix:
        raise RuntimeError("prediction set is not a prefix of the probability ordering")
    total = report.base_value + sum(a["shap_value"] for a in report.attributions)
    if abs(total - report.probabilities[1]) > LOCAL_ACCURACY_TOL:
        raise RuntimeError("attribution local accuracy violated")


def create_app(
    model_path: Optional[str] = None,
    alpha_override: Optional[float] = None,
    model: Optional[TrainedModel] = None,
) -> FastAPI:
    app = FastAPI(title="tmjcds", version="0.1.0")
    state = _State()
    state.model_path = model_path
    state.alpha_override = alpha_override
    if model is not None:
        state.model = _apply_alpha_override(model, alpha_override)
    elif model_path:
        state.model = _apply_alpha_override(TrainedModel.load(model_path), alpha_override)

    def current_model() -> TrainedModel:
        if state.reloading:
            raise HTTPException(status_code=503, detail="model reloading")
        if state.model is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return state.model

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"errors": exc.errors})

    @app.exception_handler(MissingLagBlockError)
    async def _lag_handler(_: Request, exc: MissingLagBlockError):
        return JSONResponse(
            status_code=422,
            content={"errors": [{"feature": "previous_exams", "message": str(exc)}]},
        )

    @app.exception_handler(RuntimeError)
    async def _invariant_handler(_: Request, exc: RuntimeError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/schema")
    def get_schema():
        m = current_model()
        subset = resolve_feature_subset(m.schema, m.feature_subset)
        return {
            "raw_features": [m.schema[n].to_dict() for n in subset],
            "merged_layout": list(m.encoder.layout),
            "previous_exams_required": m.lag_count,
            "class_names": {"TMJ0": "No TMJ involvement", "TMJ1": "TMJ involvement"},
            "schema_hash": m.schema_hash,
        }

    @app.get("/model/info")
    def model_info():
        return current_model().model_info()

    @app.post("/predict")
    def predict(req: PredictRequest):
        m = current_model()
        report = m.predict_request(req.values, req.gender, req.age_years, req.previous_exams)
        _verify_response(report)
        return report.to_dict()

    @app.post("/whatif")
    def whatif(req: WhatIfRequest):
        m = current_model()
        responses = []
        baseline = m.predict_request(req.values, req.gender, req.age_years, req.previous_exams)
        _verify_response(baseline)
        responses.append({"override": None, "response": baseline.to_dict()})
        for override in req.overrides:
            merged = dict(req.values)
            merged.update(override)
            try:
                rep = m.predict_request(merged, req.gender, req.age_years, req.previous_exams)
                _verify_response(rep)
                responses.append({"override": override, "response": rep.to_dict()})
            except RequestValidationError as exc:
                responses.append({"override": override, "error": {"errors": exc.errors}})
            except MissingLagBlockError as exc:
                responses.append(
                    {"override": override,
                     "error": {"errors": [{"feature": "previous_exams", "message": str(exc)}]}}
                )
        return {"results": responses}

    @app.post("/admin/reload")
    def reload_model(req: ReloadRequest):
        path = req.model_path or state.model_path
        if not path:
            raise HTTPException(status_code=400, detail="no model path configured")
        if not state.reload_lock.acquire(blocking=False):
            raise HTTPException(status_code=503, detail="reload already in progress")
        try:
            state.reloading = True
            try:
                new_model = _apply_alpha_override(TrainedModel.load(path), state.alpha_override)
            except (OSError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=f"cannot load model: {exc}")
            state.model = new_model
            state.model_path = path
            return {"status": "reloaded", "schema_hash": new_model.schema_hash}
        finally:
            state.reloading = False
            state.reload_lock.release()

    return app
