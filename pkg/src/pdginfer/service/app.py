"""FastAPI application exposing the inference engine.

Long-running deployments serve many inference/compile/generate requests
against the same process; each request is stateless (the core types are
immutable), so the app needs no locks.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from . import handlers
from .schemas import (
    CompileRequest,
    CompileResponse,
    GenerateKtreeRequest,
    GenerateRandomRequest,
    GenerateResponse,
    InferRequest,
    InferResponse,
    OracleRequest,
    OracleResponse,
)

HTTP_STATUS = {
    "input-error": 400,
    "improbable-event": 409,
    "unsupported-regime": 422,
    "solver-failure": 500,
}


def _raise_http(exc: handlers.ServiceError):
    raise HTTPException(
        status_code=HTTP_STATUS.get(exc.code, 500),
        detail={"code": exc.code, "message": exc.message, "details": exc.details},
    )


app = FastAPI(
    title="pdginfer",
    version=__version__,
    description="Inference for probabilistic dependency graphs via "
    "exponential conic programming",
)


@app.get("/healthz")
def healthz():
    return {"status": "ok", "version": __version__}


@app.post("/infer", response_model=InferResponse, response_model_exclude_none=True)
def infer(req: InferRequest):
    try:
        return handlers.handle_infer(req)
    except handlers.ServiceError as exc:
        _raise_http(exc)


@app.post("/generate/random", response_model=GenerateResponse)
def generate_random(req: GenerateRandomRequest):
    try:
        return handlers.handle_generate_random(req)
    except handlers.ServiceError as exc:
        _raise_http(exc)


@app.post("/generate/ktree", response_model=GenerateResponse)
def generate_ktree(req: GenerateKtreeRequest):
    try:
        return handlers.handle_generate_ktree(req)
    except handlers.ServiceError as exc:
        _raise_http(exc)


@app.post("/compile", response_model=CompileResponse)
def compile_pdg(req: CompileRequest):
    try:
        return handlers.handle_compile(req)
    except handlers.ServiceError as exc:
        _raise_http(exc)


@app.post("/oracle", response_model=OracleResponse, response_model_exclude_none=True)
def run_oracle(req: OracleRequest):
    try:
        return handlers.handle_oracle(req)
    except handlers.ServiceError as exc:
        _raise_http(exc)
