"""Pydantic request/response models for the inference service."""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class InferRequest(BaseModel):
    pdg: dict = Field(description="PDG document (same JSON shape as the file format)")
    gamma: str = "1"
    query: Optional[str] = Field(
        default=None, description='e.g. "Y=1" or "Y=1|X=0,Z=2"'
    )
    eps: float = 1e-4
    include_beliefs: bool = False
    tol: float = 1e-8
    allow_cccp: bool = False


class QueryAnswer(BaseModel):
    query: str
    estimate: float
    precision: float
    interval: Tuple[float, float]


class BeliefTable(BaseModel):
    variables: List[str]
    probabilities: List[float]


class InferResponse(BaseModel):
    status: str
    gamma: str
    inconsistency: Optional[float] = None  # None encodes +infinity
    sinc_value: Optional[float] = None
    local_optimum: bool = False
    solver: Dict[str, dict] = {}
    timing_seconds: float
    query: Optional[QueryAnswer] = None
    beliefs: Optional[List[BeliefTable]] = None
    decomposition_width: Optional[int] = None


class GenerateRandomRequest(BaseModel):
    seed: int = 0
    n: Optional[int] = None
    arcs: Optional[int] = None
    vals: Optional[int] = None


class GenerateKtreeRequest(BaseModel):
    seed: int = 0
    n: int = 8
    treewidth: int = 2
    arcs: int = 10
    vals: int = 2


class GenerateResponse(BaseModel):
    pdg: dict


class CompileRequest(BaseModel):
    pdg: dict
    gamma: str = "1"
    variant: str = "linear-p"


class CompileResponse(BaseModel):
    kind: str
    n: int
    m: int
    objective_scale: float
    objective_offset: float
    dump: str


class OracleRequest(BaseModel):
    pdg: Optional[dict] = None
    cnf: Optional[str] = Field(default=None, description="DIMACS text")
    gamma: str = "1"
    restarts: int = 2
    iters: int = 2000


class OracleResponse(BaseModel):
    status: str
    objective: Optional[float] = None
    marginals: Optional[Dict[str, List[float]]] = None
    model_count: Optional[int] = None
    n_vars: Optional[int] = None
    n_clauses: Optional[int] = None
    pdg: Optional[dict] = None


class ErrorBody(BaseModel):
    code: str
    message: str
    details: Optional[list] = None
