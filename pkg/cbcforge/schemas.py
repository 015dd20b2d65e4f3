from typing import Any, Dict, List, Optional

from pydantic import BaseModel, root_validator, validator


class ProverConfig(BaseModel):
    int_bound: int = 4
    max_seq_len: int = 3
    seq_elem_bound: int = 2

    class Config:
        frozen = True

    @validator("int_bound", "max_seq_len", "seq_elem_bound")
    def non_negative(cls, v):
        if v < 0:
            raise ValueError("prover bounds must be >= 0")
        return v


# ────── reports ──────

VERDICTS = ("valid", "invalid", "unknown", "open")


class ReportItem(BaseModel):
    obligation_id: str
    provenance: str
    result: str
    counterexample: Optional[Dict[str, Any]] = None
    reason: Optional[str] = None

    @validator("result")
    def known_verdict(cls, v):
        if v not in VERDICTS:
            raise ValueError(f"unknown verdict {v!r}")
        return v


class CompositionCheckOut(BaseModel):
    method: str
    kept: Optional[str]
    implications: List[str]


class Report(BaseModel):
    command: str
    items: List[ReportItem] = []
    overall: str = "pass"
    compositions: List[CompositionCheckOut] = []
    listing: Optional[str] = None
    value: Optional[str] = None

    @root_validator(skip_on_failure=True)
    def compute_overall(cls, values):
        results = {item.result for item in values.get("items", [])}
        if results & {"invalid", "unknown"}:
            values["overall"] = "fail"
        elif "open" in results:
            values["overall"] = "open"
        elif values.get("overall") not in ("pass", "fail", "open"):
            values["overall"] = "pass"
        return values
