"""HTTP front-end.  Every endpoint is a thin wrapper over a service handler."""
from __future__ import annotations

from typing import List

from fastapi import FastAPI, HTTPException

from . import service
from .service import (EisensteinRequest, PropagatorRequest, QTableRequest, SelftestRequest, Table,
                      TraceRequest, UsageError)

app = FastAPI(title="elltrace", version="0.1.0")


def _call(fn, req):
    try:
        return fn(req)
    except UsageError as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.get("/health")
def health():
    return {"ok": True}


@app.get("/suites", response_model=List[str])
def suites():
    return service.list_suites()


@app.post("/propagator", response_model=Table)
def propagator(req: PropagatorRequest):
    return _call(service.cmd_propagator, req)


@app.post("/qtable", response_model=Table)
def qtable(req: QTableRequest):
    return _call(service.cmd_qtable, req)


@app.post("/eisenstein", response_model=Table)
def eisenstein(req: EisensteinRequest):
    return _call(service.cmd_eisenstein, req)


@app.post("/trace", response_model=Table)
def trace(req: TraceRequest):
    return _call(service.cmd_trace, req)


@app.post("/selftest", response_model=Table)
def selftest(req: SelftestRequest):
    return _call(service.cmd_selftest, req)
