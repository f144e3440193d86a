"""Request models and pure handlers behind both the HTTP API and the CLI.

Handlers return a ``Table``; they raise ``UsageError`` for anything the caller
got wrong (exit code 2 / HTTP 422).  Numerical failures are reported in the
table's ``status`` instead of being raised.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from . import suites
from .chains import ChainError, SchemaError, insertion_chain, make_chain, trace_poly, unit_chain
from .bv import bv_integrate_top
from .elliptic import EllipticContext, EllipticError, SingularityError
from .fock import FockError, bc, betagamma, direct_sum, format_var, parse_fock


class UsageError(ValueError):
    pass


class RunConfig(BaseModel):
    tau: Tuple[float, float] = (0.3, 1.7)
    convention: Literal["rescaled", "bd"] = "rescaled"
    hbar_window: Tuple[int, int] = (-4, 4)
    max_deriv: int = Field(8, ge=0, le=24)
    tol: Optional[float] = None
    seed: int = 7
    format: Literal["json", "csv"] = "json"

    @field_validator("tau")
    @classmethod
    def _upper_half_plane(cls, v):
        if not v[1] > 0:
            raise ValueError("Im tau must be positive")
        return v

    @field_validator("hbar_window")
    @classmethod
    def _window(cls, v):
        if v[0] > v[1]:
            raise ValueError("hbar window must satisfy lo <= hi")
        return v

    @field_validator("tol")
    @classmethod
    def _tol(cls, v):
        if v is not None and not v > 0:
            raise ValueError("tolerance must be positive")
        return v

    @property
    def tau_c(self) -> complex:
        return complex(*self.tau)

    def context(self, K=None) -> EllipticContext:
        try:
            return EllipticContext(self.tau_c, K=self.max_deriv if K is None else K,
                                   convention=self.convention)
        except EllipticError as e:
            raise UsageError(str(e))


class Table(BaseModel):
    columns: List[str]
    rows: List[List[Any]]
    status: Literal["pass", "fail", "info"] = "info"
    notes: List[str] = []

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows(self.rows)
            return buf.getvalue()
        return json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n"


def _num(x, digits=15):
    """Round to a fixed number of significant digits so output is stable."""
    x = float(x)
    return 0.0 if x == 0 else float(f"{x:.{digits}g}")


# ------------------------------------------------------------------ propagator

class PropagatorRequest(BaseModel):
    config: RunConfig = RunConfig()
    z: Tuple[float, float]
    w: Tuple[float, float] = (0.0, 0.0)
    a: int = Field(0, ge=0)
    b: int = Field(0, ge=0)


def cmd_propagator(req: PropagatorRequest) -> Table:
    ctx = req.config.context()
    try:
        v = ctx.propagator(complex(*req.z), complex(*req.w), req.a, req.b)
    except SingularityError as e:
        raise UsageError(f"singular: {e}")
    except EllipticError as e:
        raise UsageError(str(e))
    return Table(columns=["z", "w", "a", "b", "value_re", "value_im"],
                 rows=[[f"{req.z[0]},{req.z[1]}", f"{req.w[0]},{req.w[1]}", req.a, req.b,
                        _num(v.real), _num(v.imag)]])


# ------------------------------------------------------------------ tables

class QTableRequest(BaseModel):
    config: RunConfig = RunConfig()
    kmax: int = Field(8, ge=0, le=20)


def cmd_qtable(req: QTableRequest) -> Table:
    tol = req.config.tol or 1e-12
    try:
        rows = suites.qtable_rows(req.config.tau_c, req.kmax)
    except EllipticError as e:
        raise UsageError(str(e))
    out = [[k, l, _num(q.real), _num(q.imag), _num(r, 6), r < tol] for k, l, q, r in rows]
    ok = all(r[-1] for r in out)
    return Table(columns=["k", "l", "Q_re", "Q_im", "antisym_residual", "antisym_ok"],
                 rows=out, status="pass" if ok else "fail")


def _weight(w):
    if w == "hat2":
        return w
    try:
        k = int(w)
    except (TypeError, ValueError):
        raise UsageError(f"bad weight {w!r}")
    if k < 2 or k % 2:
        raise UsageError(f"weight must be even and >= 2 (or hat2), got {k}")
    return k


class EisensteinRequest(BaseModel):
    config: RunConfig = RunConfig()
    weights: List[Union[int, str]] = [2, 4, 6]


def cmd_eisenstein(req: EisensteinRequest) -> Table:
    ws = [_weight(w) for w in req.weights]
    ctx = req.config.context()
    rows = []
    for w in ws:
        v = ctx.eisenstein(w)
        rows.append([str(w), _num(v.real), _num(v.imag)])
    return Table(columns=["weight", "value_re", "value_im"], rows=rows)


# ------------------------------------------------------------------ trace

class TraceRequest(BaseModel):
    config: RunConfig = RunConfig()
    preset: Optional[Literal["unit", "dbeta-gamma"]] = None
    chain: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.preset is None) == (self.chain is None):
            raise ValueError("give exactly one of preset or chain")
        return self


def space_from_json(desc) -> Any:
    """``{"betagamma": N, "bc": M}``; either may be omitted."""
    if desc is None:
        desc = {"betagamma": 1}
    if not isinstance(desc, dict) or set(desc) - {"betagamma", "bc"}:
        raise SchemaError("space must be an object with keys betagamma and/or bc", "/space")
    parts = []
    for key, mk in (("betagamma", betagamma), ("bc", bc)):
        n = desc.get(key, 0)
        if not isinstance(n, int) or n < 0:
            raise SchemaError(f"{key} must be a nonnegative integer", f"/space/{key}")
        if n:
            parts.append(mk(n))
    if not parts:
        raise SchemaError("space is empty", "/space")
    return parts[0] if len(parts) == 1 else direct_sum(*parts)


def _word(space, w):
    return "*".join(format_var(space, s) for s in w) or "1"


def cmd_trace(req: TraceRequest) -> Table:
    cfg = req.config
    ctx = cfg.context()
    window = tuple(cfg.hbar_window)
    try:
        if req.preset == "unit":
            space = betagamma(1).with_cap(cfg.max_deriv)
            chain = unit_chain(space, ctx, window=window)
        elif req.preset == "dbeta-gamma":
            space = betagamma(1).with_cap(cfg.max_deriv)
            chain = insertion_chain(parse_fock("D b1*g1", space, ctx.imtau, window), ctx)
        else:
            desc = dict(req.chain)
            space = space_from_json(desc.pop("space", None)).with_cap(cfg.max_deriv)
            chain = make_chain(desc, space, ctx.imtau, window)
        poly = trace_poly(chain.poly, space, ctx, cfg.convention)
    except SchemaError as e:
        raise UsageError(f"schema error at {e}")
    except (ChainError, FockError, EllipticError) as e:
        raise UsageError(str(e))
    rows = []
    for (w, h, props), c in sorted(poly.terms.items(), key=lambda kv: (kv[0][1], repr(kv[0]))):
        c = complex(c)
        if abs(c) < 1e-300:
            continue
        rows.append(["element", _word(space, w), h, _num(c.real), _num(c.imag)])
    top = bv_integrate_top(poly, space, window=window)
    for h, c in sorted(top.coeffs.items()):
        c = complex(c)
        rows.append(["top_fermion", "", h, _num(c.real), _num(c.imag)])
    return Table(columns=["part", "monomial", "hbar_exp", "value_re", "value_im"], rows=rows)


# ------------------------------------------------------------------ selftest

class SelftestRequest(BaseModel):
    config: RunConfig = RunConfig()
    suite: str
    N: int = 2


def list_suites() -> List[str]:
    return list(suites.SUITES)


def cmd_selftest(req: SelftestRequest) -> Table:
    if req.suite not in suites.SUITES:
        raise UsageError(f"unknown suite {req.suite!r}; choose from {', '.join(suites.SUITES)}")
    cfg = req.config
    kw: Dict[str, Any] = {"seed": cfg.seed}
    if "tau" in cfg.model_fields_set:
        kw["tau"] = cfg.tau_c
    if cfg.tol is not None:
        kw["tol"] = cfg.tol
    if req.suite == "qme" and "convention" in cfg.model_fields_set:
        kw["conventions"] = (cfg.convention,)
    if req.suite == "stokes" and "convention" in cfg.model_fields_set:
        kw["convention"] = cfg.convention
    notes = []
    try:
        if req.suite == "witten":
            if req.N != 2:
                raise UsageError("the witten suite compares the N = 2 one-loop term")
            checks = suites.witten_suite(N=req.N, **({"tol": cfg.tol} if cfg.tol else {}))
            m = suites.witten_measurement(2j, req.N)
            notes = [f"measured E2hat coefficient: {m['coeff'].real:.12g}",
                     f"reference E2hat coefficient: {m['ref_coeff']:.12g}",
                     f"ratio measured/reference: {m['coeff'].real / m['ref_coeff']:.12g}"]
        else:
            checks = suites.run_suite(req.suite, **kw)
    except EllipticError as e:
        raise UsageError(str(e))
    rows = [[i, req.suite, c.name, _num(c.value, 6), c.tol, "PASS" if c.passed else "FAIL",
             c.detail] for i, c in enumerate(checks)]
    ok = all(c.passed for c in checks)
    return Table(columns=["item", "suite", "check", "value", "tol", "status", "detail"],
                 rows=rows, status="pass" if ok else "fail", notes=notes)
