"""HTTP benchmark service exposing the evaluator contract.

Stateless JSON API:

* ``GET  /v1/spaces``   - available parameterisations with their bounds
* ``POST /v1/evaluate`` - {parameterisation, x, z, seed} -> {f, n_star,
  mse, cost, fidelity_used, rtd:{theta, e}}
* ``GET  /v1/health``   - {status, version}

Identical requests return byte-identical responses.  Malformed bodies and
bound violations draw 400 with field-level messages, invalid geometry 422,
solver failures 500.  :class:`HttpEvaluator` is the matching client,
plugging a remote service into the campaign loop.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .campaign import ObjectiveEvaluator, ObjectiveOutcome, surrogate_objective_evaluator
from .flow import COIL_PATH, CROSS_SECTION, BoundsError, SolverError
from .geometry import GeometryError, NominalCoil
from .rtd import EmptyTraceError, RTDCurve


class EvaluateRequest(BaseModel):
    parameterisation: str
    x: list[float]
    z: list[float]
    seed: int = 0


def default_evaluators(nominal: NominalCoil = NominalCoil()) -> dict[str, ObjectiveEvaluator]:
    return {
        CROSS_SECTION: surrogate_objective_evaluator(CROSS_SECTION, nominal),
        COIL_PATH: surrogate_objective_evaluator(COIL_PATH, nominal),
    }


def outcome_to_payload(out: ObjectiveOutcome) -> dict:
    return {
        "f": float(out.f),
        "n_star": None if out.n_star is None else float(out.n_star),
        "mse": None if out.mse is None else float(out.mse),
        "cost": float(out.cost),
        "fidelity_used": [int(v) for v in out.fidelity_used],
        "rtd": None if out.rtd is None else {
            "theta": [float(v) for v in out.rtd.theta],
            "e": [float(v) for v in out.rtd.e],
        },
    }


def create_app(evaluators: dict[str, ObjectiveEvaluator] | None = None) -> FastAPI:
    evaluators = evaluators if evaluators is not None else default_evaluators()
    app = FastAPI(title="coil reactor benchmark", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        details = [
            {"field": ".".join(str(p) for p in err["loc"] if p != "body"),
             "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400,
                            content={"error": "malformed request", "details": details})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/v1/spaces")
    def spaces():
        out = []
        for name, ev in evaluators.items():
            out.append({
                "parameterisation": name,
                "x_bounds": [[float(a), float(b)] for a, b in np.asarray(ev.x_bounds)],
                "x_labels": list(ev.x_labels),
                "z_bounds": [[float(a), float(b)] for a, b in np.asarray(ev.z_bounds)],
                "z_labels": ["axial", "radial"],
            })
        return out

    @app.post("/v1/evaluate")
    def evaluate(req: EvaluateRequest):
        ev = evaluators.get(req.parameterisation)
        if ev is None:
            return JSONResponse(status_code=400, content={
                "error": "bounds violation",
                "details": [{"field": "parameterisation",
                             "message": f"unknown parameterisation {req.parameterisation!r}; "
                                        f"known: {sorted(evaluators)}"}],
            })
        if len(req.z) != 2:
            return JSONResponse(status_code=400, content={
                "error": "bounds violation",
                "details": [{"field": "z", "message": "z must be [axial, radial]"}],
            })
        try:
            out = ev.evaluate(np.asarray(req.x, dtype=float),
                              np.asarray(req.z, dtype=float), req.seed)
        except BoundsError as err:
            return JSONResponse(status_code=400, content={
                "error": "bounds violation",
                "details": [{"field": err.field or "x", "message": str(err)}],
            })
        except GeometryError as err:
            return JSONResponse(status_code=422, content={
                "error": "geometry invalid", "message": str(err)})
        except (SolverError, EmptyTraceError) as err:
            return JSONResponse(status_code=500, content={
                "error": "solver failure", "message": str(err)})
        return outcome_to_payload(out)

    return app


class HttpEvaluator:
    """Campaign evaluator backed by a remote benchmark service.

    ``client`` defaults to an ``httpx.Client``; pass one built on an ASGI
    transport to talk to an in-process app without sockets.
    """

    def __init__(self, base_url: str, parameterisation: str, client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.parameterisation = parameterisation
        self.client = client or httpx.Client(base_url=self.base_url, timeout=300.0)
        spaces = self.client.get(self.base_url + "/v1/spaces").json()
        match = [s for s in spaces if s["parameterisation"] == parameterisation]
        if not match:
            raise ValueError(f"service does not expose {parameterisation!r}")
        self._space = match[0]

    @property
    def x_bounds(self):
        return np.asarray(self._space["x_bounds"], dtype=float)

    @property
    def x_labels(self):
        return tuple(self._space["x_labels"])

    @property
    def z_bounds(self):
        return np.asarray(self._space["z_bounds"], dtype=float)

    def evaluate(self, x, z, seed: int = 0) -> ObjectiveOutcome:
        resp = self.client.post(self.base_url + "/v1/evaluate", json={
            "parameterisation": self.parameterisation,
            "x": [float(v) for v in np.asarray(x).ravel()],
            "z": [float(v) for v in np.asarray(z).ravel()],
            "seed": int(seed),
        })
        if resp.status_code == 422:
            raise GeometryError(resp.json().get("message", "geometry invalid"))
        if resp.status_code >= 500:
            raise SolverError(resp.json().get("message", "solver failure"))
        if resp.status_code != 200:
            raise ValueError(f"service rejected the request: {resp.text}")
        body = resp.json()
        rtd = body.get("rtd")
        return ObjectiveOutcome(
            f=body["f"], cost=body["cost"],
            fidelity_used=tuple(body["fidelity_used"]), seed=seed,
            n_star=body.get("n_star"), mse=body.get("mse"),
            rtd=None if rtd is None else RTDCurve(theta=np.asarray(rtd["theta"]),
                                                  e=np.asarray(rtd["e"])),
        )
