"""Campaign persistence: a versioned, diff-able JSON checkpoint schema.

One campaign is one JSON document.  Serialisation is lossless for floats
(shortest round-trip decimals) and byte-deterministic (sorted keys, fixed
indentation), so identical campaigns produce identical files and a resumed
campaign can be compared byte for byte against an uninterrupted one.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .campaign import CampaignConfig, CampaignState, DesignSpace, Evaluation
from .gp import GPModel, KernelSpec
from .rtd import RTDCurve

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Unknown or incompatible checkpoint schema."""


def _floats(seq) -> list:
    return [float(v) for v in np.asarray(seq, dtype=float).ravel()]


def space_to_dict(space: DesignSpace) -> dict:
    return {
        "x_bounds": [[float(a), float(b)] for a, b in space.x_bounds],
        "x_labels": list(space.x_labels),
        "z_bounds": [[float(a), float(b)] for a, b in space.z_bounds],
        "z_labels": list(space.z_labels),
    }


def space_from_dict(d: dict) -> DesignSpace:
    return DesignSpace(
        x_bounds=np.asarray(d["x_bounds"], dtype=float),
        x_labels=tuple(d["x_labels"]),
        z_bounds=np.asarray(d["z_bounds"], dtype=float),
        z_labels=tuple(d["z_labels"]),
    )


def config_to_dict(config: CampaignConfig) -> dict:
    return {
        "beta": config.beta,
        "p_c": config.p_c,
        "epsilon_gamma": config.epsilon_gamma,
        "doe_size": config.doe_size,
        "max_iterations": config.max_iterations,
        "gp_restarts": config.gp_restarts,
        "acq_starts": config.acq_starts,
        "acq_sweeps": config.acq_sweeps,
        "acq_grid": config.acq_grid,
        "stop_check_starts": config.stop_check_starts,
        "keep_raw": config.keep_raw,
        "min_consecutive_failures": config.min_consecutive_failures,
    }


def config_from_dict(d: dict) -> CampaignConfig:
    return CampaignConfig(**d)


def curve_to_dict(curve: RTDCurve | None) -> dict | None:
    if curve is None:
        return None
    return {"theta": _floats(curve.theta), "e": _floats(curve.e)}


def curve_from_dict(d: dict | None) -> RTDCurve | None:
    if d is None:
        return None
    return RTDCurve(theta=np.asarray(d["theta"]), e=np.asarray(d["e"]))


def evaluation_to_dict(e: Evaluation) -> dict:
    return {
        "x": _floats(e.x),
        "z": [int(v) for v in e.z],
        "f": None if e.f is None else float(e.f),
        "cost": float(e.cost),
        "n_star": None if e.n_star is None else float(e.n_star),
        "mse": None if e.mse is None else float(e.mse),
        "rtd": curve_to_dict(e.rtd),
        "seed": int(e.seed),
        "clock": float(e.clock),
        "failed": bool(e.failed),
        "error": e.error,
        "raw": None if e.raw is None else [_floats(e.raw[0]), _floats(e.raw[1])],
    }


def evaluation_from_dict(d: dict) -> Evaluation:
    raw = d.get("raw")
    return Evaluation(
        x=np.asarray(d["x"], dtype=float),
        z=tuple(d["z"]),
        f=d["f"],
        cost=d["cost"],
        n_star=d.get("n_star"),
        mse=d.get("mse"),
        rtd=curve_from_dict(d.get("rtd")),
        seed=d.get("seed", 0),
        clock=d.get("clock", 0.0),
        failed=d.get("failed", False),
        error=d.get("error"),
        raw=None if raw is None else (np.asarray(raw[0]), np.asarray(raw[1])),
    )


def campaign_to_dict(state: CampaignState) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "campaign",
        "parameterisation": state.parameterisation,
        "space": space_to_dict(state.space),
        "config": config_to_dict(state.config),
        "budget_total": float(state.budget_total),
        "budget_spent": float(state.budget_spent),
        "rng_seed": int(state.rng_seed),
        "n_doe": int(state.n_doe),
        "history": [evaluation_to_dict(e) for e in state.history],
        "gp_snapshots": state.gp_snapshots,
        "incumbent_index": state.incumbent_index,
        "complete": bool(state.complete),
        "warnings": list(state.warnings),
        "predecessor": state.predecessor,
    }


def campaign_from_dict(doc: dict) -> CampaignState:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported checkpoint schema version: {version!r}")
    state = CampaignState(
        space=space_from_dict(doc["space"]),
        parameterisation=doc["parameterisation"],
        config=config_from_dict(doc["config"]),
        budget_total=doc["budget_total"],
        rng_seed=doc["rng_seed"],
        n_doe=doc["n_doe"],
        history=[evaluation_from_dict(d) for d in doc["history"]],
        gp_snapshots=doc["gp_snapshots"],
        incumbent_index=doc["incumbent_index"],
        complete=doc["complete"],
        warnings=list(doc["warnings"]),
        predecessor=doc.get("predecessor"),
    )
    return state


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_checkpoint(state: CampaignState, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(campaign_to_dict(state)))


def load_checkpoint(path) -> CampaignState:
    with open(path) as fh:
        return campaign_from_dict(json.load(fh))


def gp_model_to_dict(model: GPModel) -> dict:
    spec = model.kernel
    return {
        "kernel": {
            "kind": spec.kind,
            "lengthscales": None if spec.lengthscales is None else list(spec.lengthscales),
            "signal_variance": spec.signal_variance,
            "tau": spec.tau,
        },
        "train_inputs": [_floats(row) for row in np.atleast_2d(model.train_inputs)],
        "train_targets": _floats(model.train_targets),
        "noise_variance": float(model.noise_variance),
        "prior_mean": float(model.prior_mean),
    }


def gp_model_from_dict(d: dict) -> GPModel:
    k = d["kernel"]
    spec = KernelSpec(
        kind=k["kind"],
        lengthscales=None if k["lengthscales"] is None else tuple(k["lengthscales"]),
        signal_variance=k["signal_variance"],
        tau=k["tau"],
    )
    inputs = np.asarray(d["train_inputs"], dtype=float)
    if inputs.size == 0:
        inputs = inputs.reshape(0, spec.dim)
    return GPModel(
        kernel=spec,
        train_inputs=inputs,
        train_targets=np.asarray(d["train_targets"], dtype=float),
        noise_variance=d["noise_variance"],
        prior_mean=d["prior_mean"],
    )


def write_iteration_csv(state: CampaignState, path) -> None:
    """Per-evaluation trace: iteration, fidelities, cost, f, best-so-far.

    Design-of-experiments rows carry negative iteration indices.
    """
    best = state.best_so_far()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "axial", "radial", "cost", "f", "best_so_far"])
    for i, e in enumerate(state.history):
        writer.writerow([
            i - state.n_doe, e.z[0], e.z[1], repr(float(e.cost)),
            "" if e.f is None else repr(float(e.f)),
            "" if not np.isfinite(best[i]) else repr(float(best[i])),
        ])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
