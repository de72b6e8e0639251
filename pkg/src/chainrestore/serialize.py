"""JSON encodings for matrices, scale-factor tables and restoring solutions."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .basis import Partition, subsystem_labels
from .hamiltonian import ChainSpec
from .restorer import ParameterLayout, RestoringSolution

SCHEMA_VERSION = 1


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


def matrix_to_json(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    n = len(rho).bit_length() - 1
    return {
        "labels": subsystem_labels(n),
        "entries": np.stack([rho.real, rho.imag], axis=-1),
        "modulus": np.abs(rho),
        "phase": np.angle(rho),
    }


def matrix_from_json(doc: dict) -> np.ndarray:
    pairs = np.asarray(doc["entries"], dtype=float)
    return pairs[..., 0] + 1j * pairs[..., 1]


def chain_to_json(spec: ChainSpec) -> dict:
    return {"n_total": spec.n_total, "nn_couplings": list(spec.nn_couplings), "coupling_mode": spec.coupling_mode.value}


def partition_to_json(p: Partition) -> dict:
    return {
        "n_total": p.n_total,
        "n_sender": p.n_sender,
        "n_receiver": p.n_receiver,
        "n_extended_receiver": p.n_extended_receiver,
        "receiver_reversed": p.receiver_reversed,
    }


def solution_to_json(sol: RestoringSolution, spec: ChainSpec, partition: Partition, t0: float, extra: dict | None = None) -> dict:
    layout = ParameterLayout(partition.n_extended_receiver, partition.n)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "chain": chain_to_json(spec),
        "partition": partition_to_json(partition),
        "t0": t0,
        "phi": {str(k): v for k, v in layout.split(sol.phi).items()},
        "lambdas": sol.lambdas.to_json(),
        "residual_norm": sol.residual_norm,
        "objective": sol.objective,
        "lambda_min": sol.lambda_min,
        "lambda_min_entry": sol.lambda_min_entry,
        "restart_index": sol.restart_index,
    }
    doc.update(extra or {})
    return doc


def load_solution(path: str | Path, partition: Partition) -> tuple[np.ndarray, dict]:
    """Flat phi vector and the raw document; checks the stored geometry."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    stored = doc.get("partition", {})
    if stored and stored != partition_to_json(partition):
        raise ValueError(f"{path}: solution was computed for partition {stored}")
    layout = ParameterLayout(partition.n_extended_receiver, partition.n)
    phi = layout.join({int(k): v for k, v in doc["phi"].items()})
    return phi, doc
