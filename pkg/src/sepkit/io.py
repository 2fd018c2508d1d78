"""JSON formats for bodies, halfspace lists and directional distributions, plus presets."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .directional import DirectionalDistribution, make_axes, make_facet_measure, make_sigma
from .geometry import HPolytope, VPolytope

__all__ = [
    "load_body",
    "save_body",
    "body_to_dict",
    "body_from_dict",
    "hpolytope_to_list",
    "load_phi",
    "save_phi",
    "resolve_phi",
]


def body_to_dict(K: VPolytope) -> dict:
    return {"vertices": K.vertices.tolist()}


def body_from_dict(data: dict) -> VPolytope:
    if "vertices" not in data:
        raise ValueError("body JSON needs a 'vertices' list")
    V = np.asarray(data["vertices"], dtype=float)
    if V.ndim != 2 or V.shape[1] not in (2, 3) or not np.all(np.isfinite(V)):
        raise ValueError("vertices must be a list of finite 2D or 3D points")
    return VPolytope(V)


def load_body(path) -> VPolytope:
    with open(path) as fh:
        return body_from_dict(json.load(fh))


def save_body(K: VPolytope, path) -> None:
    # repr() of floats round-trips exactly through json
    Path(path).write_text(json.dumps(body_to_dict(K)) + "\n")


def hpolytope_to_list(P: HPolytope) -> list[dict]:
    """``[{"u": [...], "tau": t, "orientation": "<="}, ...]``"""
    return [{"u": (h.u + 0.0).tolist(), "tau": float(h.tau) + 0.0, "orientation": h.orientation} for h in P.halfspaces]


def load_phi(path) -> DirectionalDistribution:
    with open(path) as fh:
        return DirectionalDistribution.from_dict(json.load(fh))


def save_phi(phi: DirectionalDistribution, path) -> None:
    Path(path).write_text(json.dumps(phi.to_dict()) + "\n")


def resolve_phi(spec: str, dim: int | None = None) -> DirectionalDistribution:
    """Directional distribution from a preset string or a JSON file.

    Presets: ``axes2d``, ``axes3d``, ``sigma2d:<order>``, ``sigma3d:<order>``,
    ``facets:<bodyfile>``.  Anything else is read as a distribution file.
    """
    if spec in ("axes2d", "axes3d"):
        phi = make_axes(int(spec[4]))
    elif spec.startswith(("sigma2d:", "sigma3d:")):
        head, order = spec.split(":", 1)
        phi = make_sigma(int(head[5]), int(order))
    elif spec.startswith("facets:"):
        phi = make_facet_measure(load_body(spec.split(":", 1)[1]))
    else:
        phi = load_phi(spec)
    if dim is not None and phi.dim != dim:
        raise ValueError(f"distribution {spec!r} has dimension {phi.dim}, body has {dim}")
    return phi
