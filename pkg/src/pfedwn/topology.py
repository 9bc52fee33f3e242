"""Planar client layouts: one target client plus surrounding neighbors."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_positive
from .exceptions import ParameterError

TARGET_ID = 0
# a neighbor closer than this to the target is redrawn; the path-loss model
# is undefined below the reference distance
_MAX_RESAMPLE = 10_000


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple
    role: str = "neighbor"

    def to_dict(self):
        return {"id": self.id, "pos": [float(self.position[0]), float(self.position[1])]}


@dataclass(frozen=True)
class Topology:
    area: tuple
    target: Node
    neighbors: tuple = field(default_factory=tuple)
    seed: int = 0

    @property
    def n_neighbors(self):
        return len(self.neighbors)

    @property
    def neighbor_ids(self):
        return [n.id for n in self.neighbors]

    def node(self, node_id):
        if node_id == self.target.id:
            return self.target
        for n in self.neighbors:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def distances_to_target(self):
        """Map neighbor id -> distance to the target in meters."""
        return {n.id: distance(n.position, self.target.position) for n in self.neighbors}

    def to_dict(self):
        return {
            "area": [float(self.area[0]), float(self.area[1])],
            "seed": int(self.seed),
            "target": self.target.to_dict(),
            "neighbors": [n.to_dict() for n in self.neighbors],
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc):
        try:
            area = (float(doc["area"][0]), float(doc["area"][1]))
            target = Node(int(doc["target"]["id"]), tuple(map(float, doc["target"]["pos"])), "target")
            neighbors = tuple(
                Node(int(n["id"]), tuple(map(float, n["pos"])), "neighbor") for n in doc["neighbors"]
            )
            seed = int(doc.get("seed", 0))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise ParameterError(f"malformed topology document: {exc}") from exc
        ids = [target.id] + [n.id for n in neighbors]
        if len(set(ids)) != len(ids):
            raise ParameterError("node ids must be unique")
        return cls(area=area, target=target, neighbors=neighbors, seed=seed)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def distance(a, b):
    return math.hypot(float(a[0]) - float(b[0]), float(a[1]) - float(b[1]))


def _check_area(area):
    try:
        w, h = float(area[0]), float(area[1])
    except (TypeError, IndexError, ValueError):
        raise ParameterError(f"area must be a (width, height) pair, got {area!r}") from None
    if not (w > 0 and h > 0 and math.isfinite(w) and math.isfinite(h)):
        raise ParameterError(f"area dimensions must be positive, got {area!r}")
    return w, h


def sample_ppp(density, area, rng):
    """Homogeneous Poisson point process on ``[0, w] x [0, h]``.

    Returns an ``(n, 2)`` array; ``n`` is Poisson with mean ``density * w * h``.
    """
    density = check_positive(density, "density", strict=False)
    w, h = _check_area(area)
    count = rng.poisson(density * w * h)
    return np.column_stack([rng.uniform(0.0, w, count), rng.uniform(0.0, h, count)])


def _uniform_points(count, area, rng):
    w, h = area
    return np.column_stack([rng.uniform(0.0, w, count), rng.uniform(0.0, h, count)])


def _enforce_min_separation(points, center, min_sep, area, rng):
    points = np.array(points, dtype=np.float64, copy=True)
    for i in range(len(points)):
        for _ in range(_MAX_RESAMPLE):
            if distance(points[i], center) >= min_sep:
                break
            points[i] = _uniform_points(1, area, rng)[0]
        else:
            raise ParameterError("could not place a neighbor at least d0 from the target")
    return points


def build_topology(n_neighbors=None, density=None, area=(50.0, 50.0), seed=0,
                   target_mode="center", target_position=None, min_separation=1.0):
    """Place a target client and its neighbors.

    Exactly one of ``n_neighbors`` (fixed count, uniform placement) or
    ``density`` (Poisson point process, nodes per m^2) must be given.

    ``target_mode`` selects how the target is chosen:

    * ``"center"`` places the target at the area center (or ``target_position``)
      and draws the neighbors around it;
    * ``"nearest-center"`` draws all nodes (``n_neighbors + 1`` in fixed-count
      mode) and promotes the one closest to the center to target.

    Neighbors closer than ``min_separation`` (the reference distance) to the
    target are redrawn. In density mode the Poisson count is the first value
    drawn from ``default_rng(seed)``.
    """
    if (n_neighbors is None) == (density is None):
        raise ParameterError("give exactly one of n_neighbors or density")
    w, h = _check_area(area)
    seed = check_int(seed, "seed")
    rng = np.random.default_rng(seed)
    center = np.array([w / 2.0, h / 2.0]) if target_position is None else np.asarray(target_position, float)

    if target_mode == "center":
        if n_neighbors is not None:
            pts = _uniform_points(check_int(n_neighbors, "n_neighbors"), (w, h), rng)
        else:
            pts = sample_ppp(density, (w, h), rng)
        target_pos = center
    elif target_mode == "nearest-center":
        if n_neighbors is not None:
            pts = _uniform_points(check_int(n_neighbors, "n_neighbors") + 1, (w, h), rng)
        else:
            pts = sample_ppp(density, (w, h), rng)
        if len(pts) == 0:
            target_pos = center
        else:
            k = int(np.argmin(np.hypot(*(pts - center).T)))
            target_pos = pts[k]
            pts = np.delete(pts, k, axis=0)
    else:
        raise ParameterError(f"unknown target_mode {target_mode!r}")

    pts = _enforce_min_separation(pts, target_pos, min_separation, (w, h), rng)
    target = Node(TARGET_ID, (float(target_pos[0]), float(target_pos[1])), "target")
    neighbors = tuple(
        Node(i + 1, (float(p[0]), float(p[1])), "neighbor") for i, p in enumerate(pts)
    )
    return Topology(area=(w, h), target=target, neighbors=neighbors, seed=seed)
