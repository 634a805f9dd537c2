"""Closed convex cones of admissible portfolio positions.

Four variants cover the constraint families in scope:

* ``whole_space``  -- unconstrained positions,
* ``orthant``      -- no short selling, u >= 0 componentwise,
* ``half_space``   -- {u : a'u >= 0} for a fixed normal a,
* ``polyhedral``   -- {u : A u >= 0} for a row matrix A.

Every variant supports membership, membership of the polar cone
{y : y'u <= 0 for all u in the cone}, and Euclidean projection.
Projection onto a general polyhedral cone runs Dykstra's alternating
projection over the row half-spaces; the other variants have closed
forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .errors import (DimensionMismatch, InvalidCone, NoConvergence,
                     ZeroMeanExcess)

KINDS = ("whole_space", "orthant", "half_space", "polyhedral")

DEFAULT_TOL = 1e-9
DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_CYCLES = 10_000


@dataclass
class ConvexCone:
    """One cone, identified by ``kind`` and its defining data."""

    kind: str
    dim: int
    normal: Optional[np.ndarray] = None   # half_space
    rows: Optional[np.ndarray] = None     # polyhedral
    _origin_only: Optional[bool] = field(default=None, repr=False)

    # -- constructors -------------------------------------------------

    @classmethod
    def whole_space(cls, dim: int) -> "ConvexCone":
        return cls("whole_space", dim)

    @classmethod
    def orthant(cls, dim: int) -> "ConvexCone":
        return cls("orthant", dim)

    @classmethod
    def half_space(cls, normal) -> "ConvexCone":
        a = np.asarray(normal, dtype=float)
        if a.ndim != 1 or np.linalg.norm(a) == 0.0:
            raise InvalidCone("half_space needs a nonzero normal vector")
        return cls("half_space", a.shape[0], normal=a)

    @classmethod
    def polyhedral(cls, rows) -> "ConvexCone":
        a = np.atleast_2d(np.asarray(rows, dtype=float))
        if a.size == 0:
            raise InvalidCone("polyhedral cone needs at least one row")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0.0):
            raise InvalidCone("polyhedral rows must be nonzero")
        return cls("polyhedral", a.shape[1], rows=a)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "half_space":
            return {"type": "half_space", "normal": self.normal.tolist()}
        if self.kind == "polyhedral":
            return {"type": "polyhedral", "A": self.rows.tolist()}
        return {"type": self.kind}

    @classmethod
    def from_dict(cls, data: dict, dim: int) -> "ConvexCone":
        kind = data.get("type")
        if kind == "whole_space":
            return cls.whole_space(dim)
        if kind == "orthant":
            return cls.orthant(dim)
        if kind == "half_space":
            if "normal" not in data:
                raise InvalidCone("half_space fragment needs 'normal'")
            cone = cls.half_space(data["normal"])
        elif kind == "polyhedral":
            if "A" not in data:
                raise InvalidCone("polyhedral fragment needs 'A'")
            cone = cls.polyhedral(data["A"])
        else:
            raise InvalidCone(f"unknown cone type {kind!r}")
        if cone.dim != dim:
            raise InvalidCone(f"cone dimension {cone.dim} != market dimension {dim}")
        return cone

    # -- membership ----------------------------------------------------

    def contains(self, u, tol: float = DEFAULT_TOL) -> bool:
        """True iff every defining inequality holds within -tol slack."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {u.shape} != ({self.dim},)")
        if self.kind == "whole_space":
            return True
        if self.kind == "orthant":
            return bool(np.all(u >= -tol))
        if self.kind == "half_space":
            return bool(self.normal @ u >= -tol)
        return bool(np.all(self.rows @ u >= -tol))

    def polar_contains(self, y, tol: float = DEFAULT_TOL) -> bool:
        """Membership of the polar cone {y : y'u <= 0 on the cone}.

        whole_space -> {0}; orthant -> nonpositive orthant;
        half_space(a) -> {lambda a : lambda <= 0}; polyhedral(A) ->
        {-A' mu : mu >= 0}, tested by nonnegative least squares.
        """
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {y.shape} != ({self.dim},)")
        scale = max(1.0, float(np.linalg.norm(y)))
        if self.kind == "whole_space":
            return bool(np.max(np.abs(y), initial=0.0) <= tol)
        if self.kind == "orthant":
            return bool(np.all(y <= tol))
        if self.kind == "half_space":
            a = self.normal
            lam = (a @ y) / (a @ a)
            return bool(lam <= tol and np.max(np.abs(y - lam * a)) <= tol * scale)
        _, resid = nnls(self.rows.T, -y)
        return bool(resid <= tol * scale)

    # -- projection ------------------------------------------------------

    def project(self, v, tol: float = DYKSTRA_TOL,
                max_cycles: int = DYKSTRA_MAX_CYCLES) -> np.ndarray:
        """Euclidean projection of v onto the cone."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {v.shape} != ({self.dim},)")
        if self.kind == "whole_space":
            return v.copy()
        if self.kind == "orthant":
            return np.maximum(v, 0.0)
        if self.kind == "half_space":
            return _project_half_space(v, self.normal)
        return self._project_dykstra(v, tol, max_cycles)

    def _project_dykstra(self, v: np.ndarray, tol: float,
                         max_cycles: int) -> np.ndarray:
        rows = self.rows
        m = rows.shape[0]
        u = v.copy()
        increments = np.zeros((m, self.dim))
        for _ in range(max_cycles):
            start = u.copy()
            for i in range(m):
                y = u + increments[i]
                u = _project_half_space(y, rows[i])
                increments[i] = y - u
            if np.max(np.abs(u - start)) < tol:
                return u
        raise NoConvergence(
            f"Dykstra projection did not settle within {max_cycles} cycles",
            best=u)

    # -- structure -------------------------------------------------------

    def is_origin_only(self, tol: float = 1e-9) -> bool:
        """True iff the cone is the single point {0}.

        proj(v) = 0 exactly when v lies in the polar cone, so the cone
        reduces to the origin iff all of +-e_i project to zero (their
        convex conic hull being the whole space).
        """
        if self._origin_only is None:
            if self.kind in ("whole_space", "orthant", "half_space"):
                self._origin_only = False
            else:
                eye = np.eye(self.dim)
                self._origin_only = all(
                    np.max(np.abs(self.project(sign * eye[i]))) <= tol
                    for sign in (1.0, -1.0) for i in range(self.dim))
        return self._origin_only


def _project_half_space(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    inner = a @ v
    if inner >= 0.0:
        return v.copy()
    return v - (inner / (a @ a)) * a


def construct_tcie_cone(mean_excess, tol: float = 1e-12) -> ConvexCone:
    """Largest half-space cone whose constrained problem stays
    time-consistent in efficiency: {u : E[P]'u >= 0}.

    With this constraint the short-side recursion keeps K^- = 0 at every
    period, which is exactly the condition under which the precommitted
    efficient policy remains efficient at every intermediate date.
    """
    a = np.asarray(mean_excess, dtype=float)
    if np.max(np.abs(a), initial=0.0) <= tol:
        raise ZeroMeanExcess("mean excess return is numerically zero")
    return ConvexCone.half_space(a)
