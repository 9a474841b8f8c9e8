"""Finitely supported measures, couplings and their disintegrations.

Everything here is immutable after construction.  Arrays handed out by the
classes are read-only views so that callers cannot break the invariants
established at load time.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "SchemaError",
    "Verdict",
    "DiscreteMeasure",
    "Coupling",
    "Kernel",
    "canonicalize",
    "load_measure",
    "load_problem",
    "Problem",
    "disintegrate",
    "validate_coupling",
    "barycenter_map",
    "product_coupling",
    "fingerprint",
]

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12
COUPLING_TOL = 1e-9


class SchemaError(ValueError):
    """Raised when a problem record violates the input schema.

    ``field`` names the offending entry (e.g. ``"mu.weights"``).
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True)
class Verdict:
    """Pass/fail outcome of a check, with the quantity that decided it."""

    passed: bool
    defect: float = 0.0
    reason: str = ""
    witness: Any = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        out = {"passed": bool(self.passed), "defect": float(self.defect)}
        if self.reason:
            out["reason"] = self.reason
        if self.details:
            out["details"] = self.details
        return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class DiscreteMeasure:
    """Probability measure with finitely many atoms in R^d.

    Construct through :func:`load_measure` (or :meth:`from_arrays`) to get
    normalization, duplicate merging and zero-atom removal.  The plain
    constructor trusts its input and only checks shapes.
    """

    __slots__ = ("_points", "_weights")

    def __init__(self, points, weights):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] != w.shape[0] or pts.shape[1] < 1:
            raise ValueError("points must be (n, d) with one weight per point")
        self._points = _readonly(pts)
        self._weights = _readonly(w)

    @classmethod
    def from_arrays(cls, points, weights) -> "DiscreteMeasure":
        measure, _ = canonicalize(points, weights)
        return measure

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.atleast_1d(np.asarray(point, dtype=float))[None, :], [1.0])

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls.from_arrays(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self._weights.shape[0]

    def mean(self) -> np.ndarray:
        return self._weights @ self._points

    def integrate(self, f) -> float:
        """Integral of ``f`` given either as values on the atoms or as a callable."""
        if callable(f):
            vals = np.array([f(p) for p in self._points], dtype=float)
        else:
            vals = np.asarray(f, dtype=float)
        return float(self._weights @ vals)

    def to_dict(self) -> dict:
        return {"points": self._points.tolist(), "weights": self._weights.tolist()}

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={len(self)}, d={self.dim})"


def canonicalize(points, weights, field_name: str = "measure"):
    """Normalize, merge duplicates and drop zero atoms.

    Returns the measure and, for every input atom, the index of the atom it
    was merged into (``-1`` if it was dropped).  The index map lets callers
    carry per-atom data such as cost matrices through canonicalization.
    """
    try:
        pts = np.array(points, dtype=float)
        w = np.array(weights, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(field_name, f"non-numeric entry ({exc})") from None
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise SchemaError(f"{field_name}.points", "dimension mismatch")
    if w.ndim != 1 or w.shape[0] != pts.shape[0]:
        raise SchemaError(f"{field_name}.weights", "dimension mismatch: one weight per point")
    if pts.shape[0] == 0:
        raise SchemaError(f"{field_name}.points", "empty support")
    if not np.all(np.isfinite(pts)):
        raise SchemaError(f"{field_name}.points", "non-finite number")
    if not np.all(np.isfinite(w)):
        raise SchemaError(f"{field_name}.weights", "non-finite number")
    if np.any(w < 0):
        raise SchemaError(f"{field_name}.weights", "negative weight")
    total = w.sum()
    if total <= 0:
        raise SchemaError(f"{field_name}.weights", "zero total mass")
    w = w / total

    index = np.full(pts.shape[0], -1, dtype=int)
    kept_pts: list[np.ndarray] = []
    kept_w: list[float] = []
    for k in range(pts.shape[0]):
        if w[k] <= 0.0:
            continue
        for j, q in enumerate(kept_pts):
            if np.max(np.abs(q - pts[k])) <= MERGE_TOL:
                kept_w[j] += w[k]
                index[k] = j
                break
        else:
            index[k] = len(kept_pts)
            kept_pts.append(pts[k])
            kept_w.append(w[k])
    kw = np.array(kept_w)
    kw = kw / kw.sum()
    return DiscreteMeasure(np.array(kept_pts), kw), index


def load_measure(doc: Mapping[str, Any], field_name: str = "measure") -> DiscreteMeasure:
    """Build a canonical :class:`DiscreteMeasure` from a ``{"points", "weights"}`` record."""
    if not isinstance(doc, Mapping):
        raise SchemaError(field_name, "expected an object with 'points' and 'weights'")
    for key in ("points", "weights"):
        if key not in doc:
            raise SchemaError(f"{field_name}.{key}", "missing")
    pts = doc["points"]
    if isinstance(pts, Sequence) and pts and all(isinstance(p, Sequence) for p in pts):
        lengths = {len(p) for p in pts}
        if len(lengths) != 1:
            raise SchemaError(f"{field_name}.points", "dimension mismatch between points")
    measure, _ = canonicalize(pts, doc["weights"], field_name)
    return measure


class Coupling:
    """Nonnegative mass matrix with the marginals of ``mu`` (rows) and ``nu`` (columns).

    The constructor does not enforce the marginal constraints; use
    :func:`validate_coupling` for that.  Solvers return couplings that pass
    it at the default tolerance.
    """

    __slots__ = ("mu", "nu", "_mass")

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, mass):
        m = np.asarray(mass, dtype=float)
        if m.shape != (len(mu), len(nu)):
            raise ValueError(f"mass has shape {m.shape}, expected {(len(mu), len(nu))}")
        self.mu = mu
        self.nu = nu
        self._mass = _readonly(m)

    @property
    def mass(self) -> np.ndarray:
        return self._mass

    @property
    def shape(self) -> tuple[int, int]:
        return self._mass.shape

    def kernel(self) -> "Kernel":
        return disintegrate(self)

    def __repr__(self) -> str:
        return f"Coupling(shape={self.shape})"


@dataclass(frozen=True)
class Kernel:
    """Row-stochastic matrix: row ``i`` is the conditional law given atom ``i`` of mu."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _readonly(self.rows))

    def __getitem__(self, i: int) -> np.ndarray:
        return self.rows[i]

    def __len__(self) -> int:
        return self.rows.shape[0]


def product_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    return Coupling(mu, nu, np.outer(mu.weights, nu.weights))


def disintegrate(c: Coupling) -> Kernel:
    return Kernel(c.mass / c.mu.weights[:, None])


def validate_coupling(c: Coupling, tol: float = COUPLING_TOL) -> Verdict:
    """Check nonnegativity, both marginals and total mass at tolerance ``tol``."""
    mass = c.mass
    if mass.shape != (len(c.mu), len(c.nu)):
        raise ValueError("coupling shape does not match its marginals")
    row_defect = float(np.max(np.abs(mass.sum(axis=1) - c.mu.weights)))
    col_defect = float(np.max(np.abs(mass.sum(axis=0) - c.nu.weights)))
    total_defect = abs(float(mass.sum()) - 1.0)
    neg = float(-min(mass.min(), 0.0))
    defect = max(row_defect, col_defect, total_defect)
    details = {"row_defect": row_defect, "col_defect": col_defect, "negativity": neg}
    if neg > tol:
        return Verdict(False, max(defect, neg), "negativity", details=details)
    if defect > tol:
        return Verdict(False, defect, "marginal", details=details)
    return Verdict(True, defect, details=details)


def barycenter_map(c: Coupling) -> np.ndarray:
    """Barycenter of every kernel row, as an ``(m, d)`` array."""
    return disintegrate(c).rows @ c.nu.points


def _canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(mu: DiscreteMeasure, nu: DiscreteMeasure, cost_doc: Mapping | None) -> str:
    """Short stable hash identifying an instance (marginals plus cost record)."""
    payload = {
        "mu": [[repr(float(v)) for v in p] for p in mu.points],
        "mu_w": [repr(float(v)) for v in mu.weights],
        "nu": [[repr(float(v)) for v in p] for p in nu.points],
        "nu_w": [repr(float(v)) for v in nu.weights],
        "cost": cost_doc if cost_doc is not None else {},
    }
    return hashlib.sha256(_canonical_json(payload).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Problem:
    """A parsed problem record: marginals plus the (canonicalized) cost record."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    cost: dict
    t: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.mu, self.nu, self.cost)


def _matrix(doc, field_name: str, shape: tuple[int, int]) -> np.ndarray:
    try:
        a = np.array(doc, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(field_name, "non-numeric entry") from None
    if a.shape != shape:
        raise SchemaError(field_name, f"dimension mismatch: expected {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SchemaError(field_name, "non-finite number")
    return a


def _regroup(a: np.ndarray, row_idx, col_idx, m: int, n: int, how: str, field_name: str):
    out = np.zeros((m, n))
    seen = np.zeros((m, n), dtype=bool)
    for r, i in enumerate(row_idx):
        if i < 0:
            continue
        for s, j in enumerate(col_idx):
            if j < 0:
                continue
            if how == "sum":
                out[i, j] += a[r, s]
            elif seen[i, j]:
                if abs(out[i, j] - a[r, s]) > 1e-12 * (1 + abs(a[r, s])):
                    raise SchemaError(field_name, "merged duplicate atoms carry different costs")
            else:
                out[i, j] = a[r, s]
                seen[i, j] = True
    return out


def load_problem(doc: Mapping[str, Any]) -> Problem:
    """Parse a JSON problem record.

    Cost matrices are carried through duplicate merging and zero-atom
    removal: classical rows/columns of merged atoms must agree, entropic
    reference masses are summed.
    """
    if not isinstance(doc, Mapping):
        raise SchemaError("problem", "expected a JSON object")
    for key in ("mu", "nu"):
        if key not in doc:
            raise SchemaError(key, "missing")
        if not isinstance(doc[key], Mapping):
            raise SchemaError(key, "expected an object with 'points' and 'weights'")
        for sub in ("points", "weights"):
            if sub not in doc[key]:
                raise SchemaError(f"{key}.{sub}", "missing")
    # run the point-list checks of load_measure, then keep the index maps
    load_measure(doc["mu"], "mu")
    load_measure(doc["nu"], "nu")
    mu, mu_idx = canonicalize(doc["mu"]["points"], doc["mu"]["weights"], "mu")
    nu, nu_idx = canonicalize(doc["nu"]["points"], doc["nu"]["weights"], "nu")
    t = doc.get("t", 1)
    if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t) or t < 1:
        raise SchemaError("t", "moment index must be a finite number >= 1")

    cost = dict(doc.get("cost") or {})
    kind = cost.get("kind")
    raw_m, raw_n = len(mu_idx), len(nu_idx)
    if kind == "classical":
        if "matrix" not in cost:
            raise SchemaError("cost.matrix", "missing")
        a = _matrix(cost["matrix"], "cost.matrix", (raw_m, raw_n))
        cost["matrix"] = _regroup(a, mu_idx, nu_idx, len(mu), len(nu), "same", "cost.matrix").tolist()
    elif kind == "entropic":
        if "gamma" not in cost:
            raise SchemaError("cost.gamma", "missing")
        a = _matrix(cost["gamma"], "cost.gamma", (raw_m, raw_n))
        if np.any(a <= 0):
            raise SchemaError("cost.gamma", "reference masses must be strictly positive")
        cost["gamma"] = _regroup(a, mu_idx, nu_idx, len(mu), len(nu), "sum", "cost.gamma").tolist()
    elif kind == "monopoly_icx":
        if cost.get("theta", "l2") not in ("l1", "l2"):
            raise SchemaError("cost.theta", "expected 'l1' or 'l2'")
        cost.setdefault("theta", "l2")
    elif kind in ("barycentric", None):
        pass
    else:
        raise SchemaError("cost.kind", f"unknown cost kind {kind!r}")
    if mu.dim != nu.dim and kind in ("barycentric", "monopoly_icx", None):
        raise SchemaError("nu.points", "dimension mismatch between mu and nu")
    extra = {k: v for k, v in doc.items() if k not in ("mu", "nu", "cost", "t")}
    return Problem(mu=mu, nu=nu, cost=cost, t=float(t), extra=extra)
