"""Finitely supported measures, couplings, transport constraints and costs.

Atoms are stored as a 1-D float array in dimension one and as a ``(k, d)``
array otherwise. All objects are treated as immutable once built.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import (
    AllZeroWeights,
    DimensionMismatch,
    NegativeWeight,
    ValidationError,
    ZeroMassRow,
)

BALL_TOL = 1e-12
ROW_SUM_TOL = 1e-10


def as_points(atoms) -> np.ndarray:
    """View ``atoms`` as a ``(k, d)`` array."""
    a = np.asarray(atoms, dtype=float)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a[:, None]
    return a


def _squeeze(points: np.ndarray) -> np.ndarray:
    return points[:, 0].copy() if points.shape[1] == 1 else points


def _key(atom) -> float | tuple:
    a = np.asarray(atom, dtype=float).ravel()
    return float(a[0]) if a.size == 1 else tuple(a.tolist())


def single(x) -> np.ndarray:
    """Atom array holding the single point ``x``."""
    x = np.asarray(x, dtype=float)
    return x.reshape(1) if x.ndim == 0 else x.reshape(1, -1)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many atoms."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 0:
            atoms = atoms.reshape(1)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.size:
            raise DimensionMismatch(
                f"{atoms.shape[0]} atoms but {weights.size} weights"
            )
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return 1 if self.atoms.ndim == 1 else self.atoms.shape[1]

    @property
    def points(self) -> np.ndarray:
        return as_points(self.atoms)

    def __len__(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.atoms.shape == other.atoms.shape
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.weights, other.weights)
        )

    def integrate(self, f) -> float:
        """``sum_i w_i f(x_i)`` where ``f`` is a callable or a value array."""
        vals = f(self.atoms) if callable(f) else np.asarray(f, dtype=float)
        return float(self.weights @ vals)

    def mean(self):
        m = self.weights @ self.points
        return float(m[0]) if self.dim == 1 else m

    def index_of(self, atom) -> int:
        hits = np.flatnonzero(np.all(self.points == as_points(single(atom)), axis=1))
        if hits.size == 0:
            raise KeyError(f"{atom!r} is not an atom")
        return int(hits[0])

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return validate(cls(single(x), [1.0]))

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.asarray(atoms, dtype=float)
        return validate(cls(atoms, np.ones(atoms.shape[0])))


def validate(measure: DiscreteMeasure) -> DiscreteMeasure:
    """Normalise, merge duplicate atoms, drop zero weights and sort by atom.

    Duplicates are detected by exact equality. Idempotent.
    """
    w = measure.weights
    if np.any(~np.isfinite(w)):
        raise ValidationError("weights must be finite")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight {w[w < 0][0]!r}")
    total = w.sum()
    if not total > 0:
        raise AllZeroWeights("all weights are zero")
    pts = measure.points
    if not np.all(np.isfinite(pts)):
        raise ValidationError("atoms must be finite")
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    merged = np.zeros(uniq.shape[0])
    np.add.at(merged, inverse.ravel(), w)
    keep = merged > 0
    uniq, merged = uniq[keep], merged[keep]
    total = math.fsum(merged)
    # already-normalised input is left bit-identical, which makes this idempotent
    if abs(total - 1.0) > 4 * np.finfo(float).eps:
        merged = merged / total
    atoms = _squeeze(uniq) if measure.dim == 1 else uniq
    return DiscreteMeasure(atoms, merged)


def measure(atoms, weights=None) -> DiscreteMeasure:
    """Build and validate a measure; uniform weights when ``weights`` is None."""
    atoms = np.asarray(atoms, dtype=float)
    if atoms.ndim == 0:
        atoms = atoms.reshape(1)
    if weights is None:
        weights = np.ones(atoms.shape[0])
    return validate(DiscreteMeasure(atoms, weights))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint measure on ``source.atoms x target_support``.

    ``matrix[i, j]`` is the mass sent from ``source.atoms[i]`` to
    ``target_support[j]``; row sums must match the source weights.
    """

    source: DiscreteMeasure
    target_support: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.target_support, dtype=float)
        P = np.asarray(self.matrix, dtype=float)
        if P.ndim != 2 or P.shape != (len(self.source), Y.shape[0]):
            raise DimensionMismatch(
                f"matrix shape {P.shape} does not match "
                f"({len(self.source)}, {Y.shape[0]})"
            )
        if np.any(P < -ROW_SUM_TOL):
            raise NegativeWeight("coupling has negative mass")
        err = np.abs(P.sum(axis=1) - self.source.weights)
        if err.size and err.max() > ROW_SUM_TOL:
            raise ValidationError(
                f"row sums differ from source weights by {err.max():.3g}"
            )
        object.__setattr__(self, "target_support", Y)
        object.__setattr__(self, "matrix", P)

    @classmethod
    def from_matrix(cls, source_atoms, target_atoms, matrix) -> "Coupling":
        """Build a coupling whose source measure is read off the row sums."""
        P = np.asarray(matrix, dtype=float)
        rows = P.sum(axis=1)
        if np.any(rows <= 0):
            raise ZeroMassRow("every source row needs positive mass")
        src = np.asarray(source_atoms, dtype=float)
        order = np.lexsort(as_points(src).T[::-1])
        src, P, rows = src[order], P[order], rows[order]
        return cls(DiscreteMeasure(src, rows / rows.sum()), target_atoms, P / rows.sum())

    @property
    def target_points(self) -> np.ndarray:
        return as_points(self.target_support)

    def kernel(self, i: int) -> np.ndarray:
        """Disintegration ``pi(. | X_0 = x_i)`` as a probability vector."""
        mass = self.matrix[i].sum()
        if mass <= 0:
            raise ZeroMassRow(f"row {i} has no mass")
        return self.matrix[i] / mass

    def target_weights(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def target_marginal(self) -> DiscreteMeasure:
        return validate(DiscreteMeasure(self.target_support, self.target_weights().clip(min=0)))

    def support(self, tol: float = 1e-10) -> list[tuple[int, int]]:
        return [tuple(ij) for ij in np.argwhere(self.matrix > tol)]


def barycenter_of_row(coupling: Coupling, i: int):
    """Conditional mean of the target given ``X_0 = x_i``."""
    row = coupling.matrix[i]
    mass = row.sum()
    if not mass > 0:
        raise ZeroMassRow(f"row {i} has no mass")
    # normalise first: a point-mass kernel is then exactly 1.0 at its atom
    bc = (row / mass) @ coupling.target_points
    return float(bc[0]) if bc.size == 1 and coupling.source.dim == 1 else bc


class ConstraintKind(str, enum.Enum):
    MARTINGALE_BALL = "martingale_ball"
    MARTINGALE = "martingale"
    CAPACITY = "capacity"
    UNCONSTRAINED = "unconstrained"

    @classmethod
    def parse(cls, value) -> "ConstraintKind":
        if isinstance(value, cls):
            return value
        norm = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "martingaleball": cls.MARTINGALE_BALL,
            "ball": cls.MARTINGALE_BALL,
            "capacitybound": cls.CAPACITY,
            "capacity_bound": cls.CAPACITY,
            "none": cls.UNCONSTRAINED,
        }
        if norm in aliases:
            return aliases[norm]
        return cls(norm)


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Admissible kernel sets ``Gamma(x)`` restricted to finitely many targets.

    ``radius`` is either a single number (applied to every source point) or a
    mapping from source atom to radius. For the capacity kind, ``reference``
    and ``bound`` are ``(len(sources), len(targets))`` tables indexed by
    ``sources`` and ``targets``. ``targets=None`` means "use the target
    measure's support".
    """

    kind: ConstraintKind
    radius: float | Mapping | None = None
    targets: np.ndarray | None = None
    reference: np.ndarray | None = None
    bound: np.ndarray | None = None
    sources: np.ndarray | None = None

    def __post_init__(self):
        kind = ConstraintKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.targets is not None:
            Y = np.asarray(self.targets, dtype=float)
            if Y.shape[0] == 0:
                raise ValidationError("candidate targets must be nonempty")
            object.__setattr__(self, "targets", Y)
        if kind is ConstraintKind.MARTINGALE_BALL:
            if self.radius is None:
                raise ValidationError("martingale_ball needs a radius")
            if isinstance(self.radius, Mapping):
                table = {_key(k): float(v) for k, v in self.radius.items()}
                if any(not v >= 0 for v in table.values()):
                    raise ValidationError("radii must be nonnegative")
                object.__setattr__(self, "radius", table)
            else:
                r = float(self.radius)
                if not r >= 0:
                    raise ValidationError("radius must be nonnegative")
                object.__setattr__(self, "radius", r)
        if kind is ConstraintKind.CAPACITY:
            if self.reference is None or self.bound is None or self.sources is None or self.targets is None:
                raise ValidationError("capacity constraint needs reference, bound, sources and targets")
            R = np.asarray(self.reference, dtype=float)
            a = np.asarray(self.bound, dtype=float)
            S = np.asarray(self.sources, dtype=float)
            shape = (S.shape[0], self.targets.shape[0])
            if R.shape != shape or a.shape != shape:
                raise DimensionMismatch(f"capacity tables must have shape {shape}")
            if np.any(R < 0) or np.any(np.abs(R.sum(axis=1) - 1) > 1e-9):
                raise ValidationError("reference kernel rows must be probability vectors")
            if np.any(np.isnan(a)) or np.any(a < 0):
                raise ValidationError("capacity bound must be nonnegative")
            object.__setattr__(self, "reference", R)
            object.__setattr__(self, "bound", a)
            object.__setattr__(self, "sources", S)

    # constructors -----------------------------------------------------
    @classmethod
    def martingale_ball(cls, radius, targets=None) -> "ConstraintSpec":
        return cls(ConstraintKind.MARTINGALE_BALL, radius=radius, targets=targets)

    @classmethod
    def martingale(cls, targets=None) -> "ConstraintSpec":
        return cls(ConstraintKind.MARTINGALE, targets=targets)

    @classmethod
    def unconstrained(cls, targets=None) -> "ConstraintSpec":
        return cls(ConstraintKind.UNCONSTRAINED, targets=targets)

    @classmethod
    def capacity(cls, reference, bound, sources, targets) -> "ConstraintSpec":
        return cls(ConstraintKind.CAPACITY, reference=reference, bound=bound,
                   sources=sources, targets=targets)

    # queries ----------------------------------------------------------
    @property
    def is_martingale(self) -> bool:
        return self.kind in (ConstraintKind.MARTINGALE, ConstraintKind.MARTINGALE_BALL)

    def with_targets(self, targets) -> "ConstraintSpec":
        return ConstraintSpec(self.kind, self.radius, targets, self.reference, self.bound, self.sources)

    def candidate_targets(self, beta: DiscreteMeasure | None = None) -> np.ndarray:
        if self.targets is not None:
            return self.targets
        if beta is None:
            raise ValidationError("no candidate targets and no target measure given")
        return beta.atoms

    def radius_at(self, x) -> float:
        if self.kind is ConstraintKind.MARTINGALE_BALL:
            if isinstance(self.radius, dict):
                k = _key(x)
                if k not in self.radius:
                    raise KeyError(f"no radius for source point {x!r}")
                return self.radius[k]
            return self.radius
        return math.inf

    def source_row(self, x) -> int:
        hits = np.flatnonzero(np.all(as_points(self.sources) == as_points(single(x)), axis=1))
        if hits.size == 0:
            raise KeyError(f"{x!r} is not a source of the capacity table")
        return int(hits[0])

    def cell_caps(self, x, targets) -> np.ndarray:
        """Upper bound on kernel mass at each target (capacity kind)."""
        i = self.source_row(x)
        col = _align(self.targets, targets)
        R = self.reference[i, col]
        # an unbounded ratio over a null reference cell still allows no mass
        return np.multiply(self.bound[i, col], R, out=np.zeros(R.shape), where=R > 0)

    def admissible_mask(self, x, targets) -> np.ndarray:
        """Targets that an admissible kernel from ``x`` may charge."""
        Y = as_points(targets)
        if self.kind is ConstraintKind.MARTINGALE_BALL:
            r = self.radius_at(x)
            dist = np.linalg.norm(Y - as_points(single(x)), axis=1)
            return dist <= r + BALL_TOL
        if self.kind is ConstraintKind.CAPACITY:
            return self.cell_caps(x, targets) > 0
        return np.ones(Y.shape[0], dtype=bool)

    def kernel_violation(self, x, targets, q, tol: float = 1e-9) -> str | None:
        """Describe why probability vector ``q`` is not in ``Gamma(x)``, or None."""
        q = np.asarray(q, dtype=float)
        if np.any(q < -tol) or abs(q.sum() - 1) > tol:
            return "not a probability vector"
        mask = self.admissible_mask(x, targets)
        if np.any(q[~mask] > tol):
            return "mass outside the admissible set"
        if self.is_martingale:
            bc = q @ as_points(targets)
            if np.max(np.abs(bc - as_points(single(x)).ravel())) > tol:
                return "barycenter differs from source"
        if self.kind is ConstraintKind.CAPACITY:
            caps = self.cell_caps(x, targets)
            if np.any(q > caps + tol * np.maximum(1.0, caps)):
                return "capacity exceeded"
        return None


def _align(reference: np.ndarray, wanted) -> np.ndarray:
    ref = as_points(reference)
    out = []
    for p in as_points(wanted):
        hits = np.flatnonzero(np.all(ref == p, axis=1))
        if hits.size == 0:
            raise KeyError(f"target {p} not in table")
        out.append(int(hits[0]))
    return np.asarray(out, dtype=int)


class CostKind(str, enum.Enum):
    TABLE = "table"
    DIFFERENCE = "difference"


_NAMED_H: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "exp": lambda z, p: np.exp(z),
    "power": lambda z, p: np.abs(z) ** p,
    "abs": lambda z, p: np.abs(z),
    "square": lambda z, p: z * z,
    "cube": lambda z, p: z ** 3,
    "zero": lambda z, p: np.zeros_like(z),
}

# h with h' strictly convex (needed for left-monotonicity of optimizers)
_STRICT_H_PRIME = {"exp", "cube"}


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Pointwise cost ``C(x, y)``.

    ``difference`` costs evaluate ``h(y - x)`` for a named ``h``
    (``exp``, ``power`` with exponent ``p``, ``abs``, ``square``, ``cube``,
    ``zero``) or for ``custom`` samples ``{offset: value}``. ``table`` costs
    look up ``table[i, j]`` by exact source/target atom.
    """

    kind: CostKind
    h: str | None = None
    p: float = 1.0
    samples: Mapping | None = None
    table: np.ndarray | None = None
    sources: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __post_init__(self):
        kind = CostKind(self.kind) if not isinstance(self.kind, CostKind) else self.kind
        object.__setattr__(self, "kind", kind)
        if kind is CostKind.DIFFERENCE:
            if self.h == "custom":
                if not self.samples:
                    raise ValidationError("custom h needs samples")
                object.__setattr__(self, "samples", {float(k): float(v) for k, v in self.samples.items()})
            elif self.h not in _NAMED_H:
                raise ValidationError(f"unknown h {self.h!r}")
        else:
            if self.table is None or self.sources is None or self.targets is None:
                raise ValidationError("table cost needs table, sources and targets")
            T = np.asarray(self.table, dtype=float)
            if T.shape != (len(self.sources), len(self.targets)):
                raise DimensionMismatch("cost table shape mismatch")
            if not np.all(np.isfinite(T)):
                raise ValidationError("cost values must be finite")
            object.__setattr__(self, "table", T)
            object.__setattr__(self, "sources", np.asarray(self.sources, dtype=float))
            object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))

    @classmethod
    def difference(cls, h: str = "exp", p: float = 1.0, samples=None) -> "CostSpec":
        return cls(CostKind.DIFFERENCE, h=h, p=p, samples=samples)

    @classmethod
    def from_table(cls, table, sources, targets) -> "CostSpec":
        return cls(CostKind.TABLE, table=table, sources=sources, targets=targets)

    @classmethod
    def zero(cls) -> "CostSpec":
        return cls.difference("zero")

    @property
    def h_prime_strictly_convex(self) -> bool:
        return self.kind is CostKind.DIFFERENCE and self.h in _STRICT_H_PRIME

    def h_values(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.h == "custom":
            out = np.empty(z.shape)
            for idx, v in np.ndenumerate(z):
                if float(v) not in self.samples:
                    raise KeyError(f"custom h has no sample at offset {float(v)!r}")
                out[idx] = self.samples[float(v)]
            return out
        return _NAMED_H[self.h](z, self.p)

    def matrix(self, sources, targets) -> np.ndarray:
        """Cost table ``C(x_i, y_j)`` for the given atoms."""
        if self.kind is CostKind.DIFFERENCE:
            X, Y = as_points(sources), as_points(targets)
            if X.shape[1] != 1 or Y.shape[1] != 1:
                raise DimensionMismatch("difference costs are one-dimensional")
            C = self.h_values(Y[:, 0][None, :] - X[:, 0][:, None])
        else:
            C = self.table[np.ix_(_align(self.sources, sources), _align(self.targets, targets))]
        if not np.all(np.isfinite(C)):
            raise ValidationError("cost is not finite on the requested atoms")
        return C

    def row(self, x, targets) -> np.ndarray:
        return self.matrix(single(x), targets)[0]
