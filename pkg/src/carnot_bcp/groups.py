"""Stratified nilpotent groups in exponential coordinates of the first kind.

Points are plain numpy vectors ``x = (x_1, ..., x_n)`` identified with
``exp(x_1 X_1 + ... + x_n X_n)``. All index arguments in the public API
are 1-based, matching the usual notation X_1, ..., X_n; arrays are 0-based
internally.

Arithmetic works on float arrays of shape ``(n,)`` or ``(M, n)`` and on
object arrays holding mpmath numbers (used for families whose coordinates
overflow float64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, ShapeError, UnsupportedStepError

VALIDATION_TOL = 1e-10

Bracket = tuple[int, int, tuple[tuple[int, float], ...]]


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """A graded nilpotent Lie algebra, and hence a group, in a fixed basis.

    ``brackets`` holds entries ``(i, j, ((k, c), ...))`` meaning
    ``[X_i, X_j] = sum c X_k`` (1-based). Normally only ``i < j`` is stored
    and antisymmetry is implied; explicitly stored ``(j, i)`` entries are kept
    as written so that :func:`validate` can report inconsistent input.
    """

    layer_dims: tuple[int, ...]
    brackets: tuple[Bracket, ...] = ()
    name: str | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if not dims or any(d < 0 for d in dims) or sum(dims) == 0:
            raise ShapeError(f"invalid layer dimensions {self.layer_dims!r}")
        object.__setattr__(self, "layer_dims", dims)
        n = sum(dims)
        norm = []
        for i, j, terms in self.brackets:
            i, j = int(i), int(j)
            terms = tuple((int(k), float(c)) for k, c in terms)
            for idx in (i, j, *(k for k, _ in terms)):
                if not 1 <= idx <= n:
                    raise ShapeError(f"bracket index {idx} outside 1..{n}")
            norm.append((i, j, terms))
        object.__setattr__(self, "brackets", tuple(norm))

    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def n(self) -> int:
        return sum(self.layer_dims)

    @cached_property
    def cumulative(self) -> tuple[int, ...]:
        """``(m_0, m_1, ..., m_s)`` with ``m_0 = 0`` and ``m_s = n``."""
        out = [0]
        for d in self.layer_dims:
            out.append(out[-1] + d)
        return tuple(out)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.empty(self.n, dtype=int)
        m = self.cumulative
        for j in range(self.step):
            w[m[j]:m[j + 1]] = j + 1
        w.flags.writeable = False
        return w

    def layer_slices(self) -> list[slice]:
        m = self.cumulative
        return [slice(m[j], m[j + 1]) for j in range(self.step)]

    @cached_property
    def structure(self) -> np.ndarray:
        """Dense tensor ``C[i, j, k]`` (0-based) with ``[X_i, X_j] = C[i, j, k] X_k``."""
        n = self.n
        C = np.zeros((n, n, n))
        stored = {(i, j) for i, j, _ in self.brackets}
        for i, j, terms in self.brackets:
            for k, c in terms:
                C[i - 1, j - 1, k - 1] += c
                if (j, i) not in stored and i != j:
                    C[j - 1, i - 1, k - 1] -= c
        C.flags.writeable = False
        return C

    @cached_property
    def _sparse(self) -> tuple[tuple[int, int, int, float], ...]:
        C = self.structure
        return tuple((int(i), int(j), int(k), float(C[i, j, k])) for i, j, k in zip(*np.nonzero(C)))

    def structure_equals(self, other: "GroupSpec", tol: float = 0.0) -> bool:
        return (
            self.layer_dims == other.layer_dims
            and bool(np.all(np.abs(self.structure - other.structure) <= tol))
        )

    # -- arithmetic -------------------------------------------------------

    def check(self, p, name: str = "point") -> np.ndarray:
        p = np.asarray(p)
        if p.dtype != object:
            p = p.astype(float, copy=False)
        if p.ndim not in (1, 2) or p.shape[-1] != self.n:
            raise ShapeError(f"{name} has shape {p.shape}, expected (..., {self.n})")
        return p

    def bracket(self, X, Y):
        """Lie bracket of algebra vectors, broadcasting over leading axes."""
        out = np.zeros(np.broadcast_shapes(np.shape(X), np.shape(Y)), dtype=_result_dtype(X, Y))
        for i, j, k, c in self._sparse:
            out[..., k] += c * X[..., i] * Y[..., j]
        return out

    def multiply(self, p, q):
        if self.step > 3:
            raise UnsupportedStepError(f"group law implemented for step <= 3, got step {self.step}")
        X = self.check(p, "p")
        Y = self.check(q, "q")
        if self.step == 1:
            return X + Y
        XY = self.bracket(X, Y)
        Z = X + Y + 0.5 * XY
        if self.step == 3:
            Z = Z + (self.bracket(X, XY) - self.bracket(Y, XY)) / 12
        return Z

    def multiply_increment(self, X, W, D):
        """``BCH(X, W + D) - BCH(X, W)`` evaluated without cancellation.

        Every term is proportional to ``D``, so a tiny displacement stays
        accurate even when ``X`` and ``W`` are large.
        """
        if self.step > 3:
            raise UnsupportedStepError(f"group law implemented for step <= 3, got step {self.step}")
        if self.step == 1:
            return D
        XD = self.bracket(X, D)
        out = D + 0.5 * XD
        if self.step == 3:
            Y = W + D
            out = out + (
                self.bracket(X, XD)
                - self.bracket(D, self.bracket(X, Y))
                - self.bracket(W, XD)
            ) / 12
        return out

    def inverse(self, p):
        return -self.check(p)

    def dilate(self, lam, p):
        if not lam > 0:
            raise DomainError(f"dilation factor must be positive, got {lam}")
        p = self.check(p)
        if p.dtype == object:
            return p * np.array([lam ** int(w) for w in self.weights], dtype=object)
        return p * np.power(float(lam), self.weights)


def _result_dtype(*arrays):
    return object if any(np.asarray(a).dtype == object for a in arrays) else float


@dataclass(frozen=True)
class PlaneGroup:
    """``(R^2, +)`` with dilations ``(x, y) -> (lam x, lam^s y)`` for real ``s > 0``."""

    s: float

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise DomainError(f"plane weight s must be positive and finite, got {self.s}")

    n = 2
    step = 1

    @property
    def weights(self) -> np.ndarray:
        return np.array([1.0, float(self.s)])

    def check(self, p, name: str = "point") -> np.ndarray:
        p = np.asarray(p)
        if p.dtype != object:
            p = p.astype(float, copy=False)
        if p.ndim not in (1, 2) or p.shape[-1] != 2:
            raise ShapeError(f"{name} has shape {p.shape}, expected (..., 2)")
        return p

    def multiply(self, p, q):
        return self.check(p, "p") + self.check(q, "q")

    def multiply_increment(self, X, W, D):
        return D

    def inverse(self, p):
        return -self.check(p)

    def dilate(self, lam, p):
        if not lam > 0:
            raise DomainError(f"dilation factor must be positive, got {lam}")
        p = self.check(p)
        if p.dtype == object:
            return p * np.array([lam, lam ** self.s], dtype=object)
        return p * np.array([lam, lam ** self.s])


@dataclass(frozen=True)
class PlaneModel:
    """Two-dimensional homogeneous model with unit ball ``alpha|x|^a + beta|y|^b <= 1``."""

    s: float
    a: float
    b: float
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("s", "a", "b", "alpha", "beta"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"plane model field {name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)

    @property
    def group(self) -> PlaneGroup:
        return PlaneGroup(self.s)

    @property
    def is_normalized(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0


# -- module-level operations ---------------------------------------------


def multiply(g, p, q):
    return g.multiply(p, q)


def inverse(g, p):
    return g.inverse(p)


def dilate(g, lam, p):
    return g.dilate(lam, p)


def plane_embed(g: GroupSpec, i: int, p2) -> np.ndarray:
    """Place ``(x, y)`` at coordinates ``i`` (first layer, 1-based) and ``n``."""
    m1 = g.cumulative[1]
    if not 1 <= i <= m1 or i == g.n:
        raise IndexError(f"plane index {i} must lie in the first layer 1..{m1} and differ from n={g.n}")
    p2 = np.asarray(p2)
    if p2.shape[-1] != 2:
        raise ShapeError(f"plane point has shape {p2.shape}, expected (..., 2)")
    dtype = object if p2.dtype == object else float
    out = np.zeros(p2.shape[:-1] + (g.n,), dtype=dtype)
    if dtype == object:
        out[...] = 0
    out[..., i - 1] = p2[..., 0]
    out[..., g.n - 1] = p2[..., 1]
    return out


# -- validation ----------------------------------------------------------


@dataclass
class ValidationReport:
    antisymmetry_residual: float
    grading_residual: float
    jacobi_residual: float
    associativity_residual: float | None
    samples: int
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "antisymmetry_residual": self.antisymmetry_residual,
            "grading_residual": self.grading_residual,
            "jacobi_residual": self.jacobi_residual,
            "associativity_residual": self.associativity_residual,
            "samples": self.samples,
            "failures": list(self.failures),
        }


def validate(g: GroupSpec, samples: int = 1000, seed: int = 0, tol: float = VALIDATION_TOL) -> ValidationReport:
    C = g.structure
    anti = float(np.max(np.abs(C + C.transpose(1, 0, 2)), initial=0.0))

    w = g.weights
    allowed = (w[:, None, None] + w[None, :, None]) == w[None, None, :]
    grading = float(np.max(np.abs(np.where(allowed, 0.0, C)), initial=0.0))

    # [X_i,[X_j,X_k]] + [X_j,[X_k,X_i]] + [X_k,[X_i,X_j]]
    inner = np.einsum("jkl,ilm->ijkm", C, C)
    jac = inner + inner.transpose(1, 2, 0, 3) + inner.transpose(2, 0, 1, 3)
    jacobi = float(np.max(np.abs(jac), initial=0.0))

    failures = []
    if anti > tol:
        failures.append(f"antisymmetry violated (residual {anti:.3g})")
    if grading > tol:
        failures.append(f"grading violated (residual {grading:.3g})")
    if jacobi > tol:
        failures.append(f"Jacobi identity violated (residual {jacobi:.3g})")

    assoc = None
    if g.step <= 3:
        rng = np.random.default_rng(seed)
        p, q, r = rng.uniform(-1.0, 1.0, size=(3, samples, g.n))
        lhs = g.multiply(g.multiply(p, q), r)
        rhs = g.multiply(p, g.multiply(q, r))
        assoc = float(np.max(np.abs(lhs - rhs), initial=0.0))
        if assoc > tol:
            failures.append(f"associativity violated (residual {assoc:.3g})")
    return ValidationReport(anti, grading, jacobi, assoc, samples if assoc is not None else 0, failures)


# -- built-in groups -----------------------------------------------------


def abelian(n: int, weights=None) -> GroupSpec:
    """``R^n`` with zero bracket; ``weights`` (nondecreasing positive ints) set the grading."""
    if weights is None:
        weights = [1] * n
    weights = [int(x) for x in weights]
    if len(weights) != n or n < 1:
        raise ShapeError("weights must have length n >= 1")
    if any(x < 1 for x in weights) or weights != sorted(weights):
        raise DomainError("weights must be positive and nondecreasing")
    dims = [weights.count(j) for j in range(1, max(weights) + 1)]
    return GroupSpec(tuple(dims), (), name=f"abelian{n}" if max(weights) == 1 else None)


def heisenberg1() -> GroupSpec:
    return GroupSpec((2, 1), ((1, 2, ((3, 1.0),)),), name="heisenberg1")


def free_nilpotent_2_3() -> GroupSpec:
    """Free nilpotent group with 2 generators and step 3.

    X3 = [X1, X2], X4 = [X1, X3], X5 = [X2, X3].
    """
    return GroupSpec(
        (2, 1, 2),
        (
            (1, 2, ((3, 1.0),)),
            (1, 3, ((4, 1.0),)),
            (2, 3, ((5, 1.0),)),
        ),
        name="free_nilpotent_2_3",
    )


BUILTIN_NAMES = ("heisenberg1", "free_nilpotent_2_3", "abelian<n>")


def builtin(name: str) -> GroupSpec:
    if name == "heisenberg1":
        return heisenberg1()
    if name == "free_nilpotent_2_3":
        return free_nilpotent_2_3()
    if name.startswith("abelian") and name[len("abelian"):].isdigit():
        return abelian(int(name[len("abelian"):]))
    raise KeyError(f"unknown group {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}")


# -- JSON ----------------------------------------------------------------


def group_to_dict(g: GroupSpec) -> dict:
    return {
        "step": g.step,
        "layer_dims": list(g.layer_dims),
        "brackets": [
            {"i": i, "j": j, "terms": [{"k": k, "c": c} for k, c in terms]}
            for i, j, terms in g.brackets
        ],
    }


def group_from_dict(d: dict, name: str | None = None) -> GroupSpec:
    try:
        dims = tuple(int(x) for x in d["layer_dims"])
        step = int(d.get("step", len(dims)))
        brackets = tuple(
            (int(b["i"]), int(b["j"]), tuple((int(t["k"]), float(t["c"])) for t in b["terms"]))
            for b in d.get("brackets", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeError(f"malformed group spec: {exc}") from exc
    if step != len(dims):
        raise ShapeError(f"step {step} does not match {len(dims)} layer dimensions")
    return GroupSpec(dims, brackets, name=name)
