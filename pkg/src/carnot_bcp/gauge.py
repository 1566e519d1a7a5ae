"""Homogeneous quasi-distances induced by gauge unit balls.

A unit ball ``K`` of the form ``sum c_t * T_t(x)**gamma_t <= 1`` (``T_t`` is
``|x_i|`` in coordinate form or the Euclidean norm of layer ``t`` in layer
form) induces ``d(p, q) = inf{lam > 0 : delta_{1/lam}(p^-1 q) in K}``.
For ``p != 0`` the map ``lam -> sum c_t lam^(-w_t gamma_t) T_t**gamma_t`` is
continuous and strictly decreasing, so the infimum is its unique crossing of 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConvergenceError, DomainError, ShapeError
from .groups import GroupSpec, PlaneGroup, PlaneModel

DEFAULT_RTOL = 1e-12
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class GaugeBall:
    form: Literal["coordinate", "layer"]
    c: tuple[float, ...]
    gamma: tuple[float, ...]

    def __post_init__(self):
        if self.form not in ("coordinate", "layer"):
            raise DomainError(f"unknown gauge form {self.form!r}")
        c = tuple(float(v) for v in self.c)
        gamma = tuple(float(v) for v in self.gamma)
        if len(c) != len(gamma) or not c:
            raise ShapeError("gauge needs matching, nonempty coefficient and exponent lists")
        if not all(v > 0 and math.isfinite(v) for v in c + gamma):
            raise DomainError("gauge coefficients and exponents must be positive and finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def euclidean(cls, n: int) -> "GaugeBall":
        return cls("coordinate", (1.0,) * n, (2.0,) * n)

    def check_group(self, group) -> None:
        if self.form == "coordinate":
            if len(self.c) != group.n:
                raise ShapeError(f"coordinate gauge has {len(self.c)} terms, group has dimension {group.n}")
        else:
            if not isinstance(group, GroupSpec):
                raise ShapeError("layer-form gauges need a stratified group")
            if len(self.c) != group.step:
                raise ShapeError(f"layer gauge has {len(self.c)} terms, group has step {group.step}")

    def term_weights(self, group) -> np.ndarray:
        if self.form == "coordinate":
            return np.asarray(group.weights, dtype=float)
        return np.arange(1, group.step + 1, dtype=float)

    def term_sizes(self, group, p: np.ndarray) -> np.ndarray:
        """``T_t(p)`` for each gauge term, shape ``p.shape[:-1] + (terms,)``."""
        if self.form == "coordinate":
            return np.abs(p)
        return np.stack([np.linalg.norm(p[..., sl], axis=-1) for sl in group.layer_slices()], axis=-1)


def gauge_value(ball: GaugeBall, p, group=None) -> np.ndarray | float:
    """Left-hand side of the unit-ball inequality; ``p`` is in ``K`` iff this is ``<= 1``."""
    p = np.asarray(p, dtype=float)
    if ball.form == "layer" and group is None:
        raise ShapeError("layer-form gauge needs the group to split coordinates into layers")
    if ball.form == "coordinate" and p.shape[-1] != len(ball.c):
        raise ShapeError(f"point has {p.shape[-1]} coordinates, gauge has {len(ball.c)} terms")
    T = ball.term_sizes(group, p)
    out = np.sum(np.asarray(ball.c) * T ** np.asarray(ball.gamma), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RootResult:
    lam: np.ndarray
    log_lo: np.ndarray
    log_hi: np.ndarray
    iterations: int


def homogeneous_root(T, c, gamma, weight, rtol: float = DEFAULT_RTOL, max_iter: int = DEFAULT_MAX_ITER) -> RootResult:
    """Solve ``sum_t c_t (T_t / lam^w_t)^gamma_t = 1`` for ``lam`` row by row.

    Works on ``mu = log(lam)`` so that scales far from 1 neither overflow nor
    underflow. The bracket grows geometrically from ``lam = 1`` (factor 2,
    then 4, 16, ...) until the sum straddles 1, then bisection runs until the
    bracket is narrower than ``rtol`` in ``mu``, i.e. in relative ``lam``.
    Rows with every ``T_t == 0`` get ``lam = 0``.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if not np.all(np.isfinite(T)):
        raise DomainError("non-finite coordinates")
    c = np.asarray(c, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    slope = gamma * np.asarray(weight, dtype=float)
    with np.errstate(divide="ignore"):
        base = np.log(c) + gamma * np.log(T)

    def g(mu):
        # overflow to inf is harmless: it still compares as > 1
        with np.errstate(over="ignore"):
            return np.exp(base - slope * mu[:, None]).sum(axis=1)

    M = T.shape[0]
    zero = np.all(T == 0, axis=1)
    lo = np.zeros(M)
    hi = np.zeros(M)
    g0 = g(lo)
    up = (g0 > 1) & ~zero
    down = (g0 < 1) & ~zero
    hi[up] = math.log(2.0)
    lo[down] = -math.log(2.0)
    step = np.full(M, 2 * math.log(2.0))
    iterations = 0
    while True:
        need_up = up & (g(hi) > 1)
        need_down = down & (g(lo) < 1)
        if not (need_up.any() or need_down.any()):
            break
        iterations += 1
        if iterations > max_iter:
            raise ConvergenceError("bracketing did not straddle 1")
        lo[need_up] = hi[need_up]
        hi[need_up] += step[need_up]
        hi[need_down] = lo[need_down]
        lo[need_down] -= step[need_down]
        moved = need_up | need_down
        step[moved] *= 2

    active = up | down
    while True:
        width = hi - lo
        todo = active & (width > rtol)
        if not todo.any():
            break
        iterations += 1
        if iterations > max_iter:
            raise ConvergenceError("bisection did not reach the requested tolerance")
        mid = 0.5 * (lo + hi)
        stuck = todo & ((mid == lo) | (mid == hi))
        active &= ~stuck
        todo &= ~stuck
        gm = g(mid)
        above = todo & (gm > 1)
        below = todo & (gm < 1)
        exact = todo & (gm == 1)
        lo[above] = mid[above]
        hi[below] = mid[below]
        lo[exact] = hi[exact] = mid[exact]

    lam = np.exp(0.5 * (lo + hi))
    lam[zero] = 0.0
    return RootResult(lam, lo, hi, iterations)


@dataclass(frozen=True)
class QuasiDistance:
    """The quasi-distance induced by ``ball`` on ``group`` (a GroupSpec or PlaneGroup)."""

    group: GroupSpec | PlaneGroup
    ball: GaugeBall
    rtol: float = DEFAULT_RTOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        if not self.rtol > 0:
            raise DomainError("root-finder tolerance must be positive")
        self.ball.check_group(self.group)

    @property
    def n(self) -> int:
        return self.group.n

    def gauge(self, p):
        return gauge_value(self.ball, p, self.group)

    def from_origin(self, p):
        p = self.group.check(p)
        scalar = p.ndim == 1
        p = np.atleast_2d(p)
        if not np.all(np.isfinite(p)):
            raise DomainError("non-finite coordinates")
        T = self.ball.term_sizes(self.group, p)
        res = homogeneous_root(T, self.ball.c, self.ball.gamma, self.ball.term_weights(self.group), self.rtol, self.max_iter)
        return float(res.lam[0]) if scalar else res.lam

    def __call__(self, p, q):
        return self.from_origin(self.group.multiply(self.group.inverse(p), q))


def plane_metric(model: PlaneModel, rtol: float = DEFAULT_RTOL) -> QuasiDistance:
    return QuasiDistance(model.group, GaugeBall("coordinate", (model.alpha, model.beta), (model.a, model.b)), rtol)


def distance_from_origin(qd: QuasiDistance, p):
    return qd.from_origin(p)


def distance(qd: QuasiDistance, p, q):
    return qd(p, q)


def unit_sphere_sample(qd: QuasiDistance, count: int, seed: int) -> np.ndarray:
    """Seeded points with gauge distance 1 from the origin, shape ``(count, n)``."""
    if count < 0:
        raise DomainError("count must be nonnegative")
    if count == 0:
        return np.zeros((0, qd.n))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, qd.n))
    return _rescale_to_sphere(qd, v)


def _rescale_to_sphere(qd: QuasiDistance, v: np.ndarray) -> np.ndarray:
    d = qd.from_origin(v)
    w = np.asarray(qd.group.weights, dtype=float)
    return v * np.power(d[:, None], -w)


@dataclass(frozen=True)
class QuasiTriangleEstimate:
    constant: float
    witness: tuple[np.ndarray, np.ndarray, np.ndarray] | None
    samples: int


def quasi_triangle_ratios(qd: QuasiDistance, p, q, w) -> np.ndarray:
    """``d(p, q) / (d(p, w) + d(w, q))`` per row; NaN where the denominator vanishes."""
    num = np.atleast_1d(qd(p, q))
    den = np.atleast_1d(qd(p, w) + qd(w, q))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def estimate_qt_constant(qd: QuasiDistance, samples: int, seed: int, with_witness: bool = False):
    """Sampled lower bound for the quasi-triangle constant ``C``.

    Triples mix a uniform box with log-uniformly dilated points so that
    both balanced and very unbalanced configurations are probed.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = qd.n
    pts = rng.uniform(-2.0, 2.0, size=(3, samples, n))
    scale = np.exp(rng.uniform(-3.0, 3.0, size=(3, samples, 1)))
    w = np.asarray(qd.group.weights, dtype=float)
    pts = np.where(rng.random((3, samples, 1)) < 0.5, pts, pts * scale ** w)
    p, q, m = pts
    # p' = q always gives ratio 1, so C >= 1; keep one such triple in the sample
    m[0] = q[0]
    ratios = quasi_triangle_ratios(qd, p, q, m)
    if np.all(np.isnan(ratios)):
        est = QuasiTriangleEstimate(0.0, None, samples)
    else:
        k = int(np.nanargmax(ratios))
        est = QuasiTriangleEstimate(float(ratios[k]), (p[k], q[k], m[k]), samples)
    return est if with_witness else est.constant


def gauge_to_dict(ball: GaugeBall) -> dict:
    return {"form": ball.form, "c": list(ball.c), "gamma": list(ball.gamma)}


def gauge_from_dict(d: dict) -> GaugeBall:
    try:
        return GaugeBall(d["form"], tuple(d["c"]), tuple(d["gamma"]))
    except (KeyError, TypeError) as exc:
        raise ShapeError(f"malformed gauge: {exc}") from exc
