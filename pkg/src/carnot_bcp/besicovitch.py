"""Families of Besicovitch balls: verification, explicit generation, lifting.

A family of balls ``B(c_j, r_j)`` is a Besicovitch family when some point
(the witness) lies in every ball and no center lies in another ball. Ball
membership uses ``B(c, r) = {q : d(q, c) <= r}``.

The explicit plane construction produces centers whose scales grow
doubly exponentially with the family size, and whose exclusion margins
shrink accordingly (about 1e-20 already for the third ball). Generated
families therefore live in mpmath numbers with an unbounded exponent range
and are flagged *anchored*: the witness lies exactly on every sphere, so
the exclusion test can cancel the leading ``1`` of the gauge sum
algebraically instead of subtracting nearly equal numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._mp import ctx, is_wide, to_str
from .errors import (
    ConsistencyError,
    ConvergenceError,
    DomainError,
    HypothesisViolatedError,
    ShapeError,
)
from .gauge import GaugeBall, QuasiDistance, plane_metric
from .groups import GroupSpec, PlaneModel, plane_embed

DEFAULT_R = 3.0
MAX_PROBES = 200
_LINEAR_PROBES = 64


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: object  # float, or an mpmath number for wide families

    def __post_init__(self):
        c = np.asarray(self.center)
        if c.dtype != object:
            c = c.astype(float)
            if not np.all(np.isfinite(c)):
                raise DomainError("ball center must be finite")
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class GeneratorRecord:
    """How a plane family was produced: ``eps_n = 2**-log2_epsilons[n-1]``."""

    model: PlaneModel
    r: float
    log2_epsilons: tuple[int, ...]
    margin: float = 0.0

    @property
    def epsilons(self) -> tuple:
        return tuple(ctx.ldexp(1, -k) for k in self.log2_epsilons)


@dataclass(frozen=True, eq=False)
class BesicovitchFamily:
    balls: tuple[Ball, ...]
    witness: np.ndarray
    anchored: bool = False
    space: str = "plane"
    meta: GeneratorRecord | None = None

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        object.__setattr__(self, "witness", np.asarray(self.witness))
        if self.space not in ("plane", "group"):
            raise DomainError(f"unknown family space {self.space!r}")

    @property
    def size(self) -> int:
        return len(self.balls)

    def __len__(self) -> int:
        return len(self.balls)

    @property
    def wide(self) -> bool:
        return (
            self.witness.dtype == object
            or any(b.center.dtype == object or is_wide(b.radius) for b in self.balls)
        )

    def centers(self) -> np.ndarray:
        dtype = object if self.wide else float
        return np.array([b.center for b in self.balls], dtype=dtype)

    def radii(self) -> np.ndarray:
        dtype = object if self.wide else float
        return np.array([b.radius for b in self.balls], dtype=dtype)


@dataclass
class VerificationReport:
    """Outcome of checking the Besicovitch conditions.

    ``witness_residuals[j]`` is ``d(witness, c_j) / r_j - 1``.
    ``exclusion_margins[i][j]`` is ``g(delta_{1/r_j}(c_j^-1 c_i)) - 1`` where ``g``
    is the gauge sum; it has the sign of ``d(c_i, c_j) - r_j``, so center ``i``
    is outside ball ``j`` exactly when it is positive.
    """

    size: int
    tol: float
    anchored: bool
    witness_residuals: list[float]
    exclusion_margins: list[list]
    failing_balls: list[int] = field(default_factory=list)
    failing_pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failing_balls and not self.failing_pairs

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def margins_flat(self) -> list:
        return [m for i, row in enumerate(self.exclusion_margins) for j, m in enumerate(row) if i != j]

    @property
    def min_margin(self):
        flat = self.margins_flat()
        return min(flat) if flat else None

    def to_dict(self) -> dict:
        def num(x):
            if x is None:
                return None
            return to_str(x) if is_wide(x) else float(x)

        return {
            "verdict": self.verdict,
            "size": self.size,
            "tol": self.tol,
            "anchored": self.anchored,
            "witness_residuals": [float(x) for x in self.witness_residuals],
            "exclusion_margins": [[num(m) for m in row] for row in self.exclusion_margins],
            "min_exclusion_margin": num(self.min_margin),
            "failing_balls": list(self.failing_balls),
            "failing_pairs": [list(p) for p in self.failing_pairs],
        }


# -- verification ----------------------------------------------------------


def verify_family(metric: QuasiDistance, fam: BesicovitchFamily, tol: float = 1e-10) -> VerificationReport:
    """Check the witness condition and strict mutual exclusion of centers.

    Plain float families are checked with vectorised float64 arithmetic.
    Wide or anchored families go through mpmath, computing each exclusion
    margin as a sum of per-term increments ``|A + D|^gamma - |A|^gamma``
    where ``A`` is the rescaled witness offset and ``D`` the rescaled
    displacement from the witness to the other center. For anchored families
    the remaining ``g(A) - 1`` is zero by construction; once it is confirmed to
    vanish at working precision it is dropped, which is what makes margins far
    below float resolution observable.
    """
    if fam.size == 0:
        raise DomainError("cannot verify an empty family")
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    n = metric.n
    for b in fam.balls:
        if b.center.shape != (n,):
            raise ShapeError(f"center of shape {b.center.shape} does not match metric dimension {n}")
    if fam.witness.shape != (n,):
        raise ShapeError(f"witness of shape {fam.witness.shape} does not match metric dimension {n}")
    if fam.wide or fam.anchored:
        residuals, margins = _check_wide(metric, fam)
    else:
        residuals, margins = _check_float(metric, fam)

    failing_balls = [
        j for j, res in enumerate(residuals)
        if not (abs(res) <= tol if fam.anchored else res <= tol)
    ]
    failing_pairs = [
        (i, j)
        for i, row in enumerate(margins)
        for j, m in enumerate(row)
        if i != j and not m > 0
    ]
    return VerificationReport(fam.size, tol, fam.anchored, residuals, margins, failing_balls, failing_pairs)


def _check_float(metric: QuasiDistance, fam: BesicovitchFamily):
    g = metric.group
    C = fam.centers()
    R = fam.radii()
    N = len(C)
    w = np.broadcast_to(fam.witness.astype(float), C.shape)
    residuals = metric(C, w) / R - 1.0

    ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    rel = g.multiply(g.inverse(C[jj]), C[ii])
    scaled = rel * np.power(R[jj][:, None], -np.asarray(g.weights, dtype=float))
    vals = metric.gauge(scaled) - 1.0
    margins = [[None] * N for _ in range(N)]
    for i, j, v in zip(ii, jj, np.atleast_1d(vals)):
        margins[i][j] = float(v)
    return [float(x) for x in residuals], margins


def _to_mp_array(x) -> np.ndarray:
    return np.array([ctx.mpf(v) for v in np.asarray(x).ravel()], dtype=object).reshape(np.shape(x))


def _pow_increment(a, d, gamma):
    """``|a + d|**gamma - |a|**gamma`` without cancellation when ``|d| << |a|``."""
    if a == 0:
        return abs(d) ** gamma
    t = d / a
    if abs(t) <= 0.5:
        return abs(a) ** gamma * ctx.expm1(gamma * ctx.log1p(t))
    return abs(a + d) ** gamma - abs(a) ** gamma


def _norm_increment(a_vec, d_vec, gamma):
    """``|A + D|**gamma - |A|**gamma`` for Euclidean norms of vectors."""
    na2 = ctx.fsum(x * x for x in a_vec)
    inc2 = ctx.fsum(2 * x * y + y * y for x, y in zip(a_vec, d_vec))
    if na2 == 0:
        return inc2 ** (gamma / 2)
    t = inc2 / na2
    if abs(t) <= 0.5:
        return na2 ** (gamma / 2) * ctx.expm1(gamma / 2 * ctx.log1p(t))
    return (na2 + inc2) ** (gamma / 2) - na2 ** (gamma / 2)


def _gauge_mp(ball: GaugeBall, group, p):
    if ball.form == "coordinate":
        return ctx.fsum(c * abs(x) ** gam for c, gam, x in zip(ball.c, ball.gamma, p))
    return ctx.fsum(
        c * ctx.fsum(x * x for x in p[sl]) ** (gam / 2)
        for c, gam, sl in zip(ball.c, ball.gamma, group.layer_slices())
    )


def _gauge_increment_mp(ball: GaugeBall, group, A, D):
    if ball.form == "coordinate":
        return ctx.fsum(c * _pow_increment(a, d, gam) for c, gam, a, d in zip(ball.c, ball.gamma, A, D))
    return ctx.fsum(
        c * _norm_increment(A[sl], D[sl], gam)
        for c, gam, sl in zip(ball.c, ball.gamma, group.layer_slices())
    )


def _to_float_array(x: np.ndarray) -> np.ndarray:
    return np.array([float(v) for v in x], dtype=float)


_ANCHOR_SLACK = ctx.ldexp(1, 24 - ctx.prec)


def _check_wide(metric: QuasiDistance, fam: BesicovitchFamily):
    g = metric.group
    ball = metric.ball
    weights = [ctx.mpf(w) for w in np.asarray(g.weights, dtype=float)]
    C = [_to_mp_array(b.center) for b in fam.balls]
    R = [ctx.mpf(b.radius) for b in fam.balls]
    W = _to_mp_array(fam.witness)
    N = len(C)
    residuals = []
    margins = [[None] * N for _ in range(N)]
    D = [c - W for c in C]
    for j in range(N):
        X = -C[j]
        scale = np.array([R[j] ** (-w) for w in weights], dtype=object)
        A = g.multiply(X, W) * scale
        residuals.append(metric.from_origin(_to_float_array(A)) - 1.0)
        offset = _gauge_mp(ball, g, A) - 1
        if fam.anchored and abs(offset) <= _ANCHOR_SLACK:
            # the witness sits on the sphere to working precision; the true offset is 0
            offset = 0
        for i in range(N):
            if i == j:
                continue
            delta = g.multiply_increment(X, W, D[i]) * scale
            margins[i][j] = _gauge_increment_mp(ball, g, A, delta) + offset
    return residuals, margins


# -- explicit plane construction ------------------------------------------


@dataclass(frozen=True)
class PlaneNormalization:
    """Diagonal automorphism ``f(x, y) = (alpha^(1/a) x, beta^(1/b) y)``.

    ``f`` carries balls of the original model onto balls of the same radius in
    the normalised model (``alpha = beta = 1``); ``f^-1`` does the reverse.
    """

    original: PlaneModel
    normalized: PlaneModel
    forward: tuple[float, float]
    inverse: tuple[float, float]

    def apply(self, p):
        return np.asarray(p) * np.array(self.forward, dtype=_dtype_of(p))

    def invert(self, p):
        return np.asarray(p) * np.array(self.inverse, dtype=_dtype_of(p))


def _dtype_of(p):
    return object if np.asarray(p).dtype == object else float


def normalize_plane_model(m: PlaneModel) -> PlaneNormalization:
    fx = m.alpha ** (1.0 / m.a)
    fy = m.beta ** (1.0 / m.b)
    return PlaneNormalization(m, replace(m, alpha=1.0, beta=1.0), (fx, fy), (1.0 / fx, 1.0 / fy))


def separation_certificate(a: float, r: float) -> float:
    """``(1 - 1/r)**a - r**-a``; positive values make ``r`` usable for exponent ``a``."""
    return (1.0 - 1.0 / r) ** a - r ** (-a)


def select_r(a: float) -> float:
    """Return ``r = 3``, which satisfies the separation inequality for every ``a > 0``."""
    if not (a > 0 and math.isfinite(a)):
        raise DomainError(f"exponent a must be positive, got {a}")
    r = DEFAULT_R
    if not separation_certificate(a, r) > 0:  # pragma: no cover - 2/3 > 1/3 for all a > 0
        raise ConvergenceError(f"r={r} fails the separation inequality for a={a}")
    return r


class _PlaneSequence:
    """Exact description of ``p_n = (r^-n, eps_n^-s (1 - eps_n^a r^-na)^(1/b))``."""

    def __init__(self, model: PlaneModel, r: float):
        self.a = ctx.mpf(model.a)
        self.b = ctx.mpf(model.b)
        self.s = ctx.mpf(model.s)
        self.r = ctx.mpf(r)
        self._x: dict[int, object] = {}
        self._unit_y: dict[tuple[int, int], object] = {}

    def x(self, n: int):
        if n not in self._x:
            self._x[n] = self.r ** (-n)
        return self._x[n]

    def unit_y(self, K: int, n: int):
        """``eps^s y_n`` for ``eps = 2^-K``, i.e. ``(1 - (eps x_n)^a)^(1/b)``."""
        key = (K, n)
        if key not in self._unit_y:
            ux = ctx.ldexp(self.x(n), -K)
            self._unit_y[key] = (1 - ux ** self.a) ** (1 / self.b)
        return self._unit_y[key]

    def excess(self, K: int, m: int, Kk: int, k: int):
        """Criterion value minus one for candidate ``eps = 2^-K`` at index ``m`` against ``k``.

        Returns ``(excess, leading)`` where ``leading = |eps (x_k - x_m)|^a``.
        Uses ``|eps x_m|^a + (eps^s y_m)^b = 1`` to drop the constant term.
        """
        a, b = self.a, self.b
        eps_dx = ctx.ldexp(self.x(k) - self.x(m), -K)
        leading = abs(eps_dx) ** a
        term_x = leading - ctx.ldexp(self.x(m), -K) ** a
        A = self.unit_y(K, m)
        B = ctx.power(2, -self.s * (K - Kk)) * self.unit_y(Kk, k)
        q = B / A
        if q <= 0.5:
            term_y = A ** b * ctx.expm1(b * ctx.log1p(-q))
        else:
            term_y = abs(A - B) ** b - A ** b
        return term_x + term_y, leading

    def center(self, K: int, n: int) -> np.ndarray:
        y = ctx.power(2, self.s * K) * self.unit_y(K, n)
        return np.array([self.x(n), y], dtype=object)


def criterion_excess(model: PlaneModel, r: float, log2_eps: int, m: int, log2_eps_k: int, k: int):
    """``|eps(x_k - x_m)|^a + |eps^s(y_m - y_k)|^b - 1`` for ``eps = 2^-log2_eps``.

    ``y_m`` is evaluated at the candidate ``eps`` and ``y_k`` at ``eps_k = 2^-log2_eps_k``.
    Returned as an mpmath number; it can be far below float resolution.
    """
    return _PlaneSequence(model, r).excess(log2_eps, m, log2_eps_k, k)[0]


def generate_r2_family(model: PlaneModel, N: int, r: float | None = None, margin: float = 0.0) -> BesicovitchFamily:
    """Besicovitch family ``{B(p_n, 1/eps_n)}_{n=1..N}`` through the origin in the plane model.

    ``eps_1 = 1`` and ``eps_{n+1}`` is the largest ``eps_n 2^-k`` (``k >= 1``)
    whose separation criterion against every earlier ball exceeds
    ``margin * |eps (x_k - x_{n+1})|^a``. Steps ``k <= 64`` are scanned one by
    one; larger steps are located by doubling and bisection on ``k``, where the
    criterion is monotone in ``eps``.
    """
    if not model.is_normalized:
        raise ConsistencyError("generate_r2_family needs a normalised model (alpha = beta = 1)")
    if not model.a < model.s:
        raise HypothesisViolatedError(
            f"construction requires a < s, got a={model.a}, s={model.s}; "
            "with a >= s no Besicovitch family of this shape exists"
        )
    if N < 1:
        raise DomainError("N must be >= 1")
    if margin < 0:
        raise DomainError("margin must be nonnegative")
    if r is None:
        r = select_r(model.a)
    if not (r > 1 and separation_certificate(model.a, r) > 0):
        raise DomainError(f"r={r} violates (1 - 1/r)^a - r^-a > 0 for a={model.a}")

    seq = _PlaneSequence(model, r)
    logs = [0]
    prev_step = 0
    for m in range(2, N + 1):
        K0 = logs[-1]

        def ok(k: int) -> bool:
            K = K0 + k
            for j in range(m - 1, 0, -1):
                ex, lead = seq.excess(K, m, logs[j - 1], j)
                if not ex > margin * lead:
                    return False
            return True

        step = _smallest_passing_step(ok, prev_step, m)
        logs.append(K0 + step)
        prev_step = step

    balls = tuple(Ball(seq.center(K, n), ctx.ldexp(1, K)) for n, K in enumerate(logs, start=1))
    witness = np.array([ctx.mpf(0), ctx.mpf(0)], dtype=object)
    return BesicovitchFamily(balls, witness, anchored=True, space="plane",
                             meta=GeneratorRecord(model, float(r), tuple(logs), float(margin)))


def _smallest_passing_step(ok, prev_step: int, m: int) -> int:
    probes = 0

    def probe(k):
        nonlocal probes
        probes += 1
        if probes > MAX_PROBES:
            raise ConvergenceError(f"no admissible eps found for ball {m} within {MAX_PROBES} probes")
        return ok(k)

    if prev_step <= _LINEAR_PROBES // 2:
        for k in range(1, _LINEAR_PROBES + 1):
            if probe(k):
                return k
        lo, hi = _LINEAR_PROBES, 2 * _LINEAR_PROBES
    elif probe(prev_step):
        lo, hi = 0, prev_step
    else:
        lo, hi = prev_step, 2 * prev_step
    while not probe(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return hi


# -- plane <-> group ---------------------------------------------------------


def induced_plane_model(qd: QuasiDistance, i: int) -> PlaneModel:
    """Plane model carried by ``N_i = {x_k = 0 for k != i, n}`` with the restricted gauge."""
    g = qd.group
    if not isinstance(g, GroupSpec):
        raise ShapeError("induced plane models need a stratified group")
    m1 = g.cumulative[1]
    if not 1 <= i <= m1 or i == g.n:
        raise IndexError(f"index {i} must lie in the first layer 1..{m1} and differ from n={g.n}")
    ball = qd.ball
    if ball.form == "coordinate":
        return PlaneModel(s=g.step, a=ball.gamma[i - 1], b=ball.gamma[-1], alpha=ball.c[i - 1], beta=ball.c[-1])
    return PlaneModel(s=g.step, a=ball.gamma[0], b=ball.gamma[-1], alpha=ball.c[0], beta=ball.c[-1])


def map_plane_family(fam: BesicovitchFamily, scale, model: PlaneModel | None = None) -> BesicovitchFamily:
    """Apply the diagonal map ``(x, y) -> (scale[0] x, scale[1] y)`` to every center and the witness."""
    def f(p):
        p = np.asarray(p)
        return p * np.array(scale, dtype=object if p.dtype == object else float)

    meta = fam.meta if model is None or fam.meta is None else replace(fam.meta, model=model)
    return BesicovitchFamily(
        tuple(Ball(f(b.center), b.radius) for b in fam.balls),
        f(fam.witness), fam.anchored, fam.space, meta,
    )


def lift_family(qd: QuasiDistance, i: int, fam: BesicovitchFamily, model: PlaneModel | None = None) -> BesicovitchFamily:
    """Carry a plane family into the group through ``N_i``.

    ``model`` is the plane model the family's centers are expressed in
    (defaults to the generator record). Its exponents and ``s`` must match
    the gauge restricted to ``N_i``; its coefficients must either match too
    or be normalised, in which case the inverse normalisation is applied.
    """
    if fam.space != "plane":
        raise ShapeError("only plane families can be lifted")
    model = model or (fam.meta.model if fam.meta else None)
    if model is None:
        raise ConsistencyError("plane model unknown: pass it explicitly or use a generated family")
    target = induced_plane_model(qd, i)
    close = lambda u, v: abs(u - v) <= 1e-12 * max(1.0, abs(v))  # noqa: E731
    if not (close(model.a, target.a) and close(model.b, target.b) and close(model.s, target.s)):
        raise ConsistencyError(
            f"plane model (a={model.a}, b={model.b}, s={model.s}) disagrees with the gauge on N_{i} "
            f"(a={target.a}, b={target.b}, s={target.s})"
        )
    if model.is_normalized:
        if fam.wide:
            # float scales would move the witness off the spheres by ~1e-16
            scale = tuple(ctx.mpf(c) ** (-1 / ctx.mpf(e)) for c, e in ((target.alpha, target.a), (target.beta, target.b)))
        else:
            scale = normalize_plane_model(target).inverse
    elif close(model.alpha, target.alpha) and close(model.beta, target.beta):
        scale = (1.0, 1.0)
    else:
        raise ConsistencyError(
            f"plane coefficients ({model.alpha}, {model.beta}) disagree with the gauge on N_{i} "
            f"({target.alpha}, {target.beta})"
        )
    plane = map_plane_family(fam, scale, target)
    g = qd.group
    return BesicovitchFamily(
        tuple(Ball(plane_embed(g, i, b.center), b.radius) for b in plane.balls),
        plane_embed(g, i, plane.witness), fam.anchored, "group", plane.meta,
    )


# -- heuristic search --------------------------------------------------------


def search_family(qd: QuasiDistance, target: int, budget: int, seed: int, pool: int = 2000,
                  safety: float = 1e-12, scale_range: float = 15.0, pole_bias: float = 0.8):
    """Greedy randomised search for a Besicovitch family through the origin.

    Proposals come in pools of ``pool`` balls; each pool is one restart. A
    proposal picks a radius ``R`` (log-uniform over ``exp(+-scale_range)``) and
    a point ``u`` on the unit sphere and places a ball of radius ``d(0, c)`` at
    ``c = delta_R(u)``, so the origin lies on its boundary. Most directions are
    squashed towards a coordinate axis, since the families that exist in the
    plane models pack balls of very different sizes near the poles. Within a
    pool, two proposals are compatible when each center clears the other ball
    by a gauge excess of more than ``safety``; the greedy step keeps the
    proposal compatible with the most surviving proposals. Returns
    ``(family, report)`` for the largest family found, which can be smaller
    than ``target``.
    """
    if target < 2 or budget < 1:
        raise DomainError("search needs target >= 2 and budget >= 1")
    rng = np.random.default_rng(seed)
    g = qd.group
    n = qd.n
    w = np.asarray(g.weights, dtype=float)
    best: list[tuple[np.ndarray, float]] = []
    spent = 0
    while spent < budget and len(best) < target:
        size = min(pool, budget - spent)
        spent += size
        C, R = _proposals(qd, rng, size, n, w, scale_range, pole_bias)
        comp = np.empty((size, size), dtype=bool)
        for t in range(size):
            comp[t] = _compatible(qd, w, C, R, C[t], R[t], safety)
        comp &= comp.T
        alive = np.ones(size, dtype=bool)
        chosen = []
        while alive.any() and len(chosen) < target:
            idx = np.flatnonzero(alive)
            t = idx[np.argmax(comp[np.ix_(idx, idx)].sum(axis=1))]
            chosen.append(t)
            alive &= comp[t]
            alive[t] = False
        if len(chosen) > len(best):
            best = [(C[t], float(R[t])) for t in chosen]
    space = "group" if isinstance(g, GroupSpec) else "plane"
    family = BesicovitchFamily(tuple(Ball(c, r) for c, r in best), np.zeros(n), space=space)
    report = verify_family(qd, family) if best else None
    return family, report


def _proposals(qd, rng, size, n, w, scale_range, pole_bias):
    v = rng.standard_normal((size, n))
    axis = rng.integers(0, n, size)
    squash = np.exp(rng.uniform(-30.0, 0.0, (size, n)))
    squash[np.arange(size), axis] = 1.0
    v = np.where((rng.random(size) < pole_bias)[:, None], v * squash, v)
    u = v * np.power(qd.from_origin(v)[:, None], -w)
    R = np.exp(rng.uniform(-scale_range, scale_range, size))
    centers = u * np.power(R[:, None], w)
    return centers, qd.from_origin(centers)


def _compatible(qd, w, cand_c, cand_r, c, r, safety):
    """Mask of candidates whose ball excludes ``c`` and whose center lies outside ``B(c, r)``."""
    g = qd.group
    M = len(cand_c)
    cb = np.broadcast_to(c, cand_c.shape)
    out1 = qd.gauge(g.multiply(g.inverse(cb), cand_c) * r ** (-w)) - 1.0
    out2 = qd.gauge(g.multiply(g.inverse(cand_c), cb) * np.power(cand_r[:, None], -w)) - 1.0
    return (np.reshape(out1, M) > safety) & (np.reshape(out2, M) > safety)


# -- end-to-end pipeline -----------------------------------------------------


@dataclass
class PipelineReport:
    verdict: str  # "refuted" | "inapplicable"
    message: str
    step: int
    gamma_star: float
    index: int | None = None
    plane_model: PlaneModel | None = None
    family: BesicovitchFamily | None = None
    verification: VerificationReport | None = None
    search_family: BesicovitchFamily | None = None
    search_verification: VerificationReport | None = None

    @property
    def refuted(self) -> bool:
        return self.verdict == "refuted"


def horizontal_exponent(qd: QuasiDistance) -> tuple[float, int | None]:
    """Smallest first-layer exponent and a coordinate index realising it (1-based).

    Coordinate ``n`` is excluded because the plane ``N_i`` pairs ``x_i`` with
    ``x_n``; this only matters for step 1. Returns ``(inf, None)`` if no index is available.
    """
    g = qd.group
    candidates = [i for i in range(1, g.cumulative[1] + 1) if i != g.n]
    if not candidates:
        return math.inf, None
    if qd.ball.form == "layer":
        return qd.ball.gamma[0], candidates[0]
    i = min(candidates, key=lambda k: (qd.ball.gamma[k - 1], k))
    return qd.ball.gamma[i - 1], i


def wbcp_refutation_pipeline(g: GroupSpec, ball: GaugeBall, N: int, r: float | None = None,
                             margin: float = 0.0, search_budget: int = 0, seed: int = 0,
                             tol: float = 1e-10) -> PipelineReport:
    """Build and check a Besicovitch family of ``N`` balls in ``(G, d)`` when possible.

    If the smallest horizontal exponent is below the step, the restriction of
    the gauge to a coordinate plane ``N_i`` falls in the regime of the explicit
    plane construction; the plane family is generated, mapped back through the
    normalisation, embedded into ``G`` and verified with the full distance.
    Otherwise the constructive route does not apply; an optional randomised
    search can still be run as evidence.
    """
    qd = QuasiDistance(g, ball)
    s = g.step
    gamma_star, i = horizontal_exponent(qd)
    if i is not None and gamma_star < s:
        model = induced_plane_model(qd, i)
        norm = normalize_plane_model(model)
        plane = generate_r2_family(norm.normalized, N, r=r, margin=margin)
        lifted = lift_family(qd, i, plane)
        report = verify_family(qd, lifted, tol=tol)
        if report.passed:
            msg = (
                f"WBCP refuted constructively: {N} Besicovitch balls through the origin "
                f"(horizontal exponent {gamma_star:g} < step {s}, plane N_{i}); hence BCP fails"
            )
            verdict = "refuted"
        else:
            msg = f"generated family failed verification at pairs {report.failing_pairs[:5]}"
            verdict = "failed"
        return PipelineReport(verdict, msg, s, gamma_star, i, model, lifted, report)

    reason = (
        f"constructive route inapplicable: horizontal exponent {gamma_star:g} >= step {s}. "
        "The remaining argument (quotient to a Heisenberg subgroup and a "
        "curvature-at-the-poles criterion) is not constructive and is not run."
        if i is not None
        else "constructive route inapplicable: no coordinate plane N_i exists in dimension 1."
    )
    rep = PipelineReport("inapplicable", reason, s, gamma_star, i)
    if search_budget > 0:
        fam, srep = search_family(qd, target=max(2, N), budget=search_budget, seed=seed)
        rep.search_family, rep.search_verification = fam, srep
        rep.message += f" Heuristic search found a verified family of size {fam.size}."
    return rep
