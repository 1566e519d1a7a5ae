"""The step-2 quotient of a step-3 group and its induced quasi-distance.

Modding out the third layer ``V_3`` leaves the first ``m_2`` coordinates,
with brackets truncated to ``k <= m_2``. Projection drops the remaining
coordinates and is a group homomorphism because the grading never lets
layer-3 terms feed layers 1 and 2. Every gauge here is nondecreasing in
the dropped coordinates, so the closest point of a fiber is the one with
those coordinates set to zero. Both the quotient distance and the lifts
are therefore closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBracketError, DomainError, ShapeError, UnsupportedStepError
from .gauge import GaugeBall, QuasiDistance, gauge_to_dict, homogeneous_root, unit_sphere_sample
from .groups import GroupSpec, group_to_dict, heisenberg1


@dataclass(frozen=True, eq=False)
class QuotientSpec:
    parent: QuasiDistance
    group: GroupSpec
    ball: GaugeBall
    m2: int

    @property
    def metric(self) -> QuasiDistance:
        """The induced gauge applied directly on the quotient (agrees with :func:`quotient_distance`)."""
        return QuasiDistance(self.group, self.ball, self.parent.rtol, self.parent.max_iter)


def derive_quotient(g: GroupSpec, ball: GaugeBall) -> QuotientSpec:
    if g.step != 3:
        raise UnsupportedStepError(f"quotient by the third layer needs a step-3 group, got step {g.step}")
    parent = QuasiDistance(g, ball)
    m2 = g.cumulative[2]
    brackets = []
    for i, j, terms in g.brackets:
        kept = tuple((k, c) for k, c in terms if k <= m2)
        if i <= m2 and j <= m2 and kept:
            brackets.append((i, j, kept))
    name = f"{g.name}/V3" if g.name else None
    quotient = GroupSpec(g.layer_dims[:2], tuple(brackets), name=name)
    if ball.form == "coordinate":
        induced = GaugeBall("coordinate", ball.c[:m2], ball.gamma[:m2])
    else:
        induced = GaugeBall("layer", ball.c[:2], ball.gamma[:2])
    return QuotientSpec(parent, quotient, induced, m2)


def project(qs: QuotientSpec, p) -> np.ndarray:
    p = qs.parent.group.check(p)
    return p[..., : qs.m2].copy()


def pad(qs: QuotientSpec, p_hat) -> np.ndarray:
    """``[p_hat, 0]``: the point of the fiber over ``p_hat`` with zero third layer."""
    p_hat = qs.group.check(p_hat, "quotient point")
    out = np.zeros(p_hat.shape[:-1] + (qs.parent.n,), dtype=p_hat.dtype)
    out[..., : qs.m2] = p_hat
    return out


def quotient_distance(qs: QuotientSpec, p_hat, q_hat):
    """``d(0, [p_hat^-1 q_hat, 0])`` computed with the parent distance."""
    g = qs.group
    return qs.parent.from_origin(pad(qs, g.multiply(g.inverse(p_hat), q_hat)))


def lift_point(qs: QuotientSpec, p, q_hat) -> np.ndarray:
    """A point over ``q_hat`` at distance ``d_quotient(project(p), q_hat)`` from ``p``."""
    p = qs.parent.group.check(p)
    g = qs.group
    step = g.multiply(g.inverse(project(qs, p)), q_hat)
    return qs.parent.group.multiply(p, pad(qs, step))


@dataclass
class SubmetryReport:
    samples: int
    seed: int
    tol: float
    max_subset_violation: float
    max_superset_violation: float
    max_lipschitz_violation: float
    max_lift_optimality_violation: float
    max_lift_gap: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
            "max_subset_violation": self.max_subset_violation,
            "max_superset_violation": self.max_superset_violation,
            "max_lipschitz_violation": self.max_lipschitz_violation,
            "max_lift_optimality_violation": self.max_lift_optimality_violation,
            "max_lift_gap": self.max_lift_gap,
            "failures": list(self.failures),
        }


def submetry_check(qs: QuotientSpec, samples: int, seed: int, tol: float = 1e-9,
                   radius: float | None = None) -> SubmetryReport:
    """Sampled check that projection maps balls onto balls of the same radius.

    For random ``p`` and ``r`` (or the fixed ``radius``):

    * subset: points ``w`` of ``B(p, r)`` project into ``B(p_hat, r)``;
    * superset: each ``q_hat`` in ``B(p_hat, r)`` lifts into ``B(p, r)``;
    * the projection is 1-Lipschitz on independent random pairs;
    * the lift is no farther from ``p`` than other sampled points of its fiber,
      and its distance equals the quotient distance (``max_lift_gap``, relative).

    Violations are absolute amounts by which an inequality fails.
    """
    if samples < 1:
        raise DomainError("samples must be >= 1")
    if radius is not None and radius < 0:
        raise DomainError("radius must be nonnegative")
    rng = np.random.default_rng(seed)
    G = qs.parent.group
    H = qs.group
    parent = qs.parent
    n = parent.n
    wG = np.asarray(G.weights, dtype=float)
    wH = np.asarray(H.weights, dtype=float)

    p = rng.uniform(-2.0, 2.0, (samples, n))
    if radius is None:
        r = np.exp(rng.uniform(-3.0, 3.0, samples))
    else:
        r = np.full(samples, float(radius))
    p_hat = project(qs, p)

    # subset: w = p * delta_{t r}(u) with u on the parent unit sphere
    u = unit_sphere_sample(parent, samples, int(rng.integers(2**63)))
    t = rng.uniform(0.0, 1.0, samples)
    w = G.multiply(p, u * np.power((t * r)[:, None], wG))
    subset = np.maximum(0.0, quotient_distance(qs, p_hat, project(qs, w)) - r)

    # superset: q_hat = p_hat * delta_{t r}(u_hat) with u_hat on the quotient unit sphere
    u_hat = unit_sphere_sample(qs.metric, samples, int(rng.integers(2**63)))
    t = rng.uniform(0.0, 1.0, samples)
    q_hat = H.multiply(p_hat, u_hat * np.power((t * r)[:, None], wH))
    lifted = lift_point(qs, p, q_hat)
    d_lift = parent(p, lifted)
    superset = np.maximum(0.0, d_lift - r)
    d_quot = quotient_distance(qs, p_hat, q_hat)
    with np.errstate(invalid="ignore", divide="ignore"):
        gap = np.where(d_quot > 0, np.abs(d_lift - d_quot) / d_quot, np.abs(d_lift))
    fiber_ok = np.max(np.abs(project(qs, lifted) - q_hat), initial=0.0)

    # lift optimality against random points of the same fiber
    z = rng.standard_normal((samples, n - qs.m2)) * np.exp(rng.uniform(-3.0, 3.0, (samples, 1)))
    other = G.multiply(lifted, np.concatenate([np.zeros((samples, qs.m2)), z], axis=1))
    optimality = np.maximum(0.0, d_lift - parent(p, other))

    # 1-Lipschitz projection on independent pairs
    q = rng.uniform(-2.0, 2.0, (samples, n))
    lipschitz = np.maximum(0.0, quotient_distance(qs, p_hat, project(qs, q)) - parent(p, q))

    rep = SubmetryReport(
        samples, seed, tol,
        float(subset.max()), float(superset.max()), float(lipschitz.max()),
        float(optimality.max()), float(gap.max()),
    )
    for label, value in (
        ("subset", rep.max_subset_violation),
        ("superset", rep.max_superset_violation),
        ("lipschitz", rep.max_lipschitz_violation),
        ("lift optimality", rep.max_lift_optimality_violation),
        ("lift gap", rep.max_lift_gap),
        ("lift fiber", fiber_ok),
    ):
        if not value <= tol:
            rep.failures.append(f"{label} violation {value:.3g} exceeds {tol:g}")
    return rep


@dataclass(frozen=True, eq=False)
class HeisenbergRestriction:
    """The subgroup ``exp(span(Y_i, Y_j, [Y_i, Y_j]))`` of a step-2 quotient.

    Coordinates ``(x, y, z)`` stand for ``x Y_i + y Y_j + z [Y_i, Y_j]`` and
    ``[Y_i, Y_j] = sum_k xi_k Y_k`` over the second-layer coordinates ``k``.
    The product is the first Heisenberg law.
    """

    quotient: QuotientSpec
    i: int
    j: int
    xi: tuple[float, ...]

    @property
    def group(self) -> GroupSpec:
        return heisenberg1()

    def embed(self, p3) -> np.ndarray:
        p3 = np.asarray(p3, dtype=float)
        if p3.shape[-1] != 3:
            raise ShapeError(f"Heisenberg point has shape {p3.shape}, expected (..., 3)")
        m1, m2 = self.quotient.group.cumulative[1:3]
        out = np.zeros(p3.shape[:-1] + (m2,))
        out[..., self.i - 1] = p3[..., 0]
        out[..., self.j - 1] = p3[..., 1]
        out[..., m1:m2] = p3[..., 2:3] * np.asarray(self.xi)
        return out

    def _terms(self, p3):
        """Term sizes, coefficients, exponents and weights of the induced gauge."""
        p3 = np.atleast_2d(np.asarray(p3, dtype=float))
        ball = self.quotient.ball
        x, y, z = p3[:, 0], p3[:, 1], p3[:, 2]
        if ball.form == "coordinate":
            m1 = self.quotient.group.cumulative[1]
            idx = [k for k, v in enumerate(self.xi) if v != 0]
            T = np.stack([np.abs(x), np.abs(y)] + [np.abs(self.xi[k] * z) for k in idx], axis=1)
            c = [ball.c[self.i - 1], ball.c[self.j - 1]] + [ball.c[m1 + k] for k in idx]
            g = [ball.gamma[self.i - 1], ball.gamma[self.j - 1]] + [ball.gamma[m1 + k] for k in idx]
            w = [1.0, 1.0] + [2.0] * len(idx)
        else:
            T = np.stack([np.hypot(x, y), np.abs(z) * float(np.linalg.norm(self.xi))], axis=1)
            c, g, w = list(ball.c), list(ball.gamma), [1.0, 2.0]
        return T, c, g, w

    def gauge(self, p3):
        T, c, g, _ = self._terms(p3)
        out = np.sum(np.asarray(c) * T ** np.asarray(g), axis=1)
        return float(out[0]) if np.ndim(p3) == 1 else out

    def from_origin(self, p3):
        T, c, g, w = self._terms(p3)
        qd = self.quotient.parent
        lam = homogeneous_root(T, c, g, w, qd.rtol, qd.max_iter).lam
        return float(lam[0]) if np.ndim(p3) == 1 else lam

    def distance(self, p3, q3):
        H = self.group
        return self.from_origin(H.multiply(H.inverse(p3), q3))


def heisenberg_restriction(qs: QuotientSpec, i: int, j: int) -> HeisenbergRestriction:
    m1, m2 = qs.group.cumulative[1:3]
    for idx in (i, j):
        if not 1 <= idx <= m1:
            raise IndexError(f"index {idx} must lie in the first layer 1..{m1}")
    xi = tuple(float(v) for v in qs.group.structure[i - 1, j - 1, m1:m2])
    if i == j or not any(xi):
        raise DegenerateBracketError(f"[Y_{i}, Y_{j}] = 0 in the quotient")
    return HeisenbergRestriction(qs, i, j, xi)


def quotient_to_dict(qs: QuotientSpec) -> dict:
    return {
        "parent": {"group": group_to_dict(qs.parent.group), "gauge": gauge_to_dict(qs.parent.ball)},
        "quotient": {"group": group_to_dict(qs.group), "gauge": gauge_to_dict(qs.ball)},
        "m2": qs.m2,
    }


def restriction_to_dict(hr: HeisenbergRestriction) -> dict:
    return {"i": hr.i, "j": hr.j, "xi": list(hr.xi), "quotient": quotient_to_dict(hr.quotient)}
