"""Acceptance criteria, one PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance
criteria" section of the summary.
"""

import time

import numpy as np

from carnot_bcp import serialize
from carnot_bcp._mp import ctx
from carnot_bcp.besicovitch import (
    Ball,
    BesicovitchFamily,
    criterion_excess,
    generate_r2_family,
    lift_family,
    search_family,
    verify_family,
    wbcp_refutation_pipeline,
)
from carnot_bcp.cli import main
from carnot_bcp.errors import HypothesisViolatedError
from carnot_bcp.gauge import GaugeBall, QuasiDistance, plane_metric
from carnot_bcp.groups import PlaneModel, abelian, free_nilpotent_2_3, heisenberg1
from carnot_bcp.quotient import derive_quotient, submetry_check
from oracles import direct_criterion, grid_distance

H = heisenberg1()
F = free_nilpotent_2_3()
PLANE = PlaneModel(s=3, a=2, b=2)

ORACLE_GAUGES = {
    "abelian gamma=1": QuasiDistance(abelian(1), GaugeBall("coordinate", (1,), (1,))),
    "heisenberg euclidean": QuasiDistance(H, GaugeBall.euclidean(3)),
    "plane (2,2,3)": plane_metric(PLANE),
    "heisenberg layer": QuasiDistance(H, GaugeBall("layer", (1.0, 2.0), (2.0, 3.0))),
}
BUILTIN_GAUGES = dict(ORACLE_GAUGES, **{"free euclidean": QuasiDistance(F, GaugeBall.euclidean(5))})


def oracle_distance(qd, p):
    g = qd.group
    layers = [(sl.start, sl.stop) for sl in g.layer_slices()] if qd.ball.form == "layer" else None
    return grid_distance(p, qd.ball.form, qd.ball.c, qd.ball.gamma, layers, g.weights)


def test_criterion_1_plane_refutation(criterion):
    t0 = time.perf_counter()
    fam = generate_r2_family(PLANE, 40, r=3.0)
    rep = verify_family(plane_metric(PLANE), fam, tol=1e-10)
    elapsed = time.perf_counter() - t0
    worst = max(abs(r) for r in rep.witness_residuals)
    ok = fam.size == 40 and rep.passed and worst <= 1e-10 and rep.min_margin > 0 and elapsed < 10
    criterion(1, ok, f"N={fam.size} max|residual|={worst:.2e} min margin={ctx.nstr(rep.min_margin, 3)} "
                     f"time={elapsed:.2f}s")


def test_criterion_2_epsilon_regression(criterion):
    fam = generate_r2_family(PLANE, 2, r=3.0, margin=0.0)
    ex = criterion_excess(PLANE, 3.0, 6, 2, 0, 1)
    ref = ctx.mpf(direct_criterion(2, 2, 3, 3, [0, 6], 2, 1))
    eps2 = fam.meta.epsilons[1]
    ok = eps2 == ctx.ldexp(1, -6) and 1e-6 < ex < 1e-5 and abs(ex / ref - 1) < 1e-30
    criterion(2, ok, f"eps_2=2^-{fam.meta.log2_epsilons[1]} excess={ctx.nstr(ex, 6)} oracle={ctx.nstr(ref, 6)}")


def test_criterion_3_hypothesis_gating(criterion):
    try:
        generate_r2_family(PlaneModel(s=3, a=3, b=2), 5)
        raised = False
    except HypothesisViolatedError:
        raised = True
    verdict = wbcp_refutation_pipeline(H, GaugeBall.euclidean(3), 10).verdict
    criterion(3, raised and verdict == "inapplicable", f"a=s raises={raised} heisenberg1+euclidean verdict={verdict}")


def test_criterion_4_oracle_equivalence(criterion):
    rng = np.random.default_rng(40)
    worst = {}
    for name, qd in ORACLE_GAUGES.items():
        p = rng.standard_normal((1000, qd.n)) * np.exp(rng.uniform(-3, 3, (1000, 1)))
        ours = qd.from_origin(p)
        ref = np.array([oracle_distance(qd, x) for x in p])
        worst[name] = float(np.max(np.abs(ours / ref - 1)))
    detail = " ".join(f"[{k}]={v:.1e}" for k, v in worst.items())
    criterion(4, max(worst.values()) <= 1e-9, f"max rel error {detail}")


def test_criterion_5_homogeneity_left_invariance(criterion):
    rng = np.random.default_rng(50)
    worst = 0.0
    for qd in BUILTIN_GAUGES.values():
        g = qd.group
        p, q, w = rng.uniform(-2, 2, (3, 10_000, qd.n))
        d = qd(p, q)
        for lam in (0.1, 1.0, 7.3):
            worst = max(worst, float(np.max(np.abs(qd(g.dilate(lam, p), g.dilate(lam, q)) / (lam * d) - 1))))
        worst = max(worst, float(np.max(np.abs(qd(g.multiply(w, p), g.multiply(w, q)) / d - 1))))
    criterion(5, worst <= 1e-9, f"max rel error {worst:.2e} over {len(BUILTIN_GAUGES)} gauges x 1e4 pairs")


def test_criterion_6_group_arithmetic(criterion):
    rng = np.random.default_rng(60)
    assoc = 0.0
    for g in (H, F):
        a, b, c = rng.uniform(-2, 2, (3, 10_000, g.n))
        assoc = max(assoc, float(np.max(np.abs(g.multiply(g.multiply(a, b), c) - g.multiply(a, g.multiply(b, c))))))
    p, q = rng.uniform(-2, 2, (2, 10_000, 3))
    law = np.stack([p[:, 0] + q[:, 0], p[:, 1] + q[:, 1],
                    p[:, 2] + q[:, 2] + 0.5 * (p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0])], axis=1)
    law_err = float(np.max(np.abs(H.multiply(p, q) - law) / np.maximum(np.abs(law), 1.0)))
    ok = assoc <= 1e-10 and law_err <= 4 * np.finfo(float).eps
    criterion(6, ok, f"associativity residual={assoc:.1e} heisenberg law error={law_err:.1e}")


def test_criterion_7_submetry(criterion):
    qs = derive_quotient(F, GaugeBall.euclidean(5))
    rep = submetry_check(qs, 1000, seed=70, tol=1e-9)
    worst = max(rep.max_subset_violation, rep.max_superset_violation, rep.max_lift_optimality_violation)
    ok = rep.passed and worst <= 1e-9 and rep.max_lipschitz_violation <= 1e-9
    criterion(7, ok, f"max ball/lift violation={worst:.1e} lipschitz violation={rep.max_lipschitz_violation:.1e}")


def test_criterion_8_end_to_end_cli(criterion, tmp_path, capsys):
    out = tmp_path / "family.json"
    code = main(["refute", "--group", "free_nilpotent_2_3", "--gauge", "euclidean", "--N", "20", "--out", str(out)])
    capsys.readouterr()
    fam, _ = serialize.read_family(out)
    # verify under a metric built here, not the one stored in the file
    rep = verify_family(QuasiDistance(free_nilpotent_2_3(), GaugeBall.euclidean(5)), fam)
    dims = {len(b.center) for b in fam.balls}
    ok = code == 0 and fam.size == 20 and fam.space == "group" and dims == {5} and rep.passed
    criterion(8, ok, f"exit={code} size={fam.size} dims={sorted(dims)} verdict={rep.verdict}")


# -- verifier soundness -----------------------------------------------------


def _bases():
    free = QuasiDistance(F, GaugeBall.euclidean(5))
    line = PlaneModel(s=2, a=1, b=2)
    searched, _ = search_family(plane_metric(PLANE), target=6, budget=20_000, seed=3)
    return [
        (plane_metric(PLANE), generate_r2_family(PLANE, 4)),
        (plane_metric(PLANE), generate_r2_family(PLANE, 5)),
        (plane_metric(line), generate_r2_family(line, 6)),
        (free, lift_family(free, 1, generate_r2_family(PLANE, 4))),
        (plane_metric(PLANE), searched),
    ]


def _mp_center(ball):
    return np.array([ctx.mpf(v) for v in ball.center], dtype=object)


def _oracle_ratio(qd, ci, cj, rj):
    """``d(c_j, c_i) / r_j`` through the grid oracle, with the group product done in mp."""
    g = qd.group
    rel = g.multiply(-cj, ci)
    w = np.asarray(g.weights, dtype=float)
    scaled = np.array([float(v / ctx.mpf(rj) ** int(k)) for v, k in zip(rel, w)])
    layers = [(sl.start, sl.stop) for sl in g.layer_slices()] if qd.ball.form == "layer" else None
    # distances between far-apart balls reach 2**300, past the default grid
    return grid_distance(scaled, qd.ball.form, qd.ball.c, qd.ball.gamma, layers, g.weights,
                         lo=-720.0, hi=720.0, cells=72_000)


def _perturb(qd, fam, rng):
    """Return a family with a violation that is built explicitly, plus a description."""
    balls = list(fam.balls)
    n = len(balls)
    j = int(rng.integers(n))
    i = int((j + rng.integers(1, n)) % n)
    kind = rng.choice(["inflate", "jitter_into", "jitter_off_witness"])
    u = float(np.exp(rng.uniform(np.log(1e-6), np.log(0.5))))
    if kind == "inflate":
        # r_j just past d(c_j, c_i): c_i now lies in ball j
        ratio = _oracle_ratio(qd, _mp_center(balls[i]), _mp_center(balls[j]), balls[j].radius)
        balls[j] = Ball(balls[j].center, ctx.mpf(balls[j].radius) * ctx.mpf(ratio * (1 + u)))
    elif kind == "jitter_into":
        # move c_i to c_j + delta_{t r_j}(v) with |v| = 1 in the plane gauge
        if qd.group.n != 2:
            kind = "jitter_off_witness"
        else:
            t = 1 - u if u < 0.5 else 0.5
            v = rng.standard_normal(2)
            v /= qd.from_origin(v) ** np.asarray(qd.group.weights, dtype=float)
            rt = ctx.mpf(t) * ctx.mpf(balls[j].radius)
            cj = _mp_center(balls[j])
            ci = np.array([cj[k] + rt ** int(qd.group.weights[k]) * ctx.mpf(v[k]) for k in range(2)], dtype=object)
            balls[i] = Ball(ci, balls[i].radius)
    if kind == "jitter_off_witness":
        # dilate c_i about the witness so that d(witness, c_i) = (1 + u) r_i
        w = np.asarray(qd.group.weights, dtype=float)
        ci = _mp_center(balls[i])
        balls[i] = Ball(np.array([v * ctx.mpf(1 + u) ** int(k) for v, k in zip(ci, w)], dtype=object), balls[i].radius)
    return BesicovitchFamily(balls, fam.witness, fam.anchored, fam.space, fam.meta), f"{kind}:{i},{j},u={u:.1e}"


def test_criterion_9_verifier_soundness(criterion):
    bases = _bases()
    originals_ok = all(verify_family(qd, fam).passed for qd, fam in bases)
    rng = np.random.default_rng(90)
    missed = []
    kinds = {}
    for _ in range(100):
        qd, fam = bases[int(rng.integers(len(bases)))]
        bad, desc = _perturb(qd, fam, rng)
        kind = desc.split(":")[0]
        kinds[kind] = kinds.get(kind, 0) + 1
        if verify_family(qd, bad).passed:
            missed.append(desc)
    counts = " ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
    criterion(9, originals_ok and not missed,
              f"originals pass={originals_ok} flagged={100 - len(missed)}/100 ({counts}) missed={missed[:3]}")
