"""JSON and CSV I/O for families and reports.

Floats are written with Python's shortest round-trip repr. Multiprecision
numbers (coordinates of generated families) are written as decimal strings
with enough digits to round-trip at the working precision.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from ._mp import ctx, is_wide, to_str
from .besicovitch import Ball, BesicovitchFamily, GeneratorRecord, PipelineReport
from .errors import ShapeError
from .gauge import QuasiDistance, gauge_from_dict, gauge_to_dict, plane_metric
from .groups import PlaneModel, builtin, group_from_dict, group_to_dict


def num_out(x):
    if is_wide(x):
        return to_str(x)
    x = float(x)
    return x if math.isfinite(x) else None


def num_in(x):
    if isinstance(x, str):
        try:
            return ctx.mpf(x)
        except (ValueError, TypeError) as exc:
            raise ShapeError(f"not a number: {x!r}") from exc
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ShapeError(f"not a number: {x!r}")
    return float(x)


def _vector_in(v) -> np.ndarray:
    if not isinstance(v, list):
        raise ShapeError(f"expected a list of numbers, got {type(v).__name__}")
    vals = [num_in(x) for x in v]
    if any(is_wide(x) for x in vals):
        return np.array([ctx.mpf(x) for x in vals], dtype=object)
    return np.array(vals, dtype=float)


def model_to_dict(m: PlaneModel) -> dict:
    return {"s": m.s, "a": m.a, "b": m.b, "alpha": m.alpha, "beta": m.beta}


def model_from_dict(d: dict) -> PlaneModel:
    try:
        return PlaneModel(s=d["s"], a=d["a"], b=d["b"], alpha=d.get("alpha", 1.0), beta=d.get("beta", 1.0))
    except (KeyError, TypeError) as exc:
        raise ShapeError(f"malformed plane model: {exc}") from exc


def family_to_dict(fam: BesicovitchFamily, metric: QuasiDistance | None = None) -> dict:
    """Serialise a family together with the space it lives in.

    Plane families carry their model (from the generator record); group
    families carry the group and gauge of ``metric``.
    """
    out: dict = {"space": fam.space}
    if fam.space == "plane":
        if fam.meta is not None:
            out["model"] = model_to_dict(fam.meta.model)
        elif metric is not None:
            c, gam = metric.ball.c, metric.ball.gamma
            out["model"] = {"s": float(metric.group.s), "a": gam[0], "b": gam[1], "alpha": c[0], "beta": c[1]}
    elif metric is not None:
        if metric.group.name:
            out["group_ref"] = metric.group.name
        out["group"] = group_to_dict(metric.group)
        out["gauge"] = gauge_to_dict(metric.ball)
    out["anchored"] = fam.anchored
    out["witness"] = [num_out(x) for x in fam.witness]
    out["balls"] = [{"center": [num_out(x) for x in b.center], "radius": num_out(b.radius)} for b in fam.balls]
    if fam.meta is not None:
        m = fam.meta
        out["meta"] = {
            "r": m.r,
            "margin": m.margin,
            "log2_epsilons": list(m.log2_epsilons),
            "epsilons": [num_out(e) for e in m.epsilons],
            "model": model_to_dict(m.model),
        }
    return out


def family_from_dict(d: dict) -> tuple[BesicovitchFamily, QuasiDistance | None]:
    """Parse a family; also returns the metric described in the file, if any."""
    if not isinstance(d, dict):
        raise ShapeError("family document must be a JSON object")
    try:
        space = d.get("space", "plane")
        balls = tuple(Ball(_vector_in(b["center"]), num_in(b["radius"])) for b in d["balls"])
        witness = _vector_in(d["witness"])
        meta = None
        if "meta" in d and d["meta"] is not None:
            m = d["meta"]
            model = model_from_dict(m.get("model") or d["model"])
            if "log2_epsilons" in m:
                logs = tuple(int(k) for k in m["log2_epsilons"])
            else:
                logs = tuple(int(round(-math.log2(float(e)))) for e in m["epsilons"])
            meta = GeneratorRecord(model, float(m["r"]), logs, float(m.get("margin", 0.0)))
        metric = None
        if space == "plane" and "model" in d:
            metric = plane_metric(model_from_dict(d["model"]))
        elif space == "group" and "gauge" in d:
            if "group" in d:
                g = group_from_dict(d["group"], name=d.get("group_ref"))
            else:
                g = builtin(d["group_ref"])
            metric = QuasiDistance(g, gauge_from_dict(d["gauge"]))
    except (KeyError, TypeError) as exc:
        raise ShapeError(f"malformed family document: missing or invalid {exc}") from exc
    fam = BesicovitchFamily(balls, witness, bool(d.get("anchored", False)), space, meta)
    return fam, metric


def dumps(doc) -> str:
    return json.dumps(doc, allow_nan=False) + "\n"


def write_family(path, fam: BesicovitchFamily, metric: QuasiDistance | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(family_to_dict(fam, metric)))


def read_family(path) -> tuple[BesicovitchFamily, QuasiDistance | None]:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ShapeError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return family_from_dict(doc)


def family_to_csv(fam: BesicovitchFamily) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = len(fam.witness)
    w.writerow([f"center_{k}" for k in range(1, n + 1)] + ["radius"])
    for b in fam.balls:
        w.writerow([_csv_num(x) for x in b.center] + [_csv_num(b.radius)])
    return buf.getvalue()


def family_from_csv(text: str, witness=None) -> BesicovitchFamily:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][-1] != "radius":
        raise ShapeError("CSV must start with a center_1..center_n,radius header")
    n = len(rows[0]) - 1
    balls = []
    for row in rows[1:]:
        vals = [num_in(_csv_parse(x)) for x in row]
        center = np.array(vals[:n], dtype=object if any(is_wide(v) for v in vals[:n]) else float)
        balls.append(Ball(center, vals[n]))
    return BesicovitchFamily(tuple(balls), np.zeros(n) if witness is None else np.asarray(witness))


def _csv_num(x) -> str:
    return to_str(x) if is_wide(x) else repr(float(x))


def _csv_parse(s: str):
    """Float for anything a float repr could have produced, else a multiprecision string."""
    try:
        v = float(s)
    except ValueError as exc:
        raise ShapeError(f"not a number: {s!r}") from exc
    mantissa = s.strip().lstrip("+-").lower().split("e")[0].replace(".", "").lstrip("0")
    if not math.isfinite(v) or len(mantissa) > 17 or (v == 0 and mantissa):
        return s
    return v


def points_to_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = points.shape[1]
    w.writerow([f"x_{k}" for k in range(1, n + 1)])
    for row in points:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def pipeline_to_dict(rep: PipelineReport) -> dict:
    out = {
        "verdict": rep.verdict,
        "message": rep.message,
        "step": rep.step,
        "gamma_star": num_out(rep.gamma_star),
        "index": rep.index,
        "plane_model": model_to_dict(rep.plane_model) if rep.plane_model else None,
        "family_size": rep.family.size if rep.family else None,
        "log2_epsilons": list(rep.family.meta.log2_epsilons) if rep.family and rep.family.meta else None,
        "verification": _summary(rep.verification),
    }
    if rep.search_family is not None:
        out["search"] = {"family_size": rep.search_family.size, "verification": _summary(rep.search_verification)}
    return out


def _summary(rep) -> dict | None:
    if rep is None:
        return None
    return {
        "verdict": rep.verdict,
        "size": rep.size,
        "tol": rep.tol,
        "max_abs_witness_residual": max(abs(x) for x in rep.witness_residuals),
        "min_exclusion_margin": num_out(rep.min_margin) if rep.min_margin is not None else None,
        "failing_balls": rep.failing_balls,
        "failing_pairs": [list(p) for p in rep.failing_pairs],
    }

