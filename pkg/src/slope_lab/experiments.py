"""Declarative experiment runner: replication loops, CV tuning, aggregation.

An ExperimentSpec describes one figure-style experiment (design family,
signal family, weight families, a noise or regularization grid, the
replication count, and a base seed).  Running it yields a ResultTable of
(estimator, grid value, mean MSE, standard error, replication count) rows
plus a provenance block, with full determinism: the same spec and seed
reproduce the table bit for bit.  Tables serialize to CSV with a fixed
header and to a deterministic SVG line chart.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from xml.etree import ElementTree as ET

import numpy as np

from . import datagen
from .rng import derive_seed_sequence
from .solvers import LinearModelInstance, _fit_kind, _prox_path, cross_validate
from .sorted_l1 import WeightVector
from .state_evolution import SEProblem, optimal_risk, solve_se

__all__ = [
    "SpecError",
    "EstimatorSpec",
    "ExperimentSpec",
    "ResultRow",
    "ResultTable",
    "run_experiment",
    "run_figure1",
    "run_noise_sweep",
    "emit_csv",
    "parse_csv",
    "emit_svg",
    "evaluate_assertions",
]

CSV_HEADER = "estimator,x,mean,stderr,m,spec_hash"
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class SpecError(ValueError):
    """Malformed experiment spec; `key` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"spec key {key!r}: {message}")
        self.key = key


def _child_seeds(*parts, count: int):
    ss = derive_seed_sequence(*parts)
    return [int(v) for v in ss.generate_state(count, dtype=np.uint64)]


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    label: str = None
    tuning: str = "cv"
    weights: datagen.WeightSpec = None
    gamma: float = None
    q: float = None

    def __post_init__(self):
        if self.kind not in ("slope", "lasso", "ridge", "bridge"):
            raise SpecError("estimators[].kind", f"unknown kind {self.kind!r}")
        if self.tuning not in ("cv", "fixed", "se-optimal"):
            raise SpecError("estimators[].tuning", f"unknown tuning {self.tuning!r}")
        if self.kind == "slope" and self.weights is None:
            raise SpecError("estimators[].weights", "slope estimators need weights")
        if self.kind == "bridge" and self.q is None:
            raise SpecError("estimators[].q", "bridge estimators need q")
        if self.tuning == "fixed" and self.gamma is None:
            raise SpecError("estimators[].gamma", "fixed tuning needs gamma")
        if self.label is None:
            object.__setattr__(self, "label", self.kind)
        if "," in self.label:
            raise SpecError("estimators[].label", "labels may not contain commas")

    def weight_vector(self, p: int) -> WeightVector:
        if self.kind == "lasso":
            return WeightVector(np.ones(p))
        if self.weights is None:
            return None
        if self.weights.p != p:
            raise SpecError("estimators[].weights.p", "weights p differs from signal p")
        return datagen.gen_weights(self.weights)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    kind: str  # "noise_sweep" or "figure1"
    design: datagen.DesignSpec
    signal: datagen.SignalSpec
    estimators: tuple
    noise_grid: tuple = None
    gamma_grid: tuple = None
    sigma_z: float = None
    replications: int = 20
    base_seed: int = 0
    cv_folds: int = 5
    cv_grid_size: int = 40
    cv_span: tuple = (1e-3, 1e2)
    cv_tol: float = 1e-6
    fit_tol: float = 1e-8
    se_mc_samples: int = 2000
    assertions: tuple = ()
    outputs: dict = None

    def __post_init__(self):
        if self.kind not in ("noise_sweep", "figure1"):
            raise SpecError("kind", f"unknown experiment kind {self.kind!r}")
        if not self.estimators:
            raise SpecError("estimators", "estimator list must be nonempty")
        if self.replications < 1:
            raise SpecError("replications", "need at least one replication")
        if self.kind == "noise_sweep":
            if not self.noise_grid:
                raise SpecError("noise_grid", "noise sweep needs a nonempty grid")
        else:
            if not self.gamma_grid:
                raise SpecError("gamma_grid", "figure1 needs a nonempty gamma grid")
            if self.sigma_z is None:
                raise SpecError("sigma_z", "figure1 needs sigma_z")
            if len(self.estimators) != 1 or self.estimators[0].kind not in ("slope", "lasso"):
                raise SpecError("estimators", "figure1 takes exactly one slope/lasso estimator")
        if self.design.p != self.signal.p:
            raise SpecError("signal.p", "design and signal p differ")

    def to_dict(self) -> dict:
        def enc(obj):
            if isinstance(obj, (datagen.DesignSpec, datagen.SignalSpec, datagen.WeightSpec,
                                EstimatorSpec)):
                return {k: enc(v) for k, v in vars(obj).items() if v is not None}
            if isinstance(obj, tuple):
                return [enc(v) for v in obj]
            return obj

        d = {k: enc(v) for k, v in vars(self).items() if v is not None}
        return d

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _require(d: dict, key: str, path: str):
    if key not in d:
        raise SpecError(f"{path}{key}", "missing required key")
    return d[key]


def _build(cls, d: dict, path: str):
    try:
        return cls(**d)
    except SpecError:
        raise
    except TypeError as exc:
        raise SpecError(path.rstrip("."), str(exc)) from exc
    except ValueError as exc:
        raise SpecError(path.rstrip("."), str(exc)) from exc


def spec_from_dict(raw: dict) -> ExperimentSpec:
    """Parse a JSON-style dict into an ExperimentSpec, naming bad keys."""
    if not isinstance(raw, dict):
        raise SpecError("<root>", "spec must be a JSON object")
    d = dict(raw)
    design = _build(datagen.DesignSpec, _require(d, "design", ""), "design.")
    signal = _build(datagen.SignalSpec, _require(d, "signal", ""), "signal.")
    ests = []
    raw_ests = _require(d, "estimators", "")
    if not isinstance(raw_ests, list):
        raise SpecError("estimators", "must be a list")
    for i, e in enumerate(raw_ests):
        e = dict(e)
        if "weights" in e and e["weights"] is not None:
            e["weights"] = _build(datagen.WeightSpec, e["weights"],
                                  f"estimators[{i}].weights.")
        ests.append(_build(EstimatorSpec, e, f"estimators[{i}]."))
    d["design"], d["signal"], d["estimators"] = design, signal, tuple(ests)
    for key in ("noise_grid", "gamma_grid", "cv_span", "assertions"):
        if key in d and d[key] is not None:
            d[key] = tuple(tuple(a.items()) if isinstance(a, dict) else a for a in d[key]) \
                if key == "assertions" else tuple(d[key])
    return _build(ExperimentSpec, d, "")


def load_spec(path: str) -> ExperimentSpec:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError("<json>", f"not valid JSON: {exc}") from exc
    return spec_from_dict(raw)


@dataclass(frozen=True)
class ResultRow:
    estimator: str
    x: float
    mean: float
    stderr: float
    m: int

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "stderr", float(self.stderr))
        object.__setattr__(self, "m", int(self.m))


@dataclass
class ResultTable:
    rows: list
    provenance: dict

    def series(self, label: str):
        return [r for r in self.rows if r.estimator == label]

    def lookup(self, label: str, x: float) -> ResultRow:
        for r in self.rows:
            if r.estimator == label and r.x == x:
                return r
        raise KeyError(f"no row for ({label!r}, {x})")

    def labels(self):
        seen = []
        for r in self.rows:
            if r.estimator not in seen:
                seen.append(r.estimator)
        return seen


def _cv_grid(inst: LinearModelInstance, spec: ExperimentSpec) -> np.ndarray:
    scale = float(np.max(np.abs(inst.A.T @ inst.y)))
    lo, hi = spec.cv_span
    return scale * np.geomspace(lo, hi, spec.cv_grid_size)


def _tune_and_fit(inst, est: EstimatorSpec, spec: ExperimentSpec, cv_seed: int,
                  gamma_se: float = None):
    weights = est.weight_vector(inst.p)
    if est.tuning == "fixed":
        gamma = est.gamma
    elif est.tuning == "se-optimal":
        gamma = gamma_se
    else:
        grid = _cv_grid(inst, spec)
        gamma, _ = cross_validate(inst, est.kind, grid, folds=spec.cv_folds,
                                  seed=cv_seed, weights=weights, q=est.q,
                                  tol=spec.cv_tol)
    res = _fit_kind(inst, est.kind, gamma, weights=weights, q=est.q,
                    tol=spec.fit_tol)
    return res


def _aggregate(label, x, values):
    vals = np.asarray(values, dtype=np.float64)
    m = vals.size
    mean = float(np.mean(vals)) if m else float("nan")
    stderr = float(np.std(vals, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return ResultRow(estimator=label, x=float(x), mean=mean, stderr=stderr, m=m)


def _map_indexed(fn, items, threads):
    if threads == 0:
        threads = min(4, os.cpu_count() or 1)
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def run_noise_sweep(spec: ExperimentSpec, threads: int = 0) -> ResultTable:
    """MSE of every estimator across the noise grid, CV-tuned per instance.

    Each replication draws a fresh (A, x, z) shared by all estimators.
    Non-converged fits are dropped and counted; more than 20% drops for
    any (estimator, noise) cell fails the run.
    """
    if spec.kind != "noise_sweep":
        raise SpecError("kind", "run_noise_sweep needs a noise_sweep spec")
    m = spec.replications
    gamma_se = {}
    for est in spec.estimators:
        if est.tuning == "se-optimal":
            for xi, sz in enumerate(spec.noise_grid):
                if sz <= 0:
                    raise SpecError("estimators[].tuning",
                                    "se-optimal tuning needs sigma_z > 0")
                seeds = _child_seeds(spec.base_seed, "se-opt", xi, count=2)
                x_canon = datagen.gen_signal(spec.signal, seed=seeds[0])
                prob = SEProblem(x=x_canon, weights=est.weight_vector(spec.signal.p),
                                 delta=spec.design.n / spec.design.p, sigma_z=sz,
                                 seed=seeds[1], mc_samples=spec.se_mc_samples)
                gamma_se[(est.label, xi)] = optimal_risk(prob)[1]

    def one_rep(args):
        xi, sz, rep = args
        seeds = _child_seeds(spec.base_seed, "sweep", xi, rep, count=4)
        A = datagen.gen_design(spec.design, seed=seeds[0])
        x = datagen.gen_signal(spec.signal, seed=seeds[1])
        z = datagen.gen_noise(spec.design.n, sz, seed=seeds[2])
        inst = LinearModelInstance(A=A, y=A @ x + z, x_true=x, z=z, sigma_z=sz)
        out = {}
        for est in spec.estimators:
            res = _tune_and_fit(inst, est, spec, cv_seed=seeds[3],
                                gamma_se=gamma_se.get((est.label, xi)))
            mse = float(np.sum((res.x_hat - x) ** 2)) / spec.signal.p
            out[est.label] = (mse, res.converged)
        return out

    rows = []
    per_cell = {}
    for xi, sz in enumerate(spec.noise_grid):
        reps = _map_indexed(one_rep, [(xi, sz, r) for r in range(m)], threads)
        for est in spec.estimators:
            kept = [r[est.label][0] for r in reps if r[est.label][1]]
            dropped = m - len(kept)
            if dropped > 0.2 * m:
                raise RuntimeError(
                    f"estimator {est.label!r} at noise {sz}: {dropped}/{m} "
                    "replications failed to converge")
            per_cell[(est.label, xi)] = kept
    for est in spec.estimators:
        for xi, sz in enumerate(spec.noise_grid):
            rows.append(_aggregate(est.label, sz, per_cell[(est.label, xi)]))
    return ResultTable(rows=rows, provenance=_provenance(spec))


def run_figure1(spec: ExperimentSpec, threads: int = 0) -> ResultTable:
    """Empirical MSE against the state-evolution prediction on a gamma grid.

    Emits one empirical row per gamma (label = the estimator's) and one
    predicted row per gamma (label = "se").  A failed solve flags its row
    with NaN and m = 0 and the run continues.  A sigma_z of zero runs the
    fits noiselessly but evaluates the prediction at 1e-3.
    """
    if spec.kind != "figure1":
        raise SpecError("kind", "run_figure1 needs a figure1 spec")
    est = spec.estimators[0]
    p = spec.signal.p
    weights = est.weight_vector(p)
    grid = np.asarray(spec.gamma_grid, dtype=np.float64)
    order = np.argsort(-grid, kind="stable")
    m = spec.replications

    def one_rep(rep):
        seeds = _child_seeds(spec.base_seed, "fig1", rep, count=3)
        A = datagen.gen_design(spec.design, seed=seeds[0])
        x = datagen.gen_signal(spec.signal, seed=seeds[1])
        z = datagen.gen_noise(spec.design.n, spec.sigma_z, seed=seeds[2])
        y = A @ x + z
        fits = _prox_path(A, y, est.kind, grid[order], weights=weights,
                          tol=spec.fit_tol)
        mses = np.empty(grid.size)
        ok = np.empty(grid.size, dtype=bool)
        for pos, res in zip(order, fits):
            mses[pos] = float(np.sum((res.x_hat - x) ** 2)) / p
            ok[pos] = res.converged
        return mses, ok

    reps = _map_indexed(one_rep, list(range(m)), threads)
    rows = []
    for gi, g in enumerate(grid):
        kept = [mses[gi] for mses, ok in reps if ok[gi]]
        if m - len(kept) > 0.2 * m:
            raise RuntimeError(f"gamma {g}: too many non-converged fits")
        rows.append(_aggregate(est.label, g, kept))

    seeds = _child_seeds(spec.base_seed, "fig1-se", count=2)
    x_canon = datagen.gen_signal(spec.signal, seed=seeds[0])
    sz_eff = spec.sigma_z if spec.sigma_z > 0 else 1e-3
    prob = SEProblem(x=x_canon, weights=weights, delta=spec.design.n / p,
                     sigma_z=sz_eff, seed=seeds[1], mc_samples=spec.se_mc_samples)
    hint = None
    for g in grid:
        try:
            st = solve_se(prob, float(g), chi_hint=hint)
            hint = st.chi_star
            rows.append(ResultRow(estimator="se", x=float(g), mean=st.predicted_mse,
                                  stderr=st.mc_std_err, m=prob.mc_samples))
        except RuntimeError:
            rows.append(ResultRow(estimator="se", x=float(g), mean=float("nan"),
                                  stderr=float("nan"), m=0))
    return ResultTable(rows=rows, provenance=_provenance(spec))


def run_experiment(spec: ExperimentSpec, threads: int = 0) -> ResultTable:
    if spec.kind == "noise_sweep":
        return run_noise_sweep(spec, threads=threads)
    return run_figure1(spec, threads=threads)


def _provenance(spec: ExperimentSpec) -> dict:
    from . import __version__

    return {"spec_hash": spec.spec_hash(), "base_seed": spec.base_seed,
            "version": __version__}


def emit_csv(table: ResultTable, path) -> None:
    """Fixed-header CSV; float fields use shortest round-trip formatting."""
    lines = [CSV_HEADER]
    h = table.provenance.get("spec_hash", "")
    for r in table.rows:
        lines.append(f"{r.estimator},{r.x!r},{r.mean!r},{r.stderr!r},{r.m},{h}")
    data = "\n".join(lines) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(data)


def parse_csv(path) -> ResultTable:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} is not a result table (bad header)")
    rows = []
    h = ""
    for ln in lines[1:]:
        est, x, mean, stderr, m, h = ln.split(",")
        rows.append(ResultRow(estimator=est, x=float(x), mean=float(mean),
                              stderr=float(stderr), m=int(m)))
    return ResultTable(rows=rows, provenance={"spec_hash": h})


def _svg_scale(vals, lo_px, hi_px, log=False):
    finite = [v for v in vals if math.isfinite(v)]
    if not finite:
        finite = [0.0, 1.0]
    vlo, vhi = min(finite), max(finite)
    if log:
        vlo, vhi = math.log10(vlo), math.log10(vhi)
    if vhi <= vlo:
        vhi = vlo + 1.0
    span = vhi - vlo

    def to_px(v):
        if log:
            v = math.log10(v)
        return lo_px + (v - vlo) / span * (hi_px - lo_px)

    return to_px, vlo, vhi


def emit_svg(table: ResultTable, path) -> None:
    """Deterministic line chart with error bars, one polyline per series."""
    W, H = 640, 480
    ml, mr, mt, mb = 60, 20, 20, 40
    xs = [r.x for r in table.rows]
    use_log = all(v > 0 for v in xs) and (max(xs) / max(min(xs), 1e-300) > 50)
    to_x, _, _ = _svg_scale(xs, ml, W - mr, log=use_log)
    yvals = []
    for r in table.rows:
        if math.isfinite(r.mean):
            yvals += [r.mean - r.stderr, r.mean + r.stderr]
    to_y_raw, ylo, yhi = _svg_scale(yvals, 0.0, 1.0)
    to_y = lambda v: (H - mb) - to_y_raw(v) * (H - mb - mt)

    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(W), height=str(H),
                      viewBox=f"0 0 {W} {H}")
    ET.SubElement(root, "rect", x="0", y="0", width=str(W), height=str(H),
                  fill="white")
    ET.SubElement(root, "line", x1=str(ml), y1=str(H - mb), x2=str(W - mr),
                  y2=str(H - mb), stroke="black")
    ET.SubElement(root, "line", x1=str(ml), y1=str(mt), x2=str(ml),
                  y2=str(H - mb), stroke="black")
    for i, label in enumerate(table.labels()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = [(to_x(r.x), to_y(r.mean)) for r in table.series(label)
               if math.isfinite(r.mean)]
        if pts:
            ET.SubElement(root, "polyline", fill="none", stroke=color,
                          points=" ".join(f"{px:.2f},{py:.2f}" for px, py in pts))
        for r in table.series(label):
            if not (math.isfinite(r.mean) and math.isfinite(r.stderr)):
                continue
            px = to_x(r.x)
            ET.SubElement(root, "line", x1=f"{px:.2f}", y1=f"{to_y(r.mean - r.stderr):.2f}",
                          x2=f"{px:.2f}", y2=f"{to_y(r.mean + r.stderr):.2f}",
                          stroke=color)
        txt = ET.SubElement(root, "text", x=str(W - mr - 150),
                            y=str(mt + 16 * (i + 1)), fill=color)
        txt.text = label
    for v, anchor_y in ((ylo, H - mb), (yhi, mt)):
        txt = ET.SubElement(root, "text", x="4", y=str(anchor_y), fill="black")
        txt.text = f"{v:.4g}"
    blob = ET.tostring(root, encoding="unicode")
    with open(path, "w", newline="\n") as fh:
        fh.write(blob + "\n")


def evaluate_assertions(table: ResultTable, assertions) -> list:
    """Check mean-comparison claims; returns (description, ok) pairs.

    Each assertion is a dict: {"type": "mean_lt", "a": label, "b": label,
    "x": grid value, "margin_stderr": k} asserting mean_a < mean_b by at
    least k combined standard errors at that grid value.
    """
    results = []
    for raw in assertions:
        a = dict(raw) if not isinstance(raw, dict) else raw
        if a.get("type") != "mean_lt":
            raise SpecError("assertions[].type", f"unknown assertion {a.get('type')!r}")
        ra = table.lookup(a["a"], float(a["x"]))
        rb = table.lookup(a["b"], float(a["x"]))
        margin = float(a.get("margin_stderr", 2.0))
        combined = math.hypot(ra.stderr, rb.stderr)
        ok = ra.mean < rb.mean - margin * combined
        desc = (f"mean[{a['a']}]={ra.mean:.5g} < mean[{a['b']}]={rb.mean:.5g} "
                f"- {margin}*{combined:.3g} at x={a['x']}")
        results.append((desc, bool(ok)))
    return results
