"""Command-line entry point: prox / fit / se / phase / gen / experiment.

All machine-readable output is JSON on stdout (``--pretty`` for humans);
every random quantity flows from ``--seed``.  Exit codes: 0 success,
1 domain error (bad data, failed solve, failed assertion), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, datagen, experiments, matrixio, solvers, state_evolution
from .sorted_l1 import WeightVector, prox_sorted_l1

log = logging.getLogger("slope_lab")


def _json_dump(obj, pretty: bool) -> str:
    return json.dumps(obj, sort_keys=True, indent=2 if pretty else None)


def _load_weights(args, p: int) -> WeightVector:
    if getattr(args, "weights_file", None):
        return WeightVector(matrixio.read_vector(args.weights_file))
    kind = getattr(args, "weights_kind", None)
    if kind is None:
        raise ValueError("need --weights-kind or --weights-file")
    return datagen.gen_weights(datagen.WeightSpec(kind=kind, p=p, q_bh=args.q_bh))


def _out_path(args, path):
    if args.output_dir and not os.path.isabs(path):
        os.makedirs(args.output_dir, exist_ok=True)
        return os.path.join(args.output_dir, path)
    return path


def cmd_prox(args) -> int:
    with open(args.input) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError("prox input needs two whitespace-separated lines: "
                         "the vector, then the weights")
    u = np.array([float(t) for t in lines[0].split()])
    lam = WeightVector(np.array([float(t) for t in lines[1].split()]))
    res = prox_sorted_l1(u, args.gamma, lam)
    print(_json_dump({"eta": res.eta.tolist()}, args.pretty))
    print(_json_dump({
        "groups": [g.tolist() for g in res.groups],
        "active_groups": [g.tolist() for g in res.active_groups],
        "permutation": res.permutation.tolist(),
    }, args.pretty))
    return 0


def _parse_grid(text: str) -> np.ndarray:
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.geomspace(float(lo), float(hi), int(num))
    return np.array([float(t) for t in text.split(",")])


def cmd_fit(args) -> int:
    A = matrixio.read_matrix(args.design)
    y = matrixio.read_vector(args.response)
    inst = solvers.LinearModelInstance(A=A, y=y)
    weights = None
    if args.estimator == "slope":
        weights = _load_weights(args, inst.p)
    payload = {}
    if args.gamma is not None:
        gamma = args.gamma
    else:
        if args.grid is None:
            raise ValueError("need --gamma or --grid for cross-validation")
        grid = _parse_grid(args.grid)
        gamma, curve = solvers.cross_validate(
            inst, args.estimator, grid, folds=args.cv_folds, seed=args.seed,
            weights=weights, q=args.q)
        payload["cv"] = {"best_gamma": gamma, "curve": curve.tolist()}
    res = solvers._fit_kind(inst, args.estimator, gamma, weights=weights, q=args.q)
    payload.update({
        "x_hat": res.x_hat.tolist(),
        "iterations": res.iterations,
        "objective": res.objective,
        "kkt_residual": res.kkt_residual,
        "tuning": res.tuning,
        "converged": res.converged,
    })
    print(_json_dump(payload, args.pretty))
    return 0


def _load_signal(args) -> np.ndarray:
    if args.signal_file:
        return matrixio.read_vector(args.signal_file)
    if args.signal_kind is None:
        raise ValueError("need --signal-file or --signal-kind")
    spec = datagen.SignalSpec(kind=args.signal_kind, p=args.p,
                              epsilon=args.epsilon, amplitude=args.amplitude)
    return datagen.gen_signal(spec, seed=args.seed)


def cmd_se(args) -> int:
    x = _load_signal(args)
    weights = _load_weights(args, x.size)
    prob = state_evolution.SEProblem(x=x, weights=weights, delta=args.delta,
                                     sigma_z=args.sigma_z, seed=args.seed,
                                     mc_samples=args.mc_samples)
    if args.optimal:
        e_star, gamma_star, st = state_evolution.optimal_risk(prob)
        payload = {"e_star": e_star, "gamma_star": gamma_star}
    elif args.gamma is not None:
        st = state_evolution.solve_se(prob, args.gamma)
        payload = {}
    else:
        raise ValueError("need --gamma or --optimal")
    payload.update({
        "sigma_star": st.sigma_star,
        "chi_star": st.chi_star,
        "gamma": st.gamma,
        "predicted_mse": st.predicted_mse,
        "mc_samples": st.mc_samples,
        "mc_std_err": st.mc_std_err,
    })
    print(_json_dump(payload, args.pretty))
    return 0


def cmd_phase(args) -> int:
    kinds = args.weights_kind or []
    if not kinds:
        raise ValueError("give at least one --weights-kind")
    k = int(round(args.epsilon * args.p))
    lines = ["weights,p,k,m_lambda,stderr,delta,noise_sensitivity"]
    for kind in kinds:
        lam = datagen.gen_weights(datagen.WeightSpec(kind=kind, p=args.p,
                                                     q_bh=args.q_bh))
        est = state_evolution.m_lambda(k, lam, mc_samples=args.mc_samples,
                                       seed=args.seed)
        sens = state_evolution.noise_sensitivity(args.delta, est.value)
        lines.append(f"{kind},{args.p},{k},{float(est.value)!r},"
                     f"{float(est.stderr)!r},{float(args.delta)!r},{float(sens)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(_out_path(args, args.out), "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args) -> int:
    if args.what == "design":
        spec = datagen.DesignSpec(kind=args.design_kind, n=args.n, p=args.p,
                                  rho=args.rho, df=args.df)
        M = datagen.gen_design(spec, seed=args.seed)
    elif args.what == "signal":
        spec = datagen.SignalSpec(kind=args.signal_kind, p=args.p,
                                  epsilon=args.epsilon, amplitude=args.amplitude)
        M = datagen.gen_signal(spec, seed=args.seed).reshape(-1, 1)
    else:
        lam = datagen.gen_weights(datagen.WeightSpec(kind=args.weights_kind,
                                                     p=args.p, q_bh=args.q_bh))
        M = lam.weights.reshape(-1, 1)
    matrixio.write_matrix(_out_path(args, args.out), M, fmt=args.format)
    log.info("wrote %s", args.out)
    return 0


def cmd_experiment(args) -> int:
    spec = experiments.load_spec(args.spec)
    table = experiments.run_experiment(spec, threads=args.threads)
    outputs = spec.outputs or {}
    csv_path = _out_path(args, outputs.get("csv", f"{spec.name}.csv"))
    experiments.emit_csv(table, csv_path)
    log.info("wrote %s", csv_path)
    if "svg" in outputs:
        experiments.emit_svg(table, _out_path(args, outputs["svg"]))
    manifest = dict(table.provenance)
    manifest["spec"] = spec.to_dict()
    manifest["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    mf_path = _out_path(args, outputs.get("manifest", f"{spec.name}.manifest.json"))
    with open(mf_path, "w") as fh:
        fh.write(_json_dump(manifest, True) + "\n")
    failed = 0
    if args.check_assertions:
        for desc, ok in experiments.evaluate_assertions(table, spec.assertions):
            print(f"[{'PASS' if ok else 'FAIL'}] {desc}")
            failed += 0 if ok else 1
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slope-lab",
                                 description="sorted-L1 regression toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--seed", type=int, default=0, help="master seed (nonnegative)")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("SLOPE_LAB_THREADS", "0")),
                    help="worker threads; 0 = auto")
    ap.add_argument("--log-level", default="warning",
                    choices=["debug", "info", "warning", "error"])
    ap.add_argument("--output-dir", default=None,
                    help="directory for relative output paths")
    ap.add_argument("--pretty", action="store_true", help="indent JSON output")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prox", help="sorted-L1 prox of a vector from a text file")
    p.add_argument("--input", required=True,
                   help="text file: line 1 the vector, line 2 the weights")
    p.add_argument("--gamma", type=float, required=True)
    p.set_defaults(func=cmd_prox)

    p = sub.add_parser("fit", help="fit one estimator on a stored instance")
    p.add_argument("--design", required=True, help="matrix file (bin or csv)")
    p.add_argument("--response", required=True, help="vector file (bin or csv)")
    p.add_argument("--estimator", required=True,
                   choices=["slope", "lasso", "ridge", "bridge"])
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--q", type=float, default=None, help="bridge exponent")
    p.add_argument("--weights-kind", default=None, choices=datagen.WEIGHT_KINDS)
    p.add_argument("--weights-file", default=None)
    p.add_argument("--q-bh", type=float, default=0.5)
    p.add_argument("--cv-folds", type=int, default=5)
    p.add_argument("--grid", default=None,
                   help="CV grid: 'lo:hi:num' (log-spaced) or 'a,b,c'")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("se", help="state-evolution prediction")
    p.add_argument("--signal-file", default=None)
    p.add_argument("--signal-kind", default=None, choices=datagen.SIGNAL_KINDS)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=5.0)
    p.add_argument("--weights-kind", default=None, choices=datagen.WEIGHT_KINDS)
    p.add_argument("--weights-file", default=None)
    p.add_argument("--q-bh", type=float, default=0.5)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--sigma-z", type=float, required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--optimal", action="store_true",
                   help="solve for the optimally tuned risk")
    p.add_argument("--mc-samples", type=int, default=2000)
    p.set_defaults(func=cmd_se)

    p = sub.add_parser("phase", help="phase threshold and noise sensitivity")
    p.add_argument("--weights-kind", action="append", choices=datagen.WEIGHT_KINDS)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q-bh", type=float, default=0.5)
    p.add_argument("--mc-samples", type=int, default=2000)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("gen", help="emit designs, signals, or weights to files")
    p.add_argument("--what", required=True, choices=["design", "signal", "weights"])
    p.add_argument("--design-kind", default="iid-gaussian", choices=datagen.DESIGN_KINDS)
    p.add_argument("--signal-kind", default="uniform-nonzero", choices=datagen.SIGNAL_KINDS)
    p.add_argument("--weights-kind", default="constant", choices=datagen.WEIGHT_KINDS)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--df", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--amplitude", type=float, default=5.0)
    p.add_argument("--q-bh", type=float, default=0.5)
    p.add_argument("--format", default="bin", choices=["bin", "csv"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("experiment", help="run a JSON experiment spec")
    psub = p.add_subparsers(dest="experiment_command", required=True)
    pr = psub.add_parser("run", help="run the spec and emit CSV/SVG/manifest")
    pr.add_argument("spec", help="path to the JSON experiment spec")
    pr.add_argument("--assert", dest="check_assertions", action="store_true",
                    help="evaluate the spec's assertions; nonzero exit on failure")
    pr.set_defaults(func=cmd_experiment)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 1
    if args.threads < 0:
        print("error: --threads must be nonnegative", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
