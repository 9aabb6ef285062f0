"""Command-line interface: ``tracenorm {gen,complete,regress,path,check}``.

Exit codes: 0 certified, 2 uncertified or solver/oracle disagreement,
3 input error, 4 numerical failure.
"""

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets, formats
from .formats import FormatError
from .geometry import FixedRankPoint
from .linalg import ConvergenceError
from .oracle import OracleConfig, solve_convex_dense
from .problems import MatrixCompletion, MultivariateRegression, RegressionData
from .regpath import PathConfig, compute_path, lambda_grid, predictor_win_rate
from .solver import SolverConfig, minimize
from .trustregion import TrustRegionConfig

log = logging.getLogger("tracenorm")

EXIT_OK, EXIT_UNCERTIFIED, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4
CHECK_RTOL = 1e-5

DEFAULTS = {
    "seed": None,
    "lambda": None,
    "lambda_max": None,
    "lambda_min": None,
    "gamma": 0.95,
    "rank0": None,
    "max_rank": None,
    "eps_sigma": 1e-5,
    "eps_gap": 1e-5,
    "predictor": "on",
    "ridge": 0.0,
    "trace": False,
    "grad_tol": 1e-7,
    "scaled": True,
    "compare": False,
    "workers": 1,
    # gen
    "kind": "completion",
    "n": 100,
    "m": 100,
    "q": 120,
    "k": 100,
    "rank": 10,
    "oversampling": None,
    "fraction": None,
    "noise": 0.0,
    "snr": None,
    "train_fraction": 0.7,
}


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _shared(p):
    # defaults are None so that only explicitly given flags override the config file
    p.add_argument("--seed", type=int, default=None, help="root seed of all random streams")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--config", type=Path, help="JSON file of option defaults")
    p.add_argument("--lambda", dest="lambda_", type=float, action="append",
                   help="trace-norm weight (repeatable for check)")
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rank0", type=int, help="start from a random point of this rank")
    p.add_argument("--max-rank", type=int)
    p.add_argument("--eps-sigma", type=float,
                   help="threshold on sigma_1 - lambda, relative to the norm of the dual at zero")
    p.add_argument("--eps-gap", type=float, help="threshold on the relative duality gap")
    p.add_argument("--predictor", choices=["on", "off"])
    p.add_argument("--ridge", type=float, metavar="MU")
    p.add_argument("--trace", action="store_true", default=None, help="write trace.jsonl")
    p.add_argument("--grad-tol", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="tracenorm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    _shared(g)
    g.add_argument("--kind", choices=["completion", "regression"])
    g.add_argument("--n", type=int, help="rows (completion) or samples (regression)")
    g.add_argument("--m", type=int, help="columns (completion)")
    g.add_argument("--q", type=int, help="predictors (regression)")
    g.add_argument("--k", type=int, help="responses (regression)")
    g.add_argument("--rank", type=int)
    g.add_argument("--oversampling", "--os", type=float)
    g.add_argument("--fraction", type=float, help="fraction of revealed entries")
    g.add_argument("--noise", type=float, help="noise standard deviation")
    g.add_argument("--snr", type=float, help="signal-to-noise ratio (regression)")
    g.add_argument("--train-fraction", type=float)

    for name, helptext in [("complete", "solve a completion problem at one lambda"),
                           ("regress", "solve a regression problem at one lambda"),
                           ("path", "regularization path over a lambda grid"),
                           ("check", "cross-check the solver against the dense oracle")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input", type=Path, help="instance directory or .mtx file")
        _shared(p)
        if name in ("path", "check"):
            p.add_argument("--kind", choices=["completion", "regression"])
        if name in ("regress", "path", "check"):
            p.add_argument("--scaled", choices=["on", "off"], help="1/(n k) scaling of the regression loss")
        if name == "path":
            p.add_argument("--compare", action="store_true", default=None,
                           help="also run with the predictor disabled")
        if name == "check":
            p.add_argument("--workers", type=int)
    return parser


def effective_config(args):
    cfg = dict(DEFAULTS)
    if args.config is not None:
        try:
            loaded = formats.load_json(args.config)
        except OSError as err:
            raise InputError(f"cannot read config: {err}") from None
        if not isinstance(loaded, dict):
            raise InputError(f"{args.config}: expected a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise InputError(f"{args.config}: unknown keys {sorted(unknown)}")
        cfg.update(loaded)
    for key, val in vars(args).items():
        if val is None or key in ("config", "out", "input", "command", "verbose"):
            continue
        if key == "lambda_":
            cfg["lambda"] = val if len(val) > 1 or args.command == "check" else val[0]
        elif key == "scaled":
            cfg["scaled"] = val == "on"
        else:
            cfg[key] = val
    cfg["command"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg):
    def positive(name):
        if cfg[name] is not None and not cfg[name] > 0:
            raise InputError(f"{name} must be positive")

    for name in ("eps_sigma", "eps_gap", "lambda_max", "lambda_min", "grad_tol"):
        positive(name)
    lam = cfg["lambda"]
    lams = lam if isinstance(lam, list) else [lam]
    if any(v is not None and not v > 0 for v in lams):
        raise InputError("lambda must be positive")
    if not 0 < cfg["gamma"] < 1:
        raise InputError("gamma must lie in (0, 1)")
    if cfg["ridge"] < 0:
        raise InputError("ridge must be nonnegative")
    for name in ("rank0", "max_rank"):
        if cfg[name] is not None and cfg[name] < 1:
            raise InputError(f"{name} must be at least 1")
    if cfg["command"] in ("complete", "regress"):
        if cfg["lambda"] is None:
            raise InputError("--lambda is required")
        if isinstance(cfg["lambda"], list):
            raise InputError("give a single --lambda")
    if cfg["command"] == "check":
        if not cfg["lambda"]:
            cfg["lambda"] = [1e-3, 1e-1, 1.0]
        elif not isinstance(cfg["lambda"], list):
            cfg["lambda"] = [cfg["lambda"]]


# ---------------------------------------------------------------------------
# loading instances


def _detect_kind(path):
    if path.is_file() or (path / "observed.mtx").exists():
        return "completion"
    if (path / "X.csv").exists():
        return "regression"
    raise InputError(f"{path}: not a completion (.mtx) or regression instance")


def load_completion(path, ridge=0.0):
    """Model and optional ground truth from a .mtx file or a gen directory."""
    path = Path(path)
    mtx = path if path.is_file() else path / "observed.mtx"
    if not mtx.exists():
        raise InputError(f"{mtx}: no such file")
    entries = formats.read_matrix_market(mtx)
    truth = None
    if path.is_dir() and (path / "left.csv").exists():
        truth = formats.read_dense(path / "left.csv") @ formats.read_dense(path / "right.csv").T
        if truth.shape != entries.shape:
            raise InputError(f"{path}: truth shape {truth.shape} differs from {entries.shape}")
    return MatrixCompletion(entries, ridge=ridge), truth


def load_regression(path, scaled=True, ridge=0.0):
    """Model plus held-out ``(X_test, Y_test)`` when a split is present."""
    path = Path(path)
    if not (path / "X.csv").exists():
        raise InputError(f"{path}: missing X.csv")
    X = formats.read_dense(path / "X.csv")
    test = None
    if (path / "split.json").exists():
        split = formats.load_json(path / "split.json")
        try:
            train = np.asarray(split["train"], dtype=np.int64)
            test_idx = np.asarray(split["test"], dtype=np.int64)
        except (KeyError, TypeError, ValueError):
            raise InputError(f"{path}/split.json: expected integer lists 'train' and 'test'") from None
        if np.any(train < 0) or np.any(train >= X.shape[0]) or np.any(test_idx < 0) or np.any(test_idx >= X.shape[0]):
            raise InputError(f"{path}/split.json: index out of range")
        Y_train = formats.read_dense(path / "Y_train.csv")
        if Y_train.shape[0] != train.size:
            raise InputError(f"{path}: Y_train has {Y_train.shape[0]} rows, split has {train.size}")
        if (path / "Y.csv").exists() and test_idx.size:
            test = (X[test_idx], formats.read_dense(path / "Y.csv")[test_idx])
        X = X[train]
        Y = Y_train
    else:
        Y = formats.read_dense(path / "Y.csv")
    try:
        data = RegressionData(X, Y)
    except ValueError as err:
        raise InputError(str(err)) from None
    return MultivariateRegression(data, scaled=scaled, ridge=ridge), test


def _load(cfg, path, kind=None):
    kind = kind or cfg.get("kind_override") or _detect_kind(path)
    if kind == "completion":
        model, truth = load_completion(path, cfg["ridge"])
        return kind, model, {"truth": truth}
    model, test = load_regression(path, cfg["scaled"], cfg["ridge"])
    return kind, model, {"test": test}


# ---------------------------------------------------------------------------
# solver plumbing


def solver_config(cfg, model):
    scale = model.lambda_max()
    eps_sigma = cfg["eps_sigma"] * (scale if scale > 0 else 1.0)
    kw = {}
    if cfg["rank0"] is not None:
        kw = {"p0": cfg["rank0"], "init": "random"}
    return SolverConfig(
        epsilon_sigma=eps_sigma,
        epsilon_gap=cfg["eps_gap"],
        max_rank=cfg["max_rank"],
        tr_cfg=TrustRegionConfig(grad_tol=cfg["grad_tol"]),
        seed=0 if cfg["seed"] is None else cfg["seed"],
        **kw,
    ), scale


def summarize(sol, model, extras):
    x = sol.point
    out = {
        "lambda": sol.lam,
        "rank": x.rank,
        "objective": sol.objective,
        "duality_gap": sol.duality_gap,
        "rel_duality_gap": sol.rel_duality_gap,
        "sigma_gap": sol.sigma_gap,
        "certified": sol.certified,
        "tr_iterations": sol.tr_iterations,
        "rank_history": [h["rank"] for h in sol.history],
        "wall_time": sol.wall_time,
    }
    if isinstance(model, MatrixCompletion):
        out["training_error"] = model.training_error(x)
        truth = extras.get("truth")
        if truth is not None:
            out["rel_error"] = float(np.linalg.norm(x.to_dense() - truth) / np.linalg.norm(truth))
    else:
        test = extras.get("test")
        if test is not None:
            out["test_rmse"] = model.test_rmse(x, *test)
    return out


def write_factors(out, x):
    formats.write_dense(out / "U.csv", x.U)
    formats.write_dense(out / "B.csv", x.B)
    formats.write_dense(out / "V.csv", x.V)


def read_factors(out):
    return FixedRankPoint(formats.read_dense(out / "U.csv"), formats.read_dense(out / "B.csv"),
                          formats.read_dense(out / "V.csv"))


def _trace(cfg, out, **static):
    return formats.TraceWriter(out / "trace.jsonl", **static) if cfg["trace"] else None


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg, out):
    if cfg["seed"] is None:
        raise InputError("--seed is required for gen")
    if cfg["kind"] == "completion":
        if cfg["oversampling"] is None and cfg["fraction"] is None:
            raise InputError("give --oversampling or --fraction")
        try:
            inst = datasets.make_completion(cfg["n"], cfg["m"], cfg["rank"], cfg["seed"],
                                            oversampling=cfg["oversampling"],
                                            fraction=cfg["fraction"], noise=cfg["noise"])
        except ValueError as err:
            raise InputError(str(err)) from None
        formats.write_matrix_market(out / "observed.mtx", inst.entries)
        formats.write_dense(out / "left.csv", inst.left)
        formats.write_dense(out / "right.csv", inst.right)
        meta = {"kind": "completion", "shape": [cfg["n"], cfg["m"]], "rank": cfg["rank"],
                "observed": len(inst.entries)}
    else:
        try:
            inst = datasets.make_regression(cfg["n"], cfg["q"], cfg["k"], cfg["rank"], cfg["seed"],
                                            train_fraction=cfg["train_fraction"], snr=cfg["snr"],
                                            noise=cfg["noise"] if cfg["snr"] is None else None)
        except ValueError as err:
            raise InputError(str(err)) from None
        formats.write_dense(out / "X.csv", inst.X)
        formats.write_dense(out / "W.csv", inst.W)
        formats.write_dense(out / "Y.csv", inst.Y)
        formats.write_dense(out / "Y_train.csv", inst.Y_train)
        formats.dump_json(out / "split.json", {"train": inst.train, "test": inst.test})
        meta = {"kind": "regression", "n": cfg["n"], "q": cfg["q"], "k": cfg["k"],
                "rank": cfg["rank"], "noise_std": inst.noise_std}
    formats.dump_json(out / "meta.json", meta)
    log.info("wrote %s instance to %s", meta["kind"], out)
    return EXIT_OK


def _solve_single(cfg, out, kind):
    _, model, extras = _load(cfg, cfg["input"], kind)
    scfg, scale = solver_config(cfg, model)
    sink = _trace(cfg, out, command=cfg["command"])
    try:
        sol = minimize(model, cfg["lambda"], scfg, sink=sink)
    finally:
        if sink is not None:
            sink.close()
    write_factors(out, sol.point)
    summary = summarize(sol, model, extras)
    summary["eps_sigma_abs"] = scfg.epsilon_sigma
    summary["dual_norm_at_zero"] = scale
    formats.dump_json(out / "summary.json", summary)
    log.info("rank %d, certified %s, gap %.3e", sol.rank, sol.certified, sol.duality_gap)
    return EXIT_OK if sol.certified else EXIT_UNCERTIFIED


def cmd_complete(cfg, out):
    return _solve_single(cfg, out, "completion")


def cmd_regress(cfg, out):
    return _solve_single(cfg, out, "regression")


PATH_FIELDS = ["lambda", "rank", "objective", "gap", "rel_gap", "sigma_gap", "iterations",
               "mode", "inaccuracy", "warm_inaccuracy", "certified"]


def _write_path_csv(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PATH_FIELDS)
        w.writeheader()
        for rec in result.records:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in rec.row().items()})


def cmd_path(cfg, out):
    _, model, _ = _load(cfg, cfg["input"], cfg.get("kind_override"))
    scfg, scale = solver_config(cfg, model)
    lam_max = cfg["lambda_max"] or scale
    lam_min = cfg["lambda_min"] or lam_max * 1e-6
    if not lam_min < lam_max:
        raise InputError("lambda-min must be below lambda-max")
    lams = lambda_grid(lam_max, lam_min, cfg["gamma"])
    summary = {"n_lambda": int(lams.size), "lambda_max": lam_max, "lambda_min": lam_min}
    runs = [("path.csv", cfg["predictor"] == "on")]
    if cfg["compare"]:
        runs.append(("path_warm.csv" if runs[0][1] else "path_predicted.csv", not runs[0][1]))
    status = EXIT_OK
    for fname, pred in runs:
        pcfg = PathConfig(lam_max, lam_min, cfg["gamma"], solver_cfg=scfg, predictor_enabled=pred)
        sink = _trace(cfg, out, command="path", predictor=pred) if fname == "path.csv" else None
        try:
            res = compute_path(model, pcfg, lambdas=lams, sink=sink)
        finally:
            if sink is not None:
                sink.close()
        _write_path_csv(out / fname, res)
        warm, predicted = res.mode_counts()
        rate, count = predictor_win_rate(res)
        summary[fname] = {
            "predictor": pred,
            "all_certified": res.all_certified(),
            "total_iterations": res.total_iterations,
            "mean_iterations": res.total_iterations / max(len(res), 1),
            "warm_records": warm,
            "predicted_records": predicted,
            "rank_changes": res.rank_changes(),
            "predictor_win_rate": None if math.isnan(rate) else rate,
            "compared_records": count,
            "wall_time": res.wall_time,
        }
        if not res.all_certified():
            status = EXIT_UNCERTIFIED
    formats.dump_json(out / "summary.json", summary)
    return status


def _check_one(model, lam, scfg, ocfg):
    sol = minimize(model, lam, scfg)
    orc = solve_convex_dense(model, lam, ocfg)
    rel = abs(sol.objective - orc.objective) / max(abs(orc.objective), 1e-300)
    if not orc.converged:
        status = "inconclusive"
    elif rel <= CHECK_RTOL and sol.rank == orc.rank():
        status = "agree"
    else:
        status = "disagree"
    return {
        "lambda": lam,
        "status": status,
        "solver_objective": sol.objective,
        "oracle_objective": orc.objective,
        "rel_difference": rel,
        "solver_rank": sol.rank,
        "oracle_rank": orc.rank(),
        "solver_rel_gap": sol.rel_duality_gap,
        "oracle_rel_gap": orc.rel_gap,
        "solver_certified": sol.certified,
        "oracle_iterations": orc.iterations,
    }


def cmd_check(cfg, out):
    _, model, _ = _load(cfg, cfg["input"], cfg.get("kind_override"))
    n, m = model.shape
    if n * m > 10**6:
        raise InputError(f"{n} x {m} is too large for the dense oracle")
    scfg, _ = solver_config(cfg, model)
    ocfg = OracleConfig()
    lams = cfg["lambda"]
    with ThreadPoolExecutor(max_workers=max(1, cfg["workers"])) as pool:
        rows = list(pool.map(lambda lam: _check_one(model, lam, scfg, ocfg), lams))
    formats.dump_json(out / "check.json", {"results": rows})
    for r in rows:
        log.info("lambda %.3g: %s (rel diff %.2e)", r["lambda"], r["status"], r["rel_difference"])
    return EXIT_OK if all(r["status"] == "agree" for r in rows) else EXIT_UNCERTIFIED


COMMANDS = {"gen": cmd_gen, "complete": cmd_complete, "regress": cmd_regress,
            "path": cmd_path, "check": cmd_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = effective_config(args)
        if args.command != "gen":
            cfg["input"] = args.input
            if getattr(args, "kind", None):
                cfg["kind_override"] = args.kind
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        formats.dump_json(out / "config.json", {k: (str(v) if isinstance(v, Path) else v)
                                                for k, v in cfg.items()})
        return COMMANDS[args.command](cfg, out)
    except (InputError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (np.linalg.LinAlgError, FloatingPointError, ConvergenceError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
