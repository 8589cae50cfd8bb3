"""Command-line front end.

``jumbo pretrain``, ``jumbo run``, ``jumbo report`` and ``jumbo theory`` share
one INI-style config file. Every command is deterministic under a fixed
config and writes only inside its output directory.
"""

import argparse
import configparser
import csv
import glob
import io
import itertools
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gp as gplib
from .benchmarks import load_tabular, make_fig3_pair, make_hpo_table
from .errors import InvalidArgument, NumericalFailure, ParseError
from .loop import RunOptions, Strategy, atomic_write, read_trace_csv, run, summary_csv
from .nn import MLPConfig, load_model, per_task_mse, pretrain, save_model
from .theory import information_gain, lemma1_coverage, mig_greedy_path

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

# section -> key -> (type, default)
SCHEMA = {
    "benchmark": {"name": (str, "fig3")},
    "pretrain": {
        "n_points": (int, 500), "data_seed": (int, 0), "restarts": (int, 1),
        "n_layers": (int, 3), "hidden_units": (int, 32), "latent_dim": (int, 4),
        "dropout_rate": (float, 0.0), "learning_rate": (float, 5e-5), "batch_size": (int, 128),
        "epochs": (int, 200), "seed": (int, 0), "val_fraction": (float, 0.2), "patience": (int, 50),
    },
    "run": {
        "strategies": (str, "jumbo, gp-ucb"), "l_alpha": (float, 0.1), "budget": (int, 50),
        "seeds": (str, "0-4"), "model": (str, ""), "n_init": (int, 0), "no_repeat": (bool, True),
    },
    "gp": {
        "kernel": (str, "Matern52"), "lengthscale": (float, 0.5), "signal_variance": (float, 1.0),
        "noise": (float, 0.1), "fit": (bool, True), "steps": (int, 100), "lr": (float, 0.1),
        "standardize": (bool, True), "ucb_scale": (float, 10.0),
    },
    "theory": {
        "delta": (float, 0.1), "trials": (int, 200), "rounds": (int, 15), "domain_size": (int, 50),
        "dim": (int, 1), "kernel": (str, "Matern52"), "lengthscale": (float, 0.2),
        "noise": (float, 0.1), "seed": (int, 0), "n": (int, 10), "candidates": (int, 50),
    },
    "output": {"dir": (str, "jumbo-out")},
}


class UsageError(Exception):
    """Bad flags or config; exit code 2."""


def load_config(path=None) -> dict:
    """Parse and validate a config file; missing keys take their defaults."""
    cfg = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    if path is None:
        return cfg
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise UsageError(f"{path}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise UsageError(f"{path}: unknown key '{key}' in [{sec}]")
            typ = SCHEMA[sec][key][0]
            try:
                cfg[sec][key] = cp.getboolean(sec, key) if typ is bool else typ(raw)
            except ValueError:
                raise UsageError(f"{path}: [{sec}] {key} = {raw!r} is not a valid {typ.__name__}") from None
    return cfg


def parse_seeds(text: str) -> list[int]:
    """``"0-4"`` or ``"0,3,7"`` (or a mix) to a list of distinct non-negative ints."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)(?:-(\d+))?", part)
        if m is None:
            raise UsageError(f"invalid seed list {text!r}")
        a = int(m.group(1))
        b = int(m.group(2)) if m.group(2) else a
        seeds.extend(range(a, b + 1))
    if not seeds:
        raise UsageError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"seeds must be distinct: {text!r}")
    return seeds


def make_benchmark(name: str):
    """``fig3``, ``fig3-grid``, ``hpo`` or the path of a tabular CSV."""
    if name == "fig3":
        return make_fig3_pair()
    if name == "fig3-grid":
        return make_fig3_pair().grid_table()
    if name == "hpo":
        return make_hpo_table()
    if not os.path.isfile(name):
        raise UsageError(f"benchmark file not found: {name}")
    return load_tabular(name)


def mlp_config(cfg: dict, epochs=None) -> MLPConfig:
    p = cfg["pretrain"]
    keys = ("n_layers", "hidden_units", "latent_dim", "dropout_rate", "learning_rate",
            "batch_size", "epochs", "seed", "val_fraction", "patience")
    kw = {k: p[k] for k in keys}
    if epochs is not None:
        kw["epochs"] = epochs
    return MLPConfig(**kw)


def run_options(cfg: dict) -> RunOptions:
    g, r = cfg["gp"], cfg["run"]
    if g["kernel"] not in gplib.KERNEL_KINDS:
        raise UsageError(f"unknown kernel {g['kernel']!r}")
    return RunOptions(kernel=g["kernel"], init_lengthscale=g["lengthscale"],
                      init_signal_variance=g["signal_variance"], init_noise=g["noise"],
                      fit_hyperparams=g["fit"], gp_steps=g["steps"], gp_lr=g["lr"],
                      standardize=g["standardize"], no_repeat=r["no_repeat"], n_init=r["n_init"],
                      ucb_scale=g["ucb_scale"])


def _out_dir(args, cfg) -> str:
    out = args.out or cfg["output"]["dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _table(rows, header) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda r: "  ".join(str(x).ljust(w) for x, w in zip(r, widths)).rstrip()
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows])


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    bench = make_benchmark(cfg["benchmark"]["name"])
    mcfg = mlp_config(cfg, args.epochs)
    p = cfg["pretrain"]
    data = bench.offline_dataset(p["n_points"], seed=p["data_seed"])
    out = _out_dir(args, cfg)
    model = pretrain(data, mcfg, restarts=p["restarts"])
    path = args.model or os.path.join(out, "model.jmb")
    tmp = f"{path}.tmp"
    save_model(model, tmp)
    os.replace(tmp, path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_mse", "val_mse"])
    for rec in model.history:
        w.writerow([rec["epoch"], repr(rec["train_mse"]), repr(rec.get("val_mse", math.nan))])
    atomic_write(os.path.join(out, "pretrain_loss.csv"), buf.getvalue())
    for task, mse in per_task_mse(model, data).items():
        print(f"{task}: mse {mse:.6g}")
    print(f"model written to {path}")
    return EXIT_OK


def _strategies(cfg, args) -> list[Strategy]:
    l_alpha = args.l_alpha if args.l_alpha is not None else cfg["run"]["l_alpha"]
    texts = args.strategy or [s for s in cfg["run"]["strategies"].split(",")]
    out = []
    for text in texts:
        for part in text.split(","):
            if part.strip():
                try:
                    out.append(Strategy.parse(part.strip(), default_l_alpha=l_alpha))
                except InvalidArgument as exc:
                    raise UsageError(str(exc)) from None
    if not out:
        raise UsageError("no strategies given")
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    bench = make_benchmark(cfg["benchmark"]["name"])
    strategies = _strategies(cfg, args)
    seeds = parse_seeds(args.seeds if args.seeds is not None else cfg["run"]["seeds"])
    T = args.budget if args.budget is not None else cfg["run"]["budget"]
    if T < 1:
        raise UsageError("budget must be >= 1")
    options = run_options(cfg)
    model_path = args.model or cfg["run"]["model"] or None
    model = None
    if any(s.needs_model for s in strategies):
        if model_path is None:
            names = ", ".join(s.label for s in strategies if s.needs_model)
            raise UsageError(f"strategy {names} requires a pretrained model: pass --model")
        if not os.path.isfile(model_path):
            raise UsageError(f"model file not found: {model_path}")
        model = load_model(model_path)
    out = os.path.join(_out_dir(args, cfg), "traces")
    os.makedirs(out, exist_ok=True)
    jobs = [(s, seed) for s in strategies for seed in seeds]

    def one(job):
        s, seed = job
        return run(s, bench, model, T, seed, options)

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            traces = list(pool.map(one, jobs))
    else:
        traces = [one(j) for j in jobs]
    failed = 0
    for tr in traces:
        tr.save(out)
        if tr.status.startswith("failed"):
            failed += 1
            print(f"{tr.strategy} seed {tr.seed}: {tr.status}", file=sys.stderr)
    rows = []
    for s in strategies:
        final = [tr.simple_regret[-1] for tr in traces
                 if tr.strategy == s.label and len(tr.records) and not tr.status.startswith("failed")]
        rows.append([s.label, len(final), f"{np.median(final):.6g}" if final else "nan"])
    print(_table(rows, ["strategy", "runs", "median final simple regret"]))
    print(f"{len(traces)} traces written to {out}")
    return EXIT_FAILURE if failed else EXIT_OK


def _threads() -> int:
    raw = os.environ.get("JUMBO_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"JUMBO_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def cmd_report(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.trace_dir, "*.csv")))
    paths = [p for p in paths if os.path.basename(p).startswith("trace_")]
    if not paths:
        raise UsageError(f"no trace files in {args.trace_dir}")
    groups: dict = {}
    for p in paths:
        meta_path = p[:-4] + ".json"
        label = os.path.basename(p)[len("trace_"):-4].rsplit("_seed", 1)[0]
        failed = False
        if os.path.isfile(meta_path):
            with open(meta_path, encoding="utf-8") as fh:
                meta = json.load(fh)
            label = meta.get("strategy", label)
            failed = str(meta.get("status", "ok")).startswith("failed")
        cols = read_trace_csv(p)
        if failed or cols["simple_regret"].size == 0:
            continue
        groups.setdefault(label, []).append(cols["simple_regret"])
    if not groups:
        raise UsageError(f"no usable traces in {args.trace_dir}")
    T = max(len(r) for rs in groups.values() for r in rs)
    summary = {}
    for label, rs in groups.items():
        M = np.array([np.concatenate([r, np.full(T - len(r), r[-1])]) for r in rs])
        med = np.median(M, axis=0)
        se = M.std(axis=0, ddof=1) / math.sqrt(len(M)) if len(M) > 1 else np.zeros(T)
        summary[label] = (med, se)
    out = args.out or args.trace_dir
    os.makedirs(out, exist_ok=True)
    atomic_write(os.path.join(out, "aggregate.csv"), summary_csv(summary, T))
    rows = [[lab, len(groups[lab]), repr(float(m[-1])), repr(float(s[-1]))]
            for lab, (m, s) in summary.items()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "seeds", "final_median", "final_stderr"])
    w.writerows(rows)
    atomic_write(os.path.join(out, "summary.csv"), buf.getvalue())
    print(_table([[r[0], r[1], f"{float(r[2]):.6g}", f"{float(r[3]):.3g}"] for r in rows],
                 ["strategy", "seeds", f"median simple regret at T={T}", "stderr"]))
    return EXIT_OK


def binomial_tolerance(delta: float, trials: int) -> float:
    """``delta`` plus a one-sided 95% normal-approximation binomial margin."""
    return delta + 1.645 * math.sqrt(delta * (1 - delta) / trials)


def cmd_theory(args) -> int:
    cfg = load_config(args.config)
    th = cfg["theory"]
    val = lambda name: getattr(args, name) if getattr(args, name) is not None else th[name]
    spec = gplib.KernelSpec(val("kernel"), val("lengthscale"), 1.0)
    rng = np.random.default_rng(val("seed"))
    report = {"command": args.sub}
    if args.sub == "lemma1":
        domain = rng.random((val("domain_size"), val("dim")))
        model = None
        if args.mode == "full":
            if not args.model:
                raise UsageError("full mode requires --model")
            model = load_model(args.model)
            domain = rng.random((val("domain_size"), model.input_dim))
        trials, delta = val("trials"), val("delta")
        rate = lemma1_coverage(spec, spec if model is not None else None, model, domain, delta,
                               val("rounds"), trials, val("seed"), val("noise"),
                               args.beta_multiplier, args.mode)
        if rate is None:
            print("violation rate: no data (0 trials)")
            report.update(rate=None, verdict="NO-DATA")
        else:
            tol = args.tolerance if args.tolerance is not None else binomial_tolerance(delta, trials)
            verdict = "PASS" if rate <= tol else "FAIL"
            print(f"violation rate {rate:.4f} over {trials} trials (tolerance {tol:.4f}): {verdict}")
            report.update(rate=rate, tolerance=tol, verdict=verdict)
    else:
        n, m = val("n"), val("candidates")
        C = rng.random((m, val("dim")))
        idx, gains = mig_greedy_path(spec, C, n, val("noise"))
        value = float(gains.sum())
        print(f"greedy information gain after {n} points: {value:.6g} nats")
        report.update(value=value, indices=idx)
        if m <= 8 and n <= 3:
            best = max(information_gain(spec, C[list(s)], val("noise"))
                       for s in itertools.combinations(range(m), n))
            verdict = "PASS" if value >= (1 - 1 / math.e) * best - 1e-12 else "FAIL"
            print(f"exhaustive optimum {best:.6g}; greedy >= (1-1/e) optimum: {verdict}")
            report.update(exhaustive=best, verdict=verdict)
    out = _out_dir(args, cfg)
    atomic_write(os.path.join(out, f"theory_{args.sub}.json"),
                 json.dumps(report, sort_keys=True, indent=1) + "\n")
    return EXIT_OK if report.get("verdict") != "FAIL" else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumbo", description="Warm/cold GP Bayesian optimisation.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--config", help="INI config file (defaults are used for missing keys)")
        p.add_argument("--out", help="output directory (overrides [output] dir)")

    p = sub.add_parser("pretrain", help="pretrain the feature network on offline auxiliary data")
    common(p)
    p.add_argument("--model", help="model file to write (default OUT/model.jmb)")
    p.add_argument("--epochs", type=int, help="override [pretrain] epochs; 0 keeps the initial weights")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="run optimisation loops, one trace per strategy and seed")
    common(p)
    p.add_argument("--model", help="pretrained model file (needed by model-based strategies)")
    p.add_argument("--seeds", help="seed list such as 0-4 or 0,2,5")
    p.add_argument("--budget", type=int, help="number of rounds T")
    p.add_argument("--strategy", action="append",
                   help="strategy, e.g. jumbo, jumbo:0.05, gp-ucb, offline-dkl, jumbo-blr, "
                        "jumbo-const:0.5; repeatable or comma-separated")
    p.add_argument("--l-alpha", type=float, dest="l_alpha", help="default threshold for jumbo strategies")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate trace CSVs into median/stderr regret curves")
    p.add_argument("trace_dir", help="directory holding trace_*.csv files")
    p.add_argument("--out", help="where to write aggregate.csv and summary.csv (default TRACE_DIR)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("theory", help="empirical checks of the regret analysis")
    tsub = p.add_subparsers(dest="sub", metavar="check")
    for name, helptext in (("lemma1", "confidence-bound coverage on prior samples"),
                           ("mig", "greedy maximum-information-gain estimate")):
        q = tsub.add_parser(name, help=helptext)
        common(q)
        q.add_argument("--kernel", choices=gplib.KERNEL_KINDS, help="kernel family")
        q.add_argument("--lengthscale", type=float, help="kernel lengthscale")
        q.add_argument("--noise", type=float, help="observation noise std")
        q.add_argument("--dim", type=int, help="input dimension of the random domain")
        q.add_argument("--seed", type=int, help="random seed")
        if name == "lemma1":
            q.add_argument("--delta", type=float, help="confidence parameter in (0, 1)")
            q.add_argument("--trials", type=int, help="number of prior samples")
            q.add_argument("--rounds", type=int, help="rounds per trial")
            q.add_argument("--domain-size", type=int, dest="domain_size", help="points in the domain")
            q.add_argument("--mode", choices=("cold", "full"), default="cold",
                           help="cold GP-UCB only, or full JUMBO (needs --model)")
            q.add_argument("--model", help="pretrained model for full mode")
            q.add_argument("--beta-multiplier", type=float, default=1.0, dest="beta_multiplier",
                           help="scale applied to the confidence width")
            q.add_argument("--tolerance", type=float,
                           help="pass threshold (default delta plus binomial 95%% slack)")
        else:
            q.add_argument("--n", type=int, help="number of observations")
            q.add_argument("--candidates", type=int, help="number of random candidate points")
        q.set_defaults(func=cmd_theory)
    p.set_defaults(func=None, theory_parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        (getattr(args, "theory_parser", None) or parser).print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ParseError) else EXIT_FAILURE
    except (NumericalFailure, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
