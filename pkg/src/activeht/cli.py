"""``activeht`` command-line interface.

Every command that writes a file also writes ``<file>.manifest.json`` with the
resolved configuration, the seed, the artifact paths and the sha256 of the
model source, which is enough to rerun it and get byte-identical CSV output.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, kernels
from .dqn import TrainConfig, TrainingDivergenceError, load_network, save_network, train
from .game import DEFAULT_MAX_ITERS, DEFAULT_TOL, ConvergenceError, optimal_rate
from .model import Belief, ModelError
from .modelfile import PRESETS, ModelFileError, dump_model, load_model_and_prior, model_digest, preset
from .policies import DEFAULT_RHO_BAR, POLICY_KINDS, PolicyConfig, make_policy
from .report import rate_curves_svg, write_csv, write_manifest
from .sim import query_frequency, rate_curve, simulate

DEFAULT_SEED = 0
EVAL_EPISODES = 10_000
QUICK_EVAL_EPISODES = 1_000
QUICK_TRAIN_EPISODES = 300
DEFAULT_HORIZON = 200


class UsageError(Exception):
    pass


def _hypotheses(args, model) -> List[int]:
    if args.all or args.hypothesis is None:
        return list(range(model.num_hypotheses))
    if not 0 <= args.hypothesis < model.num_hypotheses:
        raise UsageError(f"hypothesis index {args.hypothesis} out of range [0, {model.num_hypotheses})")
    return [args.hypothesis]


def _manifest(args, config: dict, artifacts: list) -> dict:
    return {
        "command": args.command,
        "argv": list(args.argv),
        "config": config,
        "seed": config.get("seed"),
        "artifacts": [str(a) for a in artifacts],
        "model": {"source": str(args.model), "sha256": model_digest(args.model)},
        "version": __version__,
        "backend": kernels.backend(),
    }


def _file_sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- solve-game -------------------------------------------------------------------


def cmd_solve_game(args) -> int:
    model, _ = load_model_and_prior(args.model)
    rows = []
    for i in _hypotheses(args, model):
        sol = optimal_rate(model, i, tol=args.tol, max_iters=args.max_iters)
        mix = ", ".join(f"{model.query_labels[u]}={a:.6f}" for u, a in enumerate(sol.alpha))
        print(f"{model.hypothesis_labels[i]}: R* = {sol.value:.6f} nats  alpha = ({mix})")
        rows += [(i, u, float(a), float(sol.value)) for u, a in enumerate(sol.alpha)]
    if args.out:
        write_csv(args.out, ("hypothesis", "query", "alpha", "value"), rows)
        config = {"hypotheses": _hypotheses(args, model), "tol": args.tol, "max_iters": args.max_iters, "seed": None}
        write_manifest(args.out, _manifest(args, config, [args.out]))
    return 0


# --- train --------------------------------------------------------------------------


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig(seed=args.seed)
    overrides = {
        "gamma": args.gamma, "zeta": args.zeta, "epsilon": args.epsilon, "learning_rate": args.lr,
        "episodes": args.episodes, "horizon": args.horizon, "minibatch_size": args.minibatch,
        "epochs": args.epochs, "capacity": args.capacity,
        "hidden": tuple(args.hidden) if args.hidden else None,
    }
    if args.quick and args.episodes is None:
        overrides["episodes"] = QUICK_TRAIN_EPISODES
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    model, prior = load_model_and_prior(args.model)
    prior = prior if prior is not None else Belief.uniform(model.num_hypotheses)
    cfg = _train_config(args)
    log = []
    try:
        net = train(model, prior, cfg, log=log)
    except TrainingDivergenceError as exc:
        print(f"error: {exc} (episode {exc.episode})", file=sys.stderr)
        if log:
            last = log[-1]
            print(f"last completed episode {last.episode}: cumulative reward {last.cumulative_reward:.6g}, "
                  f"mean loss {last.mean_loss:.6g}", file=sys.stderr)
        return 3
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(net, out)
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.csv")
    write_csv(log_path, ("episode", "cumulative_reward", "mean_loss"),
              [(e.episode, e.cumulative_reward, e.mean_loss) for e in log])
    config = cfg.to_dict()
    config["prior"] = [float(v) for v in prior.rho]
    manifest = _manifest(args, config, [out, log_path])
    manifest["network_sha256"] = _file_sha(out)
    write_manifest(out, manifest)
    if log:
        k = min(100, len(log))
        first = np.mean([e.cumulative_reward for e in log[:k]])
        final = np.mean([e.cumulative_reward for e in log[-k:]])
        print(f"trained {cfg.episodes} episodes; mean cumulative reward first {k}: {first:.4f}, last {k}: {final:.4f}")
    print(f"network written to {out}; log {log_path}")
    return 0


# --- evaluate / compare ---------------------------------------------------------------


def _policy_list(args) -> List[str]:
    names = [p.strip() for item in (args.policy or []) for p in item.split(",") if p.strip()]
    if not names:
        raise UsageError("at least one --policy is required")
    for p in names:
        if p not in POLICY_KINDS:
            raise UsageError(f"unknown policy {p!r}; choose from {', '.join(POLICY_KINDS)}")
    return names


def _evaluate(args):
    """Run every (policy, hypothesis) pair; policy k uses master seed ``seed + k``."""
    model, prior = load_model_and_prior(args.model)
    prior = prior if prior is not None else Belief.uniform(model.num_hypotheses)
    policies = _policy_list(args)
    hyps = _hypotheses(args, model)
    episodes = args.episodes or (QUICK_EVAL_EPISODES if args.quick else EVAL_EPISODES)
    horizon = args.horizon or DEFAULT_HORIZON
    network = None
    if "dqn" in policies:
        if not args.network:
            raise UsageError("policy dqn needs --network")
        network = load_network(args.network)
    bounds = {h: optimal_rate(model, h, tol=args.tol).value for h in hyps}
    curves, freqs = [], []
    window = (horizon // 2 + 1, horizon)
    for k, name in enumerate(policies):
        cfg = PolicyConfig(name, rho_bar=args.rho_bar, game_tol=args.tol,
                           network=network if name == "dqn" else None)
        policy = make_policy(cfg, model)
        for h in hyps:
            batch = simulate(policy, model, prior, h, horizon, episodes, seed=args.seed + k, workers=args.workers)
            curves.append(rate_curve(batch, bounds[h], name))
            freqs.append((name, h, query_frequency(batch, window, model.num_queries)))
    config = {
        "policies": policies, "hypotheses": hyps, "episodes": episodes, "horizon": horizon,
        "seed": args.seed, "policy_seeds": [[p, args.seed + k] for k, p in enumerate(policies)],
        "rho_bar": args.rho_bar, "game_tol": args.tol, "workers": args.workers,
        "prior": [float(v) for v in prior.rho], "network": args.network,
        "frequency_window": list(window),
    }
    return model, curves, freqs, config


def _write_eval_outputs(args, model, curves, freqs, config):
    header = ("policy", "hypothesis", "n", "mean_rate", "stderr", "bound")
    rows = [
        (c.policy, c.hypothesis, int(n), float(r), float(s), c.bound)
        for c in curves for n, r, s in zip(c.grid, c.mean_rate, c.stderr)
    ]
    artifacts = [write_csv(args.out, header, rows)]
    if args.freq_out:
        window = config["frequency_window"]
        frows = [
            (p, h, window[0], window[1], u, float(f))
            for p, h, fr in freqs for u, f in enumerate(fr)
        ]
        artifacts.append(write_csv(args.freq_out, ("policy", "hypothesis", "n_start", "n_end", "query", "frequency"), frows))
    if args.svg:
        hyps = config["hypotheses"]
        svg_path = Path(args.svg)
        svg_path.parent.mkdir(parents=True, exist_ok=True)
        if len(hyps) == 1:
            title = f"hypothesis {model.hypothesis_labels[hyps[0]]}"
            svg_path.write_text(rate_curves_svg(curves, title))
            artifacts.append(svg_path)
        else:
            for h in hyps:
                p = svg_path.with_name(f"{svg_path.stem}_{model.hypothesis_labels[h]}{svg_path.suffix}")
                p.write_text(rate_curves_svg([c for c in curves if c.hypothesis == h],
                                             f"hypothesis {model.hypothesis_labels[h]}"))
                artifacts.append(p)
    manifest = _manifest(args, config, artifacts)
    if args.network:
        manifest["network_sha256"] = _file_sha(args.network)
    write_manifest(args.out, manifest)


def cmd_evaluate(args) -> int:
    model, curves, freqs, config = _evaluate(args)
    _write_eval_outputs(args, model, curves, freqs, config)
    for c in curves:
        print(f"{c.policy:>6} {model.hypothesis_labels[c.hypothesis]}: rate[{c.grid[-1]}] = "
              f"{c.mean_rate[-1]:.6f} +- {c.stderr[-1]:.6f} (bound {c.bound:.6f})")
    return 0


def cmd_compare(args) -> int:
    model, curves, freqs, config = _evaluate(args)
    _write_eval_outputs(args, model, curves, freqs, config)
    n = int(curves[0].grid[-1])
    print(f"{'policy':>8} {'hyp':>6} {'rate@' + str(n):>12} {'stderr':>10} {'bound':>10} {'ratio':>8}")
    for c in curves:
        ratio = c.mean_rate[-1] / c.bound if c.bound > 0 else float("nan")
        print(f"{c.policy:>8} {model.hypothesis_labels[c.hypothesis]:>6} {c.mean_rate[-1]:>12.6f} "
              f"{c.stderr[-1]:>10.6f} {c.bound:>10.6f} {ratio:>8.4f}")
    return 0


# --- dump-preset ------------------------------------------------------------------------


def cmd_dump_preset(args) -> int:
    text = dump_model(preset(args.name))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        args.model = args.name
        write_manifest(out, _manifest(args, {"preset": args.name, "seed": None}, [out]))
    else:
        sys.stdout.write(text)
    return 0


# --- parser ---------------------------------------------------------------------------------


def _add_model(p):
    p.add_argument("model", help=f"model file path or preset name ({', '.join(PRESETS)})")


def _add_hyp(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("-i", "--hypothesis", type=int, help="true hypothesis index (default: all)")
    g.add_argument("--all", action="store_true", help="every hypothesis")


def _add_eval(p):
    _add_model(p)
    _add_hyp(p)
    p.add_argument("--policy", action="append", metavar="{" + "|".join(POLICY_KINDS) + "}",
                   help="policy to evaluate; repeat or comma-separate for several (plotted in this order)")
    p.add_argument("--network", help="trained network file (policy dqn)")
    p.add_argument("--horizon", type=int, help=f"steps per episode N (default {DEFAULT_HORIZON})")
    p.add_argument("--episodes", type=int,
                   help=f"episodes per hypothesis (default {EVAL_EPISODES}, {QUICK_EVAL_EPISODES} with --quick)")
    p.add_argument("--quick", action="store_true", help="fewer episodes")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--rho-bar", type=float, default=DEFAULT_RHO_BAR,
                   help=f"verification threshold for ope/heu (default {DEFAULT_RHO_BAR})")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="game solver tolerance")
    p.add_argument("--workers", type=int, default=1, help="simulation threads (results do not depend on it)")
    p.add_argument("--out", required=True, help="rate-curve CSV path")
    p.add_argument("--freq-out", help="CSV of query frequencies over the second half of the horizon")
    p.add_argument("--svg", help="also write an SVG chart")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeht", description="Active sequential hypothesis testing lab.")
    parser.add_argument("--version", action="version", version=f"activeht {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-game", help="optimal confidence rate and query mixture per hypothesis")
    _add_model(p)
    _add_hyp(p)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help=f"duality-gap tolerance (default {DEFAULT_TOL})")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--out", help="CSV path (hypothesis, query, alpha, value)")
    p.set_defaults(func=cmd_solve_game)

    d = TrainConfig()
    p = sub.add_parser("train", help="train a DQN query policy")
    _add_model(p)
    p.add_argument("--out", required=True, help="network file path")
    p.add_argument("--log", help="training-log CSV (default <out>.log.csv)")
    p.add_argument("--gamma", type=float, help=f"discount (default {d.gamma})")
    p.add_argument("--zeta", type=float, help=f"target relaxation (default {d.zeta})")
    p.add_argument("--epsilon", type=float, help=f"exploration probability (default {d.epsilon})")
    p.add_argument("--lr", type=float, help=f"learning rate (default {d.learning_rate})")
    p.add_argument("--episodes", type=int, help=f"training episodes (default {d.episodes}, {QUICK_TRAIN_EPISODES} with --quick)")
    p.add_argument("--horizon", type=int, help=f"steps per episode (default {d.horizon})")
    p.add_argument("--minibatch", type=int, help=f"minibatch size (default {d.minibatch_size})")
    p.add_argument("--epochs", type=int, help=f"gradient steps per minibatch (default {d.epochs})")
    p.add_argument("--capacity", type=int, help=f"replay capacity (default {d.capacity})")
    p.add_argument("--hidden", type=int, nargs="+", help=f"hidden layer widths (default {' '.join(map(str, d.hidden))})")
    p.add_argument("--quick", action="store_true", help="fewer episodes")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"seed (default {DEFAULT_SEED})")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Monte-Carlo confidence-rate curves")
    _add_eval(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="evaluate several policies and print a summary table")
    _add_eval(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-preset", help="write a built-in model as a model file")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_dump_preset)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ModelFileError, ModelError, ConvergenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
