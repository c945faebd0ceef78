"""Command-line front end.

Subcommands:
  run              train a model on an environment over one or more seeds
  report           tabulate finished runs side by side
  heatmap          message-location histogram from a trained checkpoint
  check-grads      finite-difference audit of every analytic gradient path
  validate-config  parse a config file and report problems without running
"""

import argparse
import configparser
import dataclasses
import json
import os
import sys

import numpy as np

from . import metrics
from .envs import make_env
from .experiment import (MODELS, ConfigError, ExperimentConfig, build_team,
                         load_run, run_experiment)
from .nn import finite_diff_check
from .training import (TrainConfig, delta_q, evaluate, forward_pipeline,
                       gating_update, load_checkpoint)
from .training.trainer import (actor_update, channel_update, critic_forward,
                               critic_update, zero_all_grads)

EXIT_USAGE = 2


def _convert(name, raw, ftype):
    if ftype is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if ftype is tuple:
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    try:
        return ftype(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {ftype.__name__}, got {raw!r}")


def _section_to_kwargs(section, dataclass_type, prefix):
    fields = {f.name: f.type for f in dataclasses.fields(dataclass_type)}
    # dataclass field types may be actual types (this module avoids
    # `from __future__ import annotations`)
    kwargs = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown option {prefix}.{key}")
        kwargs[key] = _convert(f"{prefix}.{key}", raw, fields[key])
    return kwargs


def load_config_file(path):
    """INI-style experiment config: [experiment] and [train] sections."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    unknown = set(parser.sections()) - {"experiment", "train"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}; "
                          "expected [experiment] and [train]")
    exp_kw = {}
    if parser.has_section("experiment"):
        exp_kw = _section_to_kwargs(parser["experiment"], ExperimentConfig,
                                    "experiment")
        exp_kw.pop("train", None)
        exp_kw.pop("env_kw", None)
    train_kw = {}
    if parser.has_section("train"):
        train_kw = _section_to_kwargs(parser["train"], TrainConfig, "train")
    exp_kw["train"] = TrainConfig(**train_kw)
    return ExperimentConfig(**exp_kw)


def _experiment_from_args(args):
    if args.config:
        cfg = load_config_file(args.config)
    else:
        cfg = ExperimentConfig(train=TrainConfig())
    updates = {}
    if args.model is not None:
        updates["model"] = args.model
    if args.env is not None:
        updates["env"] = args.env
    if args.seeds is not None:
        updates["seeds"] = tuple(args.seeds)
    if args.outdir is not None:
        updates["outdir"] = args.outdir
    if args.eval_episodes is not None:
        updates["eval_episodes"] = args.eval_episodes
    train_updates = {}
    if args.episodes is not None:
        train_updates["episodes"] = args.episodes
    if args.phase2_episodes is not None:
        train_updates["phase2_episodes"] = args.phase2_episodes
    if args.threshold_mode is not None:
        train_updates["threshold_mode"] = args.threshold_mode
    if args.t_m is not None:
        train_updates["t_m"] = args.t_m
    if args.beta is not None:
        train_updates["beta"] = args.beta
    if train_updates:
        updates["train"] = dataclasses.replace(cfg.train, **train_updates)
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg


def cmd_run(args):
    cfg = _experiment_from_args(args)

    def progress(row):
        if not args.quiet:
            bits = " ".join(f"{k}={v:.3f}" if isinstance(v, float) else
                            f"{k}={v}" for k, v in row.items())
            print(bits, flush=True)

    summaries = run_experiment(cfg, progress=progress if not args.quiet else None,
                               resume=not args.no_resume)
    agg = metrics.aggregate_summaries(summaries)
    print(f"model={cfg.model} env={cfg.env} seeds={list(cfg.seeds)}")
    for k, (m, s) in agg.items():
        print(f"  {k}: {m:.4f} +/- {s:.4f}")
    print(f"artifacts in {cfg.resolved_outdir()}")
    return 0


def cmd_report(args):
    variants = {}
    for outdir in args.runs:
        run = load_run(outdir)
        name = run["model"]
        if name in variants:
            name = f"{name}:{os.path.basename(os.path.normpath(outdir))}"
        variants[name] = run
    text, rows = metrics.compare_report(variants, baseline=args.baseline)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)
        print(f"wrote {args.out}")
    return 0


def cmd_heatmap(args):
    env = make_env(args.env, seed=args.seed)
    tcfg = TrainConfig(seed=args.seed)
    variant = MODELS[args.model][0] if args.model in MODELS else None
    if variant is None:
        print(f"error: unknown model {args.model!r}; valid models: "
              f"{', '.join(sorted(MODELS))}", file=sys.stderr)
        return EXIT_USAGE
    team = build_team(env, tcfg, variant, args.seed)
    load_checkpoint(args.checkpoint, team)
    team.phase1_done = True
    _, events = evaluate(env, team, args.episodes, use_gates=not args.all_open,
                         record_messages=True)
    grid, empty = metrics.message_heatmap(events)
    if empty:
        print("no messages were sent; heatmap is empty")
    metrics.write_heatmap_csv(args.out, grid)
    inside, outside, ratio = metrics.heatmap_locality(grid, radius=args.radius)
    print(f"wrote {args.out}")
    print(f"mass within radius {args.radius} of center: {inside:.4f}; "
          f"outside: {outside:.4f}; ratio: {ratio:.3f}")
    return 0


def _gradcheck_suite(seed=0):
    """Small end-to-end losses exercising every trainable module."""
    from .policy import AgentSpec, Team

    rng = np.random.default_rng(seed)
    specs = [AgentSpec(4, 2), AgentSpec(4, 2), AgentSpec(4, 2)]
    results = {}
    for variant in ("fully-connected", "mean", "attention"):
        team = Team(specs, np.random.default_rng(seed), variant=variant,
                    d_m=3, d_M=3, hidden=(5,))
        obs = [rng.normal(size=(2, 4)) for _ in range(3)]

        def loss_fn():
            zero_all_grads(team)
            pipe = forward_pipeline(team, obs)
            q, tape = critic_forward(team.shared, pipe.obs, pipe.actions)
            loss = float(np.mean(q ** 2))
            dX = team.shared.critic.backward(tape, 2.0 * q / q.shape[0])
            off = sum(o.shape[1] for o in pipe.obs)
            dMs = np.empty_like(pipe.Ms)
            for i, (nets, tp) in enumerate(zip(team.agents, pipe.act_tapes)):
                da = dX[:, off:off + pipe.actions[i].shape[1]]
                off += pipe.actions[i].shape[1]
                dx = nets.actor.backward(tp, da)
                dMs[:, i, :] = dx[:, pipe.obs[i].shape[1]:]
            dgated = team.shared.coordinator.backward(pipe.coord_tape, dMs)
            for i, (nets, tp) in enumerate(zip(team.agents, pipe.msg_tapes)):
                nets.msggen.backward(tp, dgated[:, i, :])
            return loss

        stores = [team.shared.critic.store]
        for nets in team.agents:
            stores += [nets.actor.store, nets.msggen.store]
        stores += list(team.shared.coordinator.stores)
        report = finite_diff_check(stores, loss_fn)
        results[f"pipeline/{variant}"] = report.max_rel_error

    # gating head binary cross-entropy
    team = Team(specs, np.random.default_rng(seed), d_m=3, d_M=3, hidden=(5,))
    ob = rng.normal(size=(6, 4))
    labels = rng.integers(0, 2, size=6).astype(float)
    nets = team.agents[0]

    def gating_loss():
        nets.gating.store.zero_grad()
        p_raw, tape = nets.gating.forward(ob)
        p = np.clip(p_raw[:, 0], 1e-7, 1 - 1e-7)
        loss = float(-np.mean(labels * np.log(p)
                              + (1 - labels) * np.log(1 - p)))
        dp = (-(labels / p) + (1 - labels) / (1 - p)) / len(labels)
        nets.gating.backward(tape, dp[:, None])
        return loss

    report = finite_diff_check([nets.gating.store], gating_loss)
    results["gating/bce"] = report.max_rel_error
    return results


def cmd_check_grads(args):
    results = _gradcheck_suite(seed=args.seed)
    worst = 0.0
    for name, err in sorted(results.items()):
        status = "ok" if err < args.tol else "FAIL"
        print(f"{name:30s} max rel error {err:.3e}  {status}")
        worst = max(worst, err)
    if worst >= args.tol:
        print(f"gradient check failed (worst {worst:.3e} >= {args.tol:g})")
        return 1
    print(f"all gradients within {args.tol:g}")
    return 0


def cmd_validate_config(args):
    try:
        cfg = load_config_file(args.config)
    except (ConfigError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 1
    print(f"config ok: model={cfg.model} env={cfg.env} "
          f"seeds={list(cfg.seeds)} episodes={cfg.train.episodes} "
          f"threshold_mode={cfg.train.threshold_mode}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="commgate",
        description="Gated multi-agent communication: training and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and evaluate a model")
    p_run.add_argument("--config", help="INI config file")
    p_run.add_argument("--model", choices=sorted(MODELS))
    p_run.add_argument("--env")
    p_run.add_argument("--seeds", type=int, nargs="+")
    p_run.add_argument("--outdir")
    p_run.add_argument("--episodes", type=int)
    p_run.add_argument("--phase2-episodes", type=int, dest="phase2_episodes")
    p_run.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p_run.add_argument("--threshold-mode", dest="threshold_mode",
                       choices=("fixed", "dynamic", "constant"))
    p_run.add_argument("--t-m", type=float, dest="t_m")
    p_run.add_argument("--beta", type=float)
    p_run.add_argument("--quiet", action="store_true")
    p_run.add_argument("--no-resume", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="compare finished runs")
    p_rep.add_argument("runs", nargs="+", help="run directories")
    p_rep.add_argument("--baseline", help="variant name used as reference")
    p_rep.add_argument("--out", help="also write rows as JSON")
    p_rep.set_defaults(func=cmd_report)

    p_hm = sub.add_parser("heatmap", help="where trained agents send messages")
    p_hm.add_argument("--checkpoint", required=True)
    p_hm.add_argument("--env", required=True)
    p_hm.add_argument("--model", default="gated-acml")
    p_hm.add_argument("--episodes", type=int, default=10)
    p_hm.add_argument("--seed", type=int, default=0)
    p_hm.add_argument("--radius", type=int, default=3)
    p_hm.add_argument("--all-open", action="store_true",
                      help="force every gate open instead of using the heads")
    p_hm.add_argument("--out", default="heatmap.csv")
    p_hm.set_defaults(func=cmd_heatmap)

    p_gc = sub.add_parser("check-grads",
                          help="finite-difference gradient audit")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--tol", type=float, default=1e-4)
    p_gc.set_defaults(func=cmd_check_grads)

    p_vc = sub.add_parser("validate-config", help="check a config file")
    p_vc.add_argument("config")
    p_vc.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
