"""Experiment orchestration: model x environment x threshold x seeds.

One run directory per experiment, holding per-seed training curves,
evaluation metrics, checkpoints, and a summary over seeds. Every artifact is
plain CSV/JSON and fully determined by the seed.
"""

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .envs import ENV_NAMES, make_env, no_comm_baseline_wrap
from .policy import Team
from .training import (ThresholdState, TrainConfig, evaluate, load_checkpoint,
                       save_checkpoint, train_phase1, train_phase2_gating)

# model name -> (coordinator variant, gated?, communicating?)
MODELS = {
    "acml": ("fully-connected", False, True),
    "acml-mean": ("mean", False, True),
    "acml-attention": ("attention", False, True),
    "gated-acml": ("fully-connected", True, True),
    "gated-acml-mean": ("mean", True, True),
    "gated-acml-attention": ("attention", True, True),
    "no-comm": ("fully-connected", False, False),
}

PHASE2_FIELDS = ("episode", "pruned_fraction", "gating_loss", "threshold",
                 "label_pos_fraction")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "acml"
    env: str = "traffic4"
    seeds: tuple = (0, 1, 2)
    outdir: str = "runs/experiment"
    eval_episodes: int = 20
    env_kw: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(
                f"unknown model {self.model!r}; valid models: "
                f"{', '.join(sorted(MODELS))}")
        if self.env not in ENV_NAMES:
            raise ConfigError(
                f"unknown environment {self.env!r}; valid: "
                f"{', '.join(ENV_NAMES)}")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be >= 1")

    def resolved_outdir(self):
        root = os.environ.get("COMMGATE_OUTPUT_ROOT")
        return os.path.join(root, self.outdir) if root else self.outdir


def build_team(env, train_cfg, variant, seed):
    rng = np.random.default_rng(seed)
    return Team(env.agent_specs, rng, variant=variant, d_m=train_cfg.d_m,
                d_M=train_cfg.d_M, hidden=train_cfg.hidden)


def _write_phase2_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PHASE2_FIELDS)
        for row in rows:
            w.writerow([row["episode"]] +
                       [repr(float(row[f])) for f in PHASE2_FIELDS[1:]])


def run_seed(cfg: ExperimentConfig, seed, outdir, progress=None, resume=True):
    variant, gated, communicating = MODELS[cfg.model]
    tcfg = replace(cfg.train, seed=seed)
    env = make_env(cfg.env, seed=seed, **cfg.env_kw)
    if not communicating:
        env = no_comm_baseline_wrap(env)
    gate_value = 1.0 if communicating else 0.0
    team = build_team(env, tcfg, variant, seed)

    ckpt1 = os.path.join(outdir, f"checkpoint_phase1_seed{seed}.npz")
    curve1 = os.path.join(outdir, f"train_phase1_seed{seed}.csv")
    if resume and os.path.exists(ckpt1) and os.path.exists(curve1):
        load_checkpoint(ckpt1, team)
    else:
        log1 = train_phase1(env, team, tcfg, gate_value=gate_value,
                            progress=progress)
        metrics.write_metrics_csv(curve1, log1)
        save_checkpoint(ckpt1, team, meta={"phase": 1, "model": cfg.model,
                                           "env": cfg.env, "seed": seed})

    threshold = None
    if gated:
        threshold = ThresholdState(
            tcfg.threshold_mode, t_m=tcfg.t_m, beta=tcfg.beta,
            window_size=tcfg.threshold_window,
            initial=tcfg.constant_threshold)
        log2 = train_phase2_gating(env, team, tcfg, threshold=threshold,
                                   progress=progress)
        _write_phase2_csv(
            os.path.join(outdir, f"train_phase2_seed{seed}.csv"), log2)

    final_ckpt = os.path.join(outdir, f"checkpoint_seed{seed}.npz")
    save_checkpoint(final_ckpt, team, threshold=threshold,
                    meta={"phase": 2 if gated else 1, "model": cfg.model,
                          "env": cfg.env, "seed": seed})

    eval_rows = evaluate(env, team, cfg.eval_episodes,
                         use_gates=gated, gate_value=gate_value)
    eval_csv = os.path.join(outdir, f"metrics_seed{seed}.csv")
    metrics.write_metrics_csv(eval_csv, eval_rows)
    metrics.check_message_accounting(eval_rows, team.n_agents)
    return metrics.summarize(eval_rows, last=0)


def run_experiment(cfg: ExperimentConfig, progress=None, resume=True):
    """Runs every seed; writes metrics, checkpoints, manifest, and summary."""
    outdir = cfg.resolved_outdir()
    os.makedirs(outdir, exist_ok=True)
    summaries = []
    for seed in cfg.seeds:
        summaries.append(run_seed(cfg, seed, outdir, progress=progress,
                                  resume=resume))
    manifest = {
        "model": cfg.model,
        "env": cfg.env,
        "seeds": list(cfg.seeds),
        "eval_episodes": cfg.eval_episodes,
        "env_kw": cfg.env_kw,
        "train": cfg.train.to_dict(),
    }
    with open(os.path.join(outdir, "run.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    agg = metrics.aggregate_summaries(summaries)
    with open(os.path.join(outdir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "std"])
        for k, (m, s) in agg.items():
            w.writerow([k, repr(m), repr(s)])
    return summaries


def load_run(outdir):
    """Manifest + per-seed evaluation summaries for reporting."""
    with open(os.path.join(outdir, "run.json")) as fh:
        manifest = json.load(fh)
    summaries = []
    for seed in manifest["seeds"]:
        rows = metrics.read_metrics_csv(
            os.path.join(outdir, f"metrics_seed{seed}.csv"))
        summaries.append(metrics.summarize(rows, last=0))
    return {"env": manifest["env"], "model": manifest["model"],
            "manifest": manifest, "summaries": summaries}
