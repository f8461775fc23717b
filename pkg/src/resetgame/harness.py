"""Experiment driver: seeded RNG streams, flat key-value configs, the frozen
evaluation protocol, per-seed run orchestration with metrics CSVs and
checkpoints, bootstrap confidence intervals, and SVG plot emission."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .envs import GOAL_THRESHOLD, make_env
from .game import GameConfig, ResetGameTrainer
from .hrl import (HrlConfig, SkillLibrary, random_reference, run_macro_episode,
                  solver_reference, train_hierarchy)
from .sac import SacAgent

STREAM_NAMES = ("init", "env", "actor", "replay", "skill", "eval")


def _stream_key(seed, name):
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


def make_streams(seed, names=STREAM_NAMES):
    """One counter-based generator per named stream, keyed by (seed, name),
    so adding a stream never perturbs the others."""
    return {name: np.random.Generator(np.random.Philox(
        key=_stream_key(seed, name))) for name in names}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    name: str = "run"
    kind: str = "game"            # game | hrl
    env_name: str = "pointmass"
    seeds: tuple = (0,)
    eval_cadence: int = 25
    eval_rollouts_per_skill: int = 5
    protocol_id: str = "frozen15"
    game: GameConfig = field(default_factory=GameConfig)
    hrl: HrlConfig = field(default_factory=HrlConfig)
    skills_checkpoint: str = ""   # hrl runs: directory holding the library

    def validate(self):
        if not self.seeds:
            raise ValueError("seeds: need at least one seed")
        if self.eval_cadence < 1:
            raise ValueError("eval.cadence must be >= 1")
        if self.kind not in ("game", "hrl"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        make_env(self.env_name)  # raises on unknown env
        if self.kind == "hrl" and not self.skills_checkpoint:
            raise ValueError("hrl runs need hrl.skills_checkpoint")
        if self.protocol_id not in PROTOCOLS:
            raise ValueError(f"unknown eval protocol {self.protocol_id!r}")
        self.game.validate()
        return self


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_value(key, raw, kind):
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return kind(raw)
    except (ValueError, KeyError):
        raise ValueError(f"{key}: cannot parse {raw!r} as {kind.__name__}")


# key path -> (target section, attribute, type)
CONFIG_KEYS = {
    "experiment.name": ("run", "name", str),
    "experiment.kind": ("run", "kind", str),
    "env": ("run", "env_name", str),
    "seeds": ("run", "seeds", tuple),
    "eval.cadence": ("run", "eval_cadence", int),
    "eval.rollouts_per_skill": ("run", "eval_rollouts_per_skill", int),
    "eval.protocol": ("run", "protocol_id", str),
    "game.variant": ("game", "variant", str),
    "game.lambda": ("game", "lam", float),
    "game.t_reset": ("game", "t_reset", int),
    "game.t_forward": ("game", "t_forward", int),
    "game.gamma": ("game", "gamma", float),
    "game.k": ("game", "k", int),
    "game.lr_forward": ("game", "lr_forward", float),
    "game.lr_reset": ("game", "lr_reset", float),
    "game.r_skill_scale": ("game", "r_skill_scale", float),
    "game.updates_per_phase": ("game", "updates_per_phase", int),
    "game.iterations": ("game", "iterations", int),
    "game.rnd": ("game", "rnd_enabled", bool),
    "game.alpha": ("game", "alpha", float),
    "game.autotune_alpha": ("game", "autotune_alpha", bool),
    "game.hidden": ("game", "hidden", tuple),
    "game.batch_size": ("game", "batch_size", int),
    "game.buffer_capacity": ("game", "buffer_capacity", int),
    "game.disc_steps": ("game", "disc_steps", int),
    "game.disc_batch_size": ("game", "disc_batch_size", int),
    "game.disc_lr": ("game", "disc_lr", float),
    "game.final_state_only": ("game", "disc_final_state_only", bool),
    "game.xy_only": ("game", "disc_xy_only", bool),
    "game.omit_entropy": ("game", "omit_entropy", bool),
    "game.rnd_embed_dim": ("game", "rnd_embed_dim", int),
    "game.rnd_scale": ("game", "rnd_scale", float),
    "game.dispersion_window": ("game", "dispersion_window", int),
    "hrl.skills_checkpoint": ("run", "skills_checkpoint", str),
    "hrl.epochs": ("hrl", "epochs", int),
    "hrl.max_macro_steps": ("hrl", "max_macro_steps", int),
    "hrl.macro_horizon": ("hrl", "macro_horizon", int),
    "hrl.hidden": ("hrl", "hidden", tuple),
    "hrl.lr": ("hrl", "lr", float),
    "hrl.gamma": ("hrl", "gamma_hi", float),
    "hrl.batch_size": ("hrl", "batch_size", int),
    "hrl.buffer_capacity": ("hrl", "buffer_capacity", int),
    "hrl.exploration_fraction": ("hrl", "exploration_fraction", float),
    "hrl.eps_final": ("hrl", "eps_final", float),
    "hrl.updates_per_epoch": ("hrl", "updates_per_epoch", int),
    "hrl.update_freq": ("hrl", "update_freq", int),
    "hrl.reward_scale": ("hrl", "reward_scale", float),
    "hrl.eval_every": ("hrl", "eval_every", int),
}


def parse_config_text(text):
    run = RunConfig()
    game = GameConfig()
    hrl = HrlConfig()
    sections = {"run": run, "game": game, "hrl": hrl}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        section, attr, kind = CONFIG_KEYS[key]
        setattr(sections[section], attr, _parse_value(key, raw, kind))
    run.game = game
    run.hrl = hrl
    return run.validate()


def load_config(path):
    with open(path) as f:
        return parse_config_text(f.read())


def apply_overrides(cfg: RunConfig, overrides):
    """overrides: dict of config key path -> raw string value."""
    for key, raw in overrides.items():
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        section, attr, kind = CONFIG_KEYS[key]
        target = {"run": cfg, "game": cfg.game, "hrl": cfg.hrl}[section]
        setattr(target, attr, _parse_value(key, raw, kind))
    return cfg.validate()


# ---------------------------------------------------------------------------
# evaluation protocol
# ---------------------------------------------------------------------------

def eval_start_states():
    """The frozen 15 start states: 12 evenly spaced angles on radius 4 plus
    radii 3, 4, 5 at angle 0."""
    starts = [(4.0 * np.cos(a), 4.0 * np.sin(a))
              for a in np.arange(12) * (2.0 * np.pi / 12.0)]
    starts += [(3.0, 0.0), (4.0, 0.0), (5.0, 0.0)]
    return [np.array(s) for s in starts]


@dataclass
class EvalProtocol:
    starts: list = field(default_factory=eval_start_states)
    threshold: float = GOAL_THRESHOLD
    horizon: int = 200
    deterministic: bool = True

    def __post_init__(self):
        if len(self.starts) != 15:
            raise ValueError("the evaluation protocol uses exactly 15 starts")


PROTOCOLS = ("frozen15",)


def make_protocol(protocol_id, horizon=200):
    if protocol_id not in PROTOCOLS:
        raise ValueError(f"unknown eval protocol {protocol_id!r}")
    return EvalProtocol(horizon=horizon)


def evaluate(forward_agent, env, protocol: EvalProtocol):
    """Roll the forward policy from each frozen start on a cloned
    environment; success is a final distance under the threshold."""
    distances = []
    for start in protocol.starts:
        e = env.clone()
        e.set_state(start)
        e.begin_segment()
        obs = e.observe()
        for _ in range(protocol.horizon):
            action, _ = forward_agent.sample_action(
                obs, None, None, deterministic=protocol.deterministic)
            obs = e.step(action).obs
        distances.append(float(np.linalg.norm(e.pos)))
    distances = np.asarray(distances)
    success = float(np.mean(distances < protocol.threshold))
    return success, float(np.mean(distances))


def bootstrap_ci(values, rng, n_boot=2000, level=0.95):
    """Percentile bootstrap CI for the mean."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 1:
        return float(values[0]), float(values[0])
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [50 * (1 - level), 100 - 50 * (1 - level)])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# run orchestration
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("iteration", "variant", "skill", "reset_return",
                  "reset_step_reward_sum", "forward_return", "disc_loss",
                  "dispersion", "eval_success", "eval_mean_dist",
                  "disc_accuracy")


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return f"{v:.17g}"


def _held_out_reset_finals(trainer, n_per_skill, rng):
    """Fresh stochastic reset rollouts on a cloned env; final states labeled
    by skill. Never touches training state or training streams."""
    obs_list, labels, trajs = [], [], []
    for z in range(trainer.cfg.k):
        for _ in range(n_per_skill):
            e = trainer.env.clone()
            obs = e.observe()
            path = []
            for step in range(trainer.cfg.t_reset):
                action, _ = trainer.reset_agent.sample_action(obs, z, rng)
                res = e.step(action)
                path.append((step, "reset", z, e.pos[0], e.pos[1],
                             res.reward, res.terminated))
                obs = res.obs
                if res.terminated:
                    break
            obs_list.append(obs)
            labels.append(z)
            trajs.append(path)
    return np.asarray(obs_list), np.asarray(labels), trajs


def _encode_state(obj):
    """Make a bit-generator state dict JSON-safe (uint64 arrays -> lists)."""
    if isinstance(obj, dict):
        return {k: _encode_state(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__u64__": [int(v) for v in obj]}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _decode_state(obj):
    if isinstance(obj, dict):
        if "__u64__" in obj:
            return np.asarray(obj["__u64__"], dtype=np.uint64)
        return {k: _decode_state(v) for k, v in obj.items()}
    return obj


def _checkpoint(trainer, directory):
    os.makedirs(directory, exist_ok=True)
    trainer.forward_agent.save(directory, "forward")
    trainer.reset_agent.save(directory, "reset")
    nn.save_mlp(trainer.disc.net, os.path.join(directory, "disc.lsrn"))
    nn.save_mlp(trainer.rnd.predictor,
                os.path.join(directory, "rnd_predictor.lsrn"))
    nn.save_mlp(trainer.rnd.target, os.path.join(directory, "rnd_target.lsrn"))
    state = {
        "iteration": trainer.iteration,
        "rnd_stats": [trainer.rnd.count, trainer.rnd.mean, trainer.rnd.m2],
        "streams": {k: _encode_state(g.bit_generator.state)
                    for k, g in trainer.streams.items()},
    }
    with open(os.path.join(directory, "state.json"), "w") as f:
        json.dump(state, f)


def _restore(trainer, directory):
    trainer.forward_agent.load(directory, "forward")
    trainer.reset_agent.load(directory, "reset")
    trainer.disc.net = nn.load_mlp(os.path.join(directory, "disc.lsrn"))
    trainer.rnd.predictor = nn.load_mlp(
        os.path.join(directory, "rnd_predictor.lsrn"))
    trainer.rnd.target = nn.load_mlp(
        os.path.join(directory, "rnd_target.lsrn"))
    with open(os.path.join(directory, "state.json")) as f:
        state = json.load(f)
    trainer.iteration = state["iteration"]
    trainer.rnd.count, trainer.rnd.mean, trainer.rnd.m2 = state["rnd_stats"]
    for k, g in trainer.streams.items():
        g.bit_generator.state = _decode_state(state["streams"][k])
    return state["iteration"]


def _latest_checkpoint(seed_dir):
    if not os.path.isdir(seed_dir):
        return None
    ckpts = [d for d in os.listdir(seed_dir) if d.startswith("ckpt_")]
    if not ckpts:
        return None
    return os.path.join(seed_dir,
                        max(ckpts, key=lambda d: int(d.split("_")[1])))


def run_seed(cfg: RunConfig, seed, out_dir, resume=True):
    """One full training run; returns the path of the seed directory."""
    seed_dir = os.path.join(out_dir, f"seed_{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    streams = make_streams(seed)
    env = make_env(cfg.env_name,
                   resets_allowed=(cfg.game.variant == "oracle_reset"))
    if cfg.game.variant != "oracle_reset":
        # reset-free runs start from one draw of the initial distribution,
        # made at construction time; it is not an oracle reset
        radius = streams["env"].uniform(3.0, 5.0)
        angle = streams["env"].uniform(0.0, 2.0 * np.pi)
        env.set_state(radius * np.array([np.cos(angle), np.sin(angle)]))
    trainer = ResetGameTrainer(env, cfg.game, streams)
    protocol = make_protocol(cfg.protocol_id, horizon=cfg.game.t_forward)

    start_iter = 0
    metrics_path = os.path.join(seed_dir, "metrics.csv")
    mode = "w"
    if resume:
        latest = _latest_checkpoint(seed_dir)
        if latest is not None and os.path.exists(metrics_path):
            start_iter = _restore(trainer, latest)
            mode = "a"
    rows_buffer = []
    confusion_path = os.path.join(seed_dir, "confusion.csv")
    with open(metrics_path, mode, newline="") as f:
        writer = csv.writer(f)
        if mode == "w":
            writer.writerow(METRIC_COLUMNS)
        for it in range(start_iter, cfg.game.iterations):
            row = trainer.game_iteration()
            row["eval_success"] = ""
            row["eval_mean_dist"] = ""
            row["disc_accuracy"] = ""
            if (it + 1) % cfg.eval_cadence == 0 or \
                    it == cfg.game.iterations - 1:
                success, mean_dist = evaluate(trainer.forward_agent,
                                              trainer.env, protocol)
                row["eval_success"] = success
                row["eval_mean_dist"] = mean_dist
                if cfg.game.uses_discriminator and cfg.game.uses_reset_agent:
                    obs_h, lab_h, trajs = _held_out_reset_finals(
                        trainer, cfg.eval_rollouts_per_skill,
                        streams["eval"])
                    row["disc_accuracy"] = trainer.disc.accuracy(obs_h, lab_h)
                    _append_confusion(confusion_path, trainer.iteration,
                                      trainer.disc.confusion(obs_h, lab_h))
                    _dump_trajectories(
                        os.path.join(seed_dir,
                                     f"trajectories_iter{it + 1}.csv"),
                        trajs)
                _checkpoint(trainer,
                            os.path.join(seed_dir, f"ckpt_{it + 1}"))
            writer.writerow([_fmt(row.get(c, "")) for c in METRIC_COLUMNS])
            rows_buffer.append(row)
    assert trainer.env.oracle_reset_count == 0 or \
        cfg.game.variant == "oracle_reset", "reset-free contract violated"
    with open(os.path.join(seed_dir, "oracle_resets.json"), "w") as f:
        json.dump({"oracle_reset_count": trainer.env.oracle_reset_count}, f)
    return seed_dir


def _append_confusion(path, iteration, mat):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new:
            writer.writerow(["iteration", "true_skill", "predicted_skill",
                             "count"])
        for t in range(mat.shape[0]):
            for p in range(mat.shape[1]):
                writer.writerow([iteration, t, p, mat[t, p]])


def _dump_trajectories(path, trajs):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "phase", "skill", "x", "y", "reward",
                         "terminated"])
        for path_rows in trajs:
            for step, phase, z, x, y, r, term in path_rows:
                writer.writerow([step, phase, z, _fmt(x), _fmt(y), _fmt(r),
                                 int(term)])


def run_experiment(cfg: RunConfig, out_dir, seeds=None, resume=True):
    """Drive every seed, then write a cross-seed summary with 95% bootstrap
    confidence intervals. A failing seed is recorded; the rest continue."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_used.json"), "w") as f:
        json.dump({"name": cfg.name, "kind": cfg.kind, "env": cfg.env_name,
                   "game": vars(cfg.game), "hrl": vars(cfg.hrl),
                   "seeds": list(seeds or cfg.seeds)}, f, indent=1,
                  default=str)
    results = {}
    for seed in (seeds or cfg.seeds):
        try:
            if cfg.kind == "game":
                run_seed(cfg, seed, out_dir, resume=resume)
                results[seed] = {"status": "ok",
                                 "final_success": _final_eval_success(
                                     os.path.join(out_dir, f"seed_{seed}"))}
            else:
                run_hrl_seed(cfg, seed, out_dir)
                results[seed] = {"status": "ok",
                                 "final_normalized_return":
                                     _final_hrl_return(
                                         os.path.join(out_dir,
                                                      f"seed_{seed}"))}
        except Exception as exc:  # noqa: BLE001 - record and continue
            results[seed] = {"status": "failed", "error": str(exc)}
    key = ("final_success" if cfg.kind == "game"
           else "final_normalized_return")
    finals = [r[key] for r in results.values() if r["status"] == "ok"
              and r[key] is not None]
    summary = {"experiment": cfg.name, "seeds": results}
    if finals:
        rng = np.random.default_rng(_stream_key(0, "bootstrap"))
        lo, hi = bootstrap_ci(finals, rng)
        summary["mean"] = float(np.mean(finals))
        summary["ci95"] = [lo, hi]
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return out_dir


def _final_eval_success(seed_dir):
    rows = read_metrics(os.path.join(seed_dir, "metrics.csv"))
    vals = [float(r["eval_success"]) for r in rows if r["eval_success"]]
    return vals[-1] if vals else None


def _final_hrl_return(seed_dir):
    rows = read_metrics(os.path.join(seed_dir, "curve.csv"))
    vals = [float(r["greedy_normalized_return"]) for r in rows
            if r["greedy_normalized_return"] not in ("", "nan")]
    return vals[-1] if vals else None


def read_metrics(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# hierarchical runs
# ---------------------------------------------------------------------------

def load_skill_library(checkpoint_dir):
    with open(os.path.join(checkpoint_dir, "reset_header.json")) as f:
        header = json.load(f)
    agent = SacAgent(header["obs_dim"], header["action_dim"],
                     skill_dim=header["skill_dim"])
    agent.load(checkpoint_dir, "reset")
    return SkillLibrary(agent)


def run_hrl_seed(cfg: RunConfig, seed, out_dir):
    seed_dir = os.path.join(out_dir, f"seed_{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    streams = make_streams(seed, names=("init", "actor", "replay", "eval"))
    library = load_skill_library(cfg.skills_checkpoint)
    env = make_env(cfg.env_name, resets_allowed=True)
    r_solver = solver_reference(env.clone(), cfg.hrl)
    r_random = random_reference(env.clone(), library, cfg.hrl,
                                streams["eval"])
    agent, curve = train_hierarchy(env, library, cfg.hrl, streams["actor"],
                                   r_random, r_solver)
    # second normalization anchored to the best epoch rather than the solver
    r_best = max(row["return"] for row in curve)
    best_span = r_best - r_random
    for row in curve:
        row["best_normalized_return"] = ((row["return"] - r_random) /
                                         best_span if best_span != 0
                                         else float("nan"))
    with open(os.path.join(seed_dir, "curve.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        cols = ("epoch", "return", "normalized_return", "epsilon", "q_loss",
                "greedy_normalized_return", "best_normalized_return")
        writer.writerow(cols)
        for row in curve:
            writer.writerow([_fmt(row[c]) for c in cols])
    with open(os.path.join(seed_dir, "references.json"), "w") as f:
        json.dump({"r_solver": r_solver, "r_random": r_random}, f)
    # best-policy path dump for rendering
    path_env = env.clone()
    _, transitions = run_macro_episode(
        path_env, library, cfg.hrl,
        lambda obs, step: agent.act(obs, 0.0, None))
    with open(os.path.join(seed_dir, "best_path.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "phase", "skill", "x", "y", "reward",
                         "terminated"])
        for i, t in enumerate(transitions):
            writer.writerow([i, "macro", t.skill, _fmt(t.next_obs[0]),
                             _fmt(t.next_obs[1]), _fmt(t.reward), 0])
    return seed_dir
