"""collect -> mine -> cluster -> report, communicating only through files.

Layout under ``config.out``::

    collect/agent_<k>.jsonl          interaction sequences of agent k
    collect/agent_<k>_episodes.csv   per-episode log (circuit agents)
    collect/agent_<k>_curve.csv      success rate per window (circuit agents)
    collect/collect.json             seeds, sizes, episode counts
    mine/gadgets.jsonl               pooled gadgets with agent provenance
    mine/mine.json                   accepted thresholds and tuning attempts
    cluster/*.csv, cluster.json      gadget reports and distance matrices
    report/report.md, clusters.csv, curves.svg, traces.csv
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .agents import collect as col
from .agents.ddqn import DdqnAgent, save_checkpoint
from .clustering import NOISE, hdbscan
from .config import RunConfig
from .envs import circuit, optics
from .metrics import (
    extract_initialization_set,
    first_occurrence,
    initset_distance_matrix,
    utility_distance_matrix,
    write_matrix_csv,
)
from .mining import auto_tune
from .seqcore import Dataset, InteractionSequence, dataset_from_episodes, read_jsonl, write_jsonl

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage cannot run (missing inputs, failed collection or tuning)."""


def _dir(cfg: RunConfig, stage: str) -> Path:
    d = Path(cfg.out) / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path: Path):
    if not path.exists():
        raise StageError(f"missing input {path}; run the previous stage first")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------- env helpers


def action_mnemonics(env: str, actions: Sequence[Sequence[int]]) -> list[str]:
    if env == "qo":
        return optics.mnemonics(actions)
    return circuit.mnemonics(actions)


def category_fn(env: str) -> Callable:
    return optics.utility_category if env == "qo" else circuit.utility_category


def category_names(env: str) -> tuple[str, ...]:
    return optics.KINDS if env == "qo" else ("G1", "G2", "M1", "M2")


def composition(env: str, gadget: Sequence[Sequence[int]]) -> str:
    """Tally of utility categories, e.g. ``2xBS+1xDP+1xRefl``."""
    names = category_names(env)
    cats = Counter(category_fn(env)(a) for a in gadget)
    return "+".join(f"{cats[i]}x{names[i]}" for i in range(len(names)) if cats[i])


def gadget_reward_qo(pattern) -> float:
    return float(optics.evaluate(pattern)[1])


def srv_label(pattern) -> str:
    srv, _ = optics.evaluate(pattern)
    return "none" if srv is None else "(" + ",".join(str(r) for r in srv) + ")"


def is_teleport_like(gadget: Sequence[Sequence[int]]) -> bool:
    """A two-qubit gate followed later by a two-qubit measurement sharing a qubit."""
    regs = [(a[0], a[1], set(circuit.REGISTERS[a[2]])) for a in gadget]
    for i, (f1, f2, q) in enumerate(regs):
        if f1 == 0 and f2 == 1:
            for g1, g2, r in regs[i + 1 :]:
                if g1 == 1 and g2 == 1 and q & r:
                    return True
    return False


# ---------------------------------------------------------------- collect


def _budget(cfg: RunConfig) -> int:
    c = cfg.collect
    return c.max_episodes if c.max_episodes is not None else 200 * c.dataset_size + c.train_episodes


def _collect_qo(cfg: RunConfig, k: int, seed: int, out: Path) -> dict:
    episodes = col.mcts_episodes(seed, cfg.mcts, agent_id=k)
    counter = {"n": 0}

    def counted() -> InteractionSequence:
        counter["n"] += 1
        return next(episodes)

    ds = col.collect_dataset(
        counted, cfg.collect.dataset_size, optics.HORIZON,
        g_min=cfg.collect.g_min, gamma=cfg.collect.gamma, max_episodes=_budget(cfg),
    )
    write_jsonl(out / f"agent_{k}.jsonl", ds.interactions, cfg.collect.gamma)
    return {"agent_id": k, "seed": seed, "episodes": counter["n"], "sequences": len(ds)}


def _collect_qi(cfg: RunConfig, k: int, seed: int, out: Path) -> dict:
    c = cfg.collect
    agent = DdqnAgent(circuit.OBS_SIZE, circuit.N_ACTIONS, cfg.ddqn, seed)
    env = circuit.CircuitEnv()
    env_seeds = col._env_seeds(seed)
    logs: list[col.EpisodeLog] = []

    def play() -> InteractionSequence:
        eps = agent.epsilon() if c.collect_epsilon is None or len(logs) < c.train_episodes else c.collect_epsilon
        ep = col.circuit_episode(agent, env, next(env_seeds), agent.rng, eps=eps, agent_id=k)
        logs.append(col.EpisodeLog(len(logs), col.success(ep), ep.episode_return(1.0), eps))
        return ep

    for _ in range(c.train_episodes):
        play()
    ds = col.collect_dataset(
        play, c.dataset_size, circuit.HORIZON, g_min=c.g_min, gamma=c.gamma, max_episodes=_budget(cfg) - c.train_episodes
    )
    write_jsonl(out / f"agent_{k}.jsonl", ds.interactions, c.gamma)
    col.write_episode_log(out / f"agent_{k}_episodes.csv", logs)
    curve = col.write_learning_curve(out / f"agent_{k}_curve.csv", [r.success for r in logs], c.curve_window)
    save_checkpoint(out / f"agent_{k}_policy", agent.policy, {"agent_id": k, "seed": seed, "steps": agent.steps})
    return {
        "agent_id": k,
        "seed": seed,
        "episodes": len(logs),
        "sequences": len(ds),
        "final_window_success": curve[-1][2] if curve else None,
    }


def run_collect(cfg: RunConfig) -> list[Path]:
    out = _dir(cfg, "collect")
    meta = {"env": cfg.env, "agents": []}
    for k, seed in enumerate(cfg.agent_seeds()):
        log.info("collecting agent %d (seed %d)", k, seed)
        try:
            info = _collect_qo(cfg, k, seed, out) if cfg.env == "qo" else _collect_qi(cfg, k, seed, out)
        except col.CollectionTimeout as exc:
            raise StageError(f"agent {k}: {exc}") from exc
        meta["agents"].append(info)
    _dump_json(out / "collect.json", meta)
    return [out / f"agent_{k}.jsonl" for k in range(cfg.collect.agents)]


def load_datasets(cfg: RunConfig) -> dict[int, list[InteractionSequence]]:
    d = Path(cfg.out) / "collect"
    meta = _load_json(d / "collect.json")
    out = {}
    for info in meta["agents"]:
        k = info["agent_id"]
        out[k] = read_jsonl(d / f"agent_{k}.jsonl")
    return out


def _mining_dataset(cfg: RunConfig, episodes: list[InteractionSequence]) -> Dataset:
    ds = dataset_from_episodes(episodes)
    if cfg.mine.keep_features is not None:
        ds = ds.project(cfg.mine.keep_features)
    return ds


# ---------------------------------------------------------------- mine


def run_mine(cfg: RunConfig) -> Path:
    datasets = load_datasets(cfg)
    out = _dir(cfg, "mine")
    mcfg = cfg.mine.mining_config(cfg.collect.g_min)
    evaluate = gadget_reward_qo if cfg.env == "qo" else None
    rows, meta = [], {"env": cfg.env, "config": cfg.to_dict()["mine"], "agents": []}
    for k in sorted(datasets):
        ds = _mining_dataset(cfg, datasets[k])
        try:
            res = auto_tune(ds, mcfg, evaluate)
        except Exception as exc:
            raise StageError(f"agent {k}: {exc}") from exc
        meta["agents"].append(
            {"agent_id": k, "sequences": len(ds), "thresholds": res.thresholds.to_dict(), "attempts": res.attempts}
        )
        for p in sorted(res.patterns, key=lambda p: (-p.interestingness, p.pattern)):
            rows.append(
                {
                    "agent_id": k,
                    "pattern": [list(a) for a in p.pattern],
                    "mnemonic": ", ".join(action_mnemonics(cfg.env, p.pattern)),
                    "F": p.support,
                    "C": p.cohesion,
                    "I": p.interestingness,
                }
            )
    with open(out / "gadgets.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    _dump_json(out / "mine.json", meta)
    return out / "gadgets.jsonl"


def load_gadgets(cfg: RunConfig) -> list[dict]:
    path = Path(cfg.out) / "mine" / "gadgets.jsonl"
    if not path.exists():
        raise StageError(f"missing input {path}; run the mine stage first")
    rows = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    for r in rows:
        r["pattern"] = tuple(tuple(a) for a in r["pattern"])
    return rows


# ---------------------------------------------------------------- cluster

REPORT_FIELDS = ["gadget", "cluster", "probability", "F", "C", "I", "agent_id", "label", "initset_length", "initset_reward"]


@dataclass
class ReportRow:
    gadget: str
    cluster: int
    probability: float
    F: float
    C: float
    I: float
    agent_id: int
    label: str = ""
    initset_length: float | None = None
    initset_reward: float | None = None
    index: int = 0

    def as_csv(self) -> list[str]:
        def num(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"

        return [self.gadget, str(self.cluster), num(self.probability), num(self.F), num(self.C), num(self.I),
                str(self.agent_id), self.label, num(self.initset_length), num(self.initset_reward)]


def sort_report(rows: list[ReportRow]) -> list[ReportRow]:
    """By cluster (noise last), then descending interestingness."""
    return sorted(rows, key=lambda r: (r.cluster == NOISE, r.cluster, -r.I, r.index))


def write_report_csv(path: Path, rows: list[ReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in sort_report(rows):
            w.writerow(r.as_csv())


def read_report_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _base_rows(gadgets: list[dict]) -> list[ReportRow]:
    return [ReportRow(g["mnemonic"], NOISE, 0.0, g["F"], g["C"], g["I"], g["agent_id"], index=i) for i, g in enumerate(gadgets)]


def _hdbscan_rows(cfg: RunConfig, rows: list[ReportRow], matrix: np.ndarray) -> None:
    c = cfg.cluster
    res = hdbscan(matrix, c.min_samples, c.min_cluster_size, c.allow_single_cluster)
    for r, lab, p in zip(rows, res.labels, res.probabilities):
        r.cluster, r.probability = int(lab), float(p)


def initialization_sets(cfg: RunConfig, gadgets: list[dict], datasets: dict[int, list[InteractionSequence]]):
    keep = cfg.mine.keep_features

    def obs_reward(ep: InteractionSequence, t: int) -> float:
        return float(circuit.info_alive(ep.steps[t].observation))

    return [
        extract_initialization_set(
            g["pattern"], datasets[g["agent_id"]], cfg.cluster.initset_cap, keep=keep, obs_reward=obs_reward, seed=cfg.seed + i
        )
        for i, g in enumerate(gadgets)
    ]


def run_cluster(cfg: RunConfig) -> dict[str, Path]:
    gadgets = load_gadgets(cfg)
    out = _dir(cfg, "cluster")
    c = cfg.cluster
    meta = {"env": cfg.env, "min_samples": c.min_samples, "min_cluster_size": c.min_cluster_size, "gadgets": len(gadgets)}
    paths = {}
    labels = [f"{g['agent_id']}:{g['mnemonic']}" for g in gadgets]

    rows = _base_rows(gadgets)
    if cfg.env == "qo":
        for r, g in zip(rows, gadgets):
            r.label = srv_label(g["pattern"])
    if gadgets:
        dm = utility_distance_matrix([g["pattern"] for g in gadgets], category_fn(cfg.env), c.utility_weights)
        write_matrix_csv(out / "utility_distance.csv", dm, labels)
        _hdbscan_rows(cfg, rows, dm)
    write_report_csv(out / "utility.csv", rows)
    paths["utility"] = out / "utility.csv"
    meta["utility_clusters"] = len({r.cluster for r in rows} - {NOISE})

    if c.srv:
        srv_rows = _base_rows(gadgets)
        groups = sorted({srv_label(g["pattern"]) for g in gadgets}, key=lambda s: (s == "none", s))
        for r, g in zip(srv_rows, gadgets):
            r.label = srv_label(g["pattern"])
            r.cluster = groups.index(r.label)
            r.probability = 1.0
        write_report_csv(out / "srv.csv", srv_rows)
        paths["srv"] = out / "srv.csv"
        meta["srv_groups"] = groups

    if c.context:
        datasets = load_datasets(cfg)
        sets = initialization_sets(cfg, gadgets, datasets)
        ctx_rows = _base_rows(gadgets)
        flagged = [i for i, s in enumerate(sets) if s.empty]
        if flagged:
            log.warning("%d gadgets have empty initialization sets and are left unclustered", len(flagged))
        meta["empty_initsets"] = [labels[i] for i in flagged]
        live = [i for i, s in enumerate(sets) if not s.empty]
        for i in live:
            ctx_rows[i].initset_length = sets[i].mean_length()
            ctx_rows[i].initset_reward = sets[i].mean_reward()
        if live:
            sizes = circuit.ALPHABET_SIZES[: len(c.context_weights)]
            if cfg.mine.keep_features is not None:
                sizes = tuple(circuit.ALPHABET_SIZES[f] for f in sorted(cfg.mine.keep_features))
            dm = initset_distance_matrix([sets[i].observations for i in live], sizes, c.context_weights)
            write_matrix_csv(out / "context_distance.csv", dm, [labels[i] for i in live])
            live_rows = [ctx_rows[i] for i in live]
            _hdbscan_rows(cfg, live_rows, dm)
        write_report_csv(out / "context.csv", ctx_rows)
        paths["context"] = out / "context.csv"
        meta["context_clusters"] = len({ctx_rows[i].cluster for i in live} - {NOISE})

    _dump_json(out / "cluster.json", meta)
    return paths


# ---------------------------------------------------------------- report


def cluster_summary(env: str, rows: list[dict], gadgets_by_name: dict[str, tuple]) -> list[dict]:
    """Per cluster: size, most frequent composition, best gadget, mean initset reward."""
    out = []
    by_cluster: dict[int, list[dict]] = {}
    for r in rows:
        by_cluster.setdefault(int(r["cluster"]), []).append(r)
    for cl in sorted(by_cluster, key=lambda x: (x == NOISE, x)):
        members = by_cluster[cl]
        comps = Counter(composition(env, gadgets_by_name[m["gadget"]]) for m in members)
        top, count = sorted(comps.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        rewards = [float(m["initset_reward"]) for m in members if m.get("initset_reward")]
        lengths = [float(m["initset_length"]) for m in members if m.get("initset_length")]
        out.append(
            {
                "cluster": cl,
                "size": len(members),
                "composition": top,
                "composition_share": count / len(members),
                "example": members[0]["gadget"],
                "initset_reward": float(np.mean(rewards)) if rewards else None,
                "initset_length": float(np.mean(lengths)) if lengths else None,
                "teleport_like": sum(is_teleport_like(gadgets_by_name[m["gadget"]]) for m in members) if env == "qi" else None,
            }
        )
    return out


def corrective_clusters(summary: list[dict]) -> list[int]:
    """Context clusters holding a teleport-like gadget whose contexts are, on average, dead circuits."""
    return [
        s["cluster"]
        for s in summary
        if s["cluster"] != NOISE and s["teleport_like"] and s["initset_reward"] is not None and s["initset_reward"] < 0
    ]


def svg_curves(curves: dict[str, list[tuple[float, float, float]]], width: int = 640, height: int = 320) -> str:
    """Mean success per window with a one-standard-deviation band, one colour per agent."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    pad = 40
    xs = [x for pts in curves.values() for x, _, _ in pts]
    xmax = max(xs) if xs else 1.0
    xmax = xmax if xmax > 0 else 1.0

    def sx(x):
        return pad + (width - 2 * pad) * x / xmax

    def sy(y):
        return height - pad - (height - 2 * pad) * min(max(y, 0.0), 1.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" text-anchor="middle">episode</text>',
        f'<text x="12" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 12 {height / 2:.0f})" text-anchor="middle">success rate</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{pad - 4}" y="{sy(tick) + 4:.1f}" font-size="10" text-anchor="end">{tick:g}</text>')
    for i, (name, pts) in enumerate(sorted(curves.items())):
        col = colors[i % len(colors)]
        if not pts:
            continue
        upper = " ".join(f"{sx(x):.1f},{sy(m + s):.1f}" for x, m, s in pts)
        lower = " ".join(f"{sx(x):.1f},{sy(m - s):.1f}" for x, m, s in reversed(pts))
        parts.append(f'<polygon points="{upper} {lower}" fill="{col}" fill-opacity="0.15" stroke="none"/>')
        line = " ".join(f"{sx(x):.1f},{sy(m):.1f}" for x, m, _ in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad + 2}" y="{pad + 14 * i}" font-size="10" fill="{col}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def reward_trace(ep: InteractionSequence) -> list[float]:
    """Circuit reward before any agent op, then after each placement (unscaled)."""
    trace = [float(circuit.info_alive(ep.steps[0].observation))]
    trace += [float(np.sign(s.reward)) for s in ep.steps]
    return trace


def teleport_traces(cfg: RunConfig, gadgets: list[dict], datasets, limit: int = 5) -> list[dict]:
    """Episodes where a teleport-like gadget turned a dead circuit alive."""
    keep = cfg.mine.keep_features
    out = []
    for g in gadgets:
        if not is_teleport_like(g["pattern"]):
            continue
        for ep in datasets[g["agent_id"]]:
            acts = ep.actions if keep is None else tuple(tuple(a[i] for i in sorted(keep)) for a in ep.actions)
            t = first_occurrence(g["pattern"], acts)
            if t is None:
                continue
            trace = reward_trace(ep)
            if trace[t] < 0 and trace[-1] > 0:
                out.append({"gadget": g["mnemonic"], "agent_id": g["agent_id"], "circuit": " ".join(ep.extra.get("circuit", [])),
                            "placed_at": t, "trace": trace})
                break
        if len(out) >= limit:
            break
    return out


def run_report(cfg: RunConfig) -> Path:
    out = _dir(cfg, "report")
    cdir = Path(cfg.out) / "cluster"
    meta = _load_json(cdir / "cluster.json")
    gadgets = load_gadgets(cfg)
    by_name = {g["mnemonic"]: g["pattern"] for g in gadgets}
    lines = [f"# Gadget report ({cfg.env})", ""]
    lines.append(f"Gadgets: {len(gadgets)}. Clustering: min_samples={meta['min_samples']}, min_cluster_size={meta['min_cluster_size']}.")
    lines.append("")
    summaries = []
    for kind in ("utility", "srv", "context"):
        path = cdir / f"{kind}.csv"
        if not path.exists():
            continue
        rows = read_report_csv(path)
        lines += [f"## {kind.capitalize()} clustering", ""]
        if not rows:
            lines += ["No gadgets were mined, so this section is empty.", ""]
            continue
        summary = cluster_summary(cfg.env, rows, by_name)
        for s in summary:
            summaries.append({"clustering": kind, **s})
        lines.append("| cluster | size | most frequent composition | share | example | initset reward | initset length |")
        lines.append("|---|---|---|---|---|---|---|")
        for s in summary:
            name = "noise" if s["cluster"] == NOISE else str(s["cluster"])
            rew = "" if s["initset_reward"] is None else f"{s['initset_reward']:.3f}"
            ln = "" if s["initset_length"] is None else f"{s['initset_length']:.2f}"
            lines.append(f"| {name} | {s['size']} | {s['composition']} | {s['composition_share']:.2f} | {s['example']} | {rew} | {ln} |")
        lines.append("")
        lines.append("| gadget | cluster | probability | F | C | I | agent | label |")
        lines.append("|---|---|---|---|---|---|---|---|")
        for r in rows:
            lines.append(f"| {r['gadget']} | {r['cluster']} | {r['probability']} | {r['F']} | {r['C']} | {r['I']} | {r['agent_id']} | {r['label']} |")
        lines.append("")
        if kind == "context":
            fixes = corrective_clusters(summary)
            lines.append(f"Corrective clusters (teleport-like members, negative initset reward): {fixes if fixes else 'none'}")
            lines.append("")

    with open(out / "clusters.csv", "w", newline="", encoding="utf-8") as fh:
        fields = ["clustering", "cluster", "size", "composition", "composition_share", "example", "initset_reward", "initset_length", "teleport_like"]
        w = csv.DictWriter(fh, fields)
        w.writeheader()
        for s in summaries:
            w.writerow({k: ("" if s[k] is None else (f"{s[k]:.6g}" if isinstance(s[k], float) else s[k])) for k in fields})

    coll = Path(cfg.out) / "collect"
    curves = {}
    for path in sorted(coll.glob("agent_*_curve.csv")):
        with open(path, newline="", encoding="utf-8") as fh:
            pts = [(float(r["first_episode"]), float(r["mean"]), float(r["std"])) for r in csv.DictReader(fh)]
        curves[path.stem.replace("_curve", "")] = pts
    if curves:
        (out / "curves.svg").write_text(svg_curves(curves), encoding="utf-8")
        lines += ["## Learning curves", "", "Success rate per window: `curves.svg`.", ""]

    if cfg.env == "qi" and gadgets:
        traces = teleport_traces(cfg, gadgets, load_datasets(cfg))
        with open(out / "traces.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["gadget", "agent_id", "placed_at", "trace", "circuit"])
            for t in traces:
                w.writerow([t["gadget"], t["agent_id"], t["placed_at"], " ".join(f"{x:+g}" for x in t["trace"]), t["circuit"]])
        lines += ["## Reward before and after teleport-like gadgets", ""]
        if traces:
            for t in traces:
                lines.append(f"- {t['gadget']} (agent {t['agent_id']}): {' '.join(f'{x:+g}' for x in t['trace'])} on `{t['circuit']}`")
        else:
            lines.append("No episode shows a teleport-like gadget reviving a dead circuit.")
        lines.append("")

    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    return out / "report.md"


def run_all(cfg: RunConfig) -> Path:
    run_collect(cfg)
    run_mine(cfg)
    run_cluster(cfg)
    return run_report(cfg)
