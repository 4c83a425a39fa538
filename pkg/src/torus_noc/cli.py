"""Command-line entry point: ``torus-noc {train,eval,trace,faults export}``.

Every option can also come from a flat JSON file passed with ``--config``;
its keys are the option names with dashes replaced by underscores. Flags win
over the file, the file wins over built-in defaults. Exit codes: 0 success,
2 usage or configuration error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .baseline import route_baseline
from .faults import FaultScenario, inject_faults
from .metrics import ExperimentConfig, fault_sweep, load_sweep, to_csv, to_json
from .nn import Checkpoint
from .ppo import PpoConfig, TrainingDiverged, train
from .routers import BaselineRouter, RlRouter, route_rl
from .seeding import SEED_ENV_VAR, resolve_seed
from .topology import NodeId, TorusTopology, bfs_distances, torus_distance

log = logging.getLogger("torus_noc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def float_list(text: str | list) -> list[float]:
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def node_arg(text: str | list) -> NodeId:
    if isinstance(text, list):
        return NodeId(int(text[0]), int(text[1]))
    r, c = str(text).split(",")
    return NodeId(int(r), int(c))


def flag(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes"):
        return True
    if str(text).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class Opt:
    key: str
    type: Callable[[Any], Any]
    default: Any
    help: str
    required: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


_PPO = PpoConfig()
_EXP = ExperimentConfig()

TRAIN_OPTS = [
    Opt("episodes", int, _PPO.total_episodes, "training episodes"),
    Opt("seed", int, None, f"master seed (fallback: ${SEED_ENV_VAR}, then 0)"),
    Opt("out", str, "runs/train", "output directory"),
    Opt("learning_rate", float, _PPO.learning_rate, "Adam learning rate"),
    Opt("clip_eps", float, _PPO.clip_eps, "PPO clip range"),
    Opt("gamma", float, _PPO.gamma, "discount"),
    Opt("gae_lambda", float, _PPO.gae_lambda, "GAE lambda"),
    Opt("episodes_per_batch", int, _PPO.episodes_per_batch, "episodes collected per update"),
    Opt("epochs_per_batch", int, _PPO.epochs_per_batch, "optimization epochs per update"),
    Opt("minibatch_size", int, _PPO.minibatch_size, "transitions per mini-batch"),
    Opt("value_coef", float, _PPO.value_coef, "value loss weight"),
    Opt("entropy_coef", float, _PPO.entropy_coef, "entropy bonus weight"),
    Opt("hidden", int, _PPO.hidden, "hidden layer width"),
    Opt("min_size", int, _PPO.min_size, "smallest torus side sampled"),
    Opt("max_size", int, _PPO.max_size, "largest torus side sampled"),
    Opt("train_densities", float_list, ",".join(map(str, _PPO.train_densities)),
        "fault densities sampled per episode (comma list)"),
]

EVAL_OPTS = [
    Opt("checkpoint", str, None, "trained checkpoint JSON (required unless --router baseline)"),
    Opt("sweep", str, "faults", "faults: PDR/FT vs density; load: throughput vs load"),
    Opt("router", str, _EXP.router, "baseline, rl or both"),
    Opt("rows", int, _EXP.rows, "torus rows"),
    Opt("cols", int, _EXP.cols, "torus columns"),
    Opt("densities", float_list, ",".join(map(str, _EXP.densities)), "fault densities (faults sweep)"),
    Opt("loads", float_list, ",".join(map(str, _EXP.loads)), "injection probabilities (load sweep)"),
    Opt("fault_density", float, _EXP.fault_density, "fault density for the load sweep"),
    Opt("trials", int, _EXP.trials, "packets per scenario (faults sweep)"),
    Opt("scenarios", int, _EXP.scenarios, "fault scenarios per point"),
    Opt("cycles", int, _EXP.cycles, "injection cycles per scenario (load sweep)"),
    Opt("seed", int, None, f"master seed (fallback: ${SEED_ENV_VAR}, then 0)"),
    Opt("out", str, "runs/eval", "output directory"),
    Opt("jobs", int, 1, "worker processes"),
    Opt("switch_dimensions", flag, False, "baseline falls over to the row dimension when stuck"),
]

TRACE_OPTS = [
    Opt("checkpoint", str, None, "trained checkpoint JSON", required=True),
    Opt("scenario", str, None, "scenario JSON from 'faults export'", required=True),
    Opt("src", node_arg, None, "source as row,col", required=True),
    Opt("dst", node_arg, None, "destination as row,col", required=True),
    Opt("out", str, "runs/trace", "output directory"),
    Opt("switch_dimensions", flag, False, "baseline falls over to the row dimension when stuck"),
]

FAULT_OPTS = [
    Opt("rows", int, 8, "torus rows"),
    Opt("cols", int, 8, "torus columns"),
    Opt("density", float, 0.5, "fault density"),
    Opt("seed", int, None, f"scenario seed (fallback: ${SEED_ENV_VAR}, then 0)"),
    Opt("out", str, "scenario.json", "output file"),
]


def _add_opts(p: argparse.ArgumentParser, opts: list[Opt]) -> None:
    p.add_argument("--config", help="JSON file with option values (keys as below, '_' for '-')")
    for o in opts:
        if o.required:
            text = f"{o.help} (required)"
        elif o.default is None:
            text = o.help
        else:
            text = f"{o.help} (default: {o.default})"
        p.add_argument(o.flag, dest=o.key, default=None, help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torus-noc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_opts(sub.add_parser("train", help="train the PPO routing policy"), TRAIN_OPTS)
    _add_opts(sub.add_parser("eval", help="run a PDR/FT or throughput sweep"), EVAL_OPTS)
    _add_opts(sub.add_parser("trace", help="route one packet with both routers"), TRACE_OPTS)
    faults = sub.add_parser("faults", help="fault scenario utilities")
    fsub = faults.add_subparsers(dest="faults_command", required=True)
    _add_opts(fsub.add_parser("export", help="write a seeded scenario as JSON"), FAULT_OPTS)
    return parser


def resolve(args: argparse.Namespace, opts: list[Opt]) -> dict:
    """defaults < config file < flags, with every value passed through its type."""
    values = {o.key: o.default for o in opts}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(values))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(data)
    for o in opts:
        v = getattr(args, o.key)
        if v is not None:
            values[o.key] = v
    out = {}
    for o in opts:
        v = values[o.key]
        if v is None:
            if o.required:
                raise ConfigError(f"{o.flag} is required")
            out[o.key] = None
            continue
        try:
            out[o.key] = o.type(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {o.flag}: {v!r} ({exc})") from exc
    return out


def _write_atomic(files: dict[Path, str]) -> None:
    """Write every file or none: stage to temporaries, then rename."""
    staged = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


# --------------------------------------------------------------------------- #


def cmd_train(cfg: dict) -> int:
    seed = resolve_seed(cfg["seed"])
    try:
        ppo = PpoConfig(
            clip_eps=cfg["clip_eps"], gamma=cfg["gamma"], gae_lambda=cfg["gae_lambda"],
            episodes_per_batch=cfg["episodes_per_batch"], epochs_per_batch=cfg["epochs_per_batch"],
            minibatch_size=cfg["minibatch_size"], learning_rate=cfg["learning_rate"],
            value_coef=cfg["value_coef"], entropy_coef=cfg["entropy_coef"],
            total_episodes=cfg["episodes"], hidden=cfg["hidden"], min_size=cfg["min_size"],
            max_size=cfg["max_size"], train_densities=tuple(cfg["train_densities"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    def progress(done: int, curve) -> None:
        if done % 500 < ppo.episodes_per_batch or done == ppo.total_episodes:
            log.info("episode %d  mean reward (last 100) %.2f", done,
                     curve.rewards()[-100:].mean())

    try:
        ckpt, curve = train(ppo, seed, progress=progress)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(cfg["out"])
    _write_atomic({out / "checkpoint.json": ckpt.dumps(),
                   out / "learning_curve.csv": curve.to_csv()})
    r = curve.rewards()
    final = f"{r[-100:].mean():.2f}" if len(r) else "n/a"
    print(f"trained {len(r)} episodes (seed {seed}); final 100-episode mean reward {final}")
    print(f"wrote {out / 'checkpoint.json'} and {out / 'learning_curve.csv'}")
    return EXIT_OK


def _load_checkpoint(path: str | None) -> tuple[Checkpoint, str]:
    if path is None:
        raise ConfigError("--checkpoint is required for the rl router")
    try:
        raw = Path(path).read_bytes()
        return Checkpoint.from_dict(json.loads(raw)), hashlib.sha256(raw).hexdigest()
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad checkpoint {path}: {exc}") from exc


def cmd_eval(cfg: dict) -> int:
    seed = resolve_seed(cfg["seed"])
    if cfg["sweep"] not in ("faults", "load"):
        raise ConfigError("--sweep must be 'faults' or 'load'")
    if cfg["jobs"] < 1:
        raise ConfigError("--jobs must be >= 1")
    try:
        exp = ExperimentConfig(
            rows=cfg["rows"], cols=cfg["cols"], densities=cfg["densities"], loads=cfg["loads"],
            fault_density=cfg["fault_density"], trials=cfg["trials"], scenarios=cfg["scenarios"],
            cycles=cfg["cycles"], seed=seed, router=cfg["router"], checkpoint=cfg["checkpoint"],
        )
        TorusTopology(exp.rows, exp.cols)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    routers = []
    digest = None
    if exp.router in ("baseline", "both"):
        routers.append(BaselineRouter(cfg["switch_dimensions"]))
    if exp.router in ("rl", "both"):
        ckpt, digest = _load_checkpoint(exp.checkpoint)
        routers.append(RlRouter(ckpt))
    # the checkpoint is identified by content so outputs do not depend on its location
    exp.checkpoint = digest
    try:
        sweep = fault_sweep if cfg["sweep"] == "faults" else load_sweep
        points = sweep(exp, routers, jobs=cfg["jobs"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg["out"])
    _write_atomic({out / "results.csv": to_csv(points, exp),
                   out / "results.json": to_json(points, exp)})
    for p in points:
        extra = f" throughput={p.throughput:.3f}" if p.throughput is not None else ""
        print(f"{p.router:8s} {p.sweep}={p.x:<5g} pdr={p.pdr:.3f} ft={p.ft_score:.3f}{extra}")
    print(f"wrote {len(points)} points to {out / 'results.csv'} and {out / 'results.json'}")
    return EXIT_OK


def render_dot(scenario: FaultScenario, paths: dict[str, list[NodeId]]) -> str:
    """Graphviz text: faulty nodes grey, wrap-around links dashed, one colour per router."""
    topo = scenario.topo
    colours = {"baseline": "red", "rl": "green"}
    name = lambda v: f"n{v[0]}_{v[1]}"  # noqa: E731
    lines = ["graph torus {", "  node [shape=square, fontsize=10];"]
    for v in topo.nodes():
        style = ', style=filled, fillcolor="grey"' if v in scenario.faulty else ""
        lines.append(f'  {name(v)} [label="{v.row},{v.col}", pos="{v.col},{-v.row}!"{style}];')
    seen = set()
    for v in topo.nodes():
        for _, u in topo.neighbors(v):
            edge = frozenset((v, u))
            if edge in seen:
                continue
            seen.add(edge)
            wrap = abs(v.row - u.row) > 1 or abs(v.col - u.col) > 1
            attr = ' [style=dashed, color="grey60"]' if wrap else ' [color="grey80"]'
            lines.append(f"  {name(v)} -- {name(u)}{attr};")
    for router, path in paths.items():
        drawn = set()
        for a, b in zip(path, path[1:]):
            if frozenset((a, b)) in drawn:
                continue
            drawn.add(frozenset((a, b)))
            lines.append(f'  {name(a)} -- {name(b)} [color="{colours.get(router, "blue")}", '
                         f'penwidth=3, label="{router}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_trace(cfg: dict) -> int:
    ckpt, _ = _load_checkpoint(cfg["checkpoint"])
    try:
        scenario = FaultScenario.load(cfg["scenario"])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad scenario {cfg['scenario']}: {exc}") from exc
    topo = scenario.topo
    src, dst = cfg["src"], cfg["dst"]
    for label, v in (("source", src), ("destination", dst)):
        if not topo.contains(v):
            raise ConfigError(f"{label} {v} outside the {topo.rows}x{topo.cols} torus")
        if v in scenario.faulty:
            raise ConfigError(f"{label} {v} is faulty")
    if src == dst:
        raise ConfigError("source and destination coincide")

    base = route_baseline(topo, scenario, src, dst, cfg["switch_dimensions"])
    rl = route_rl(ckpt, topo, scenario, src, dst)
    shortest = bfs_distances(topo, scenario, src).get(dst)
    doc = {
        "scenario": scenario.to_dict(),
        "src": list(src),
        "dst": list(dst),
        "torus_distance": torus_distance(topo, src, dst),
        "shortest_surviving_path": shortest,
        "connected": shortest is not None,
        "baseline": base.to_dict(),
        "rl": rl.to_dict(),
    }
    out = Path(cfg["out"])
    steps = "".join(json.dumps(s, sort_keys=True) + "\n" for s in rl.steps)
    _write_atomic({
        out / "trace.json": json.dumps(doc, indent=2, sort_keys=True) + "\n",
        out / "rl_episode.jsonl": steps,
        out / "trace.dot": render_dot(scenario, {"baseline": base.path, "rl": rl.path}),
    })
    print(f"{topo.rows}x{topo.cols} torus, {len(scenario.faulty)} faulty nodes, "
          f"{src} -> {dst}, torus distance {doc['torus_distance']}, "
          f"shortest surviving path {shortest if shortest is not None else 'none'}")
    for label, o in (("baseline", base), ("rl", rl)):
        print(f"  {label:8s} {o.status.value:18s} hops={o.hops:3d}  "
              + " ".join(str(v) for v in o.path))
    print(f"wrote trace.json, rl_episode.jsonl and trace.dot to {out}")
    return EXIT_OK


def cmd_faults_export(cfg: dict) -> int:
    seed = resolve_seed(cfg["seed"])
    try:
        scenario = inject_faults(TorusTopology(cfg["rows"], cfg["cols"]), cfg["density"], seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_atomic({Path(cfg["out"]): json.dumps(scenario.to_dict(), indent=2) + "\n"})
    print(f"wrote {len(scenario.faulty)} faulty nodes to {cfg['out']}")
    return EXIT_OK


COMMANDS = {
    "train": (TRAIN_OPTS, cmd_train),
    "eval": (EVAL_OPTS, cmd_eval),
    "trace": (TRACE_OPTS, cmd_trace),
    "faults": (FAULT_OPTS, cmd_faults_export),
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    opts, fn = COMMANDS[args.command]
    try:
        return fn(resolve(args, opts))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
