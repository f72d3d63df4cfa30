"""Command-line front end: ``decon-rl <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Relative paths resolve against ``--workdir``. Every command writes the resolved
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agents import (
    ACConfig,
    ConstantPolicy,
    LoggedSource,
    ModelSource,
    OracleSource,
    SourceMismatchError,
    UniformPolicy,
    evaluate,
    load_policy,
    save_policy,
    train_ac,
)
from .causal import EXPECTATION, CPTValidationError, default_cpt, backdoor_adjust, conditional_query, load_cpt, simpson_check
from .config import ConfigError, RunConfig, load_config
from .envs import DatasetFormatError, generate_dataset, read_split, split_path
from .envs.confounding import ACTION_BOUND
from .model import (
    Batch,
    CheckpointError,
    Model,
    ModelArch,
    ModelDims,
    TrainConfig,
    counterfactual_rollout,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    train_model,
)

SIDECAR = "resolved_config.json"


class UsageError(Exception):
    """Bad arguments or inputs: exit code 2."""


# ------------------------------------------------------------------ helpers


def _path(args, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else Path(args.workdir) / q


def _config(args) -> RunConfig:
    try:
        return load_config(_path(args, getattr(args, "config", None)), args.seed)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sidecar(out_dir: Path, cfg: RunConfig | None, command: str, extra: dict | None = None) -> None:
    doc = {"command": command, "version": __version__, "arguments": extra or {}}
    if cfg is not None:
        doc["config"] = cfg.model_dump(mode="json")
    _write_json(out_dir / SIDECAR, doc)


def _out_dir(args) -> Path:
    out = _path(args, args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_split(args, data_dir: str, split: str):
    path = split_path(_path(args, data_dir), split)
    if not path.is_file():
        raise UsageError(f"dataset split not found: {path}")
    try:
        return read_split(path)
    except DatasetFormatError as exc:
        raise UsageError(str(exc)) from exc


def _load_model(args, path: str) -> Model:
    p = _path(args, path)
    if not p.is_file():
        raise UsageError(f"model checkpoint not found: {p}")
    try:
        return load_checkpoint(p)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from exc


def write_pgm(path: Path, frame: np.ndarray) -> None:
    """8-bit binary portable graymap; intensities in [0, 1] are scaled to [0, 255]."""
    img = np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, dims, maxval, body = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def _rel(args, p: Path) -> str:
    try:
        return str(p.relative_to(Path(args.workdir)))
    except ValueError:
        return str(p)


# ----------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    env = cfg.env
    out = _out_dir(args)
    counts = (env.sizes.train, env.sizes.val, env.sizes.test)
    paths = generate_dataset(env.kind, env.spec.to_spec(), counts, env.T, env.H, env.W, env.seed, out, env.workers)
    for name, p in paths.items():
        ds = read_split(p)
        p_u = "n/a" if not len(ds) else f"{ds.u.mean():.4f}"
        print(f"{name}: {len(ds)} sequences, empirical p(u=1) = {p_u}")
    _sidecar(out, cfg, "gen-data", {"out": args.out})
    return 0


def build_model(cfg: RunConfig, header: dict, variant: str) -> Model:
    m = cfg.model
    dims = ModelDims.for_frames(header["H"], header["W"], D_z=m.D_z, D_u=m.D_u, T=header["T"], D_a=header["D_a"])
    arch = ModelArch(**m.arch.model_dump())
    return Model(
        dims,
        arch,
        include_u=variant == "decon",
        include_action_likelihood=m.include_action_likelihood,
        action_bound=ACTION_BOUND[header["env_kind"]],
        reward_range=(header["reward_min"], header["reward_max"]),
        u_prior=m.u_prior,
        u_prior_p=m.u_prior_p,
        seed=m.seed,
    )


def cmd_train_model(args) -> int:
    cfg = _config(args)
    ds = _read_split(args, args.data, "train")
    if len(ds) == 0:
        raise UsageError("training split is empty")
    model = build_model(cfg, ds.header, args.variant)
    data = Batch.from_dataset(model, ds)
    m = cfg.model
    tcfg = TrainConfig(
        epochs=m.epochs,
        batch_size=m.batch,
        lr=m.lr,
        seed=m.seed,
        objective=m.objective,
        kl_warmup_frac=m.kl_warmup_frac,
        clip_norm=m.clip_norm,
    )
    out = _out_dir(args)
    hist = train_model(
        model,
        data,
        tcfg,
        log_csv=out / "loss.csv",
        on_epoch=lambda e, bd: print(f"epoch {e + 1}/{tcfg.epochs}: loss {bd.loss:.4f}", flush=True),
    )
    save_checkpoint(model, out / "model.ckpt", {"epochs": len(hist), "env_kind": ds.env_kind, "variant": args.variant})
    _sidecar(out, cfg, "train-model", {"data": args.data, "variant": args.variant, "out": args.out})
    return 0


def ac_config(cfg: RunConfig) -> ACConfig:
    p = cfg.policy
    return ACConfig(
        gamma=p.gamma,
        batch_size=p.batch,
        lr_actor=p.lr_actor,
        lr_critic=p.lr_critic,
        hidden=p.hidden,
        replay_capacity=p.replay_capacity,
        reward_scale=p.reward_scale,
        entropy_coef=p.entropy_coef,
        seed=p.seed,
        update_every=p.update_every,
    )


def _source(args, cfg: RunConfig, algo: str, split: str):
    """Environment source for training or evaluation."""
    p = cfg.policy
    if args.oracle:
        if args.model:
            raise UsageError("--oracle and --model are mutually exclusive")
        cpt = load_cpt(_path(args, args.cpt)) if getattr(args, "cpt", None) else None
        return OracleSource(algo, cpt, env_kind="pendulum", d_z=p.oracle_d_z, n_u=p.N_u, u_source=p.u_source)
    if not args.model:
        raise UsageError("one of --model or --oracle is required")
    if not args.data:
        raise UsageError("--data is required with --model")
    model = _load_model(args, args.model)
    ds = _read_split(args, args.data, split)
    if len(ds) == 0:
        raise UsageError(f"{split} split is empty")
    batch = Batch.from_dataset(model, ds)
    if algo == "direct":
        return LoggedSource(model, batch, ds.env_kind)
    return ModelSource(model, batch, algo, ds.env_kind, p.N_u, p.u_source)


def cmd_train_policy(args) -> int:
    cfg = _config(args)
    try:
        source = _source(args, cfg, args.algo, "train")
    except SourceMismatchError as exc:
        raise UsageError(f"refused: {exc}") from exc
    out = _out_dir(args)
    p = cfg.policy
    res = train_ac(source, p.episodes, p.steps, ac_config(cfg), log_csv=out / "log.csv")
    save_policy(res.policy, out / "policy.bin", {"algo": args.algo, "oracle": bool(args.oracle), "env_kind": source.env_kind})
    tail = res.log[-50:]
    print(f"final {len(tail)}-episode optimal-action frequency: {np.mean([r.optimal_action_freq for r in tail]):.4f}")
    _sidecar(
        out,
        cfg,
        "train-policy",
        {"algo": args.algo, "oracle": bool(args.oracle), "model": args.model, "data": args.data, "out": args.out},
    )
    return 0


def _policy(args, bound: float):
    spec = args.policy
    if spec.startswith("constant:"):
        return ConstantPolicy(float(spec.split(":", 1)[1]))
    if spec == "uniform":
        return UniformPolicy(bound)
    p = _path(args, spec)
    if not p.is_file():
        raise UsageError(f"policy file not found: {p}")
    return load_policy(p)[0]


def cmd_eval(args) -> int:
    cfg = _config(args)
    try:
        source = _source(args, cfg, "vanilla" if args.oracle else args.algo, "test")
    except SourceMismatchError as exc:
        raise UsageError(f"refused: {exc}") from exc
    policy = _policy(args, source.action_bound)
    episodes = args.episodes or cfg.policy.eval_episodes
    steps = args.steps or cfg.policy.eval_steps
    report = evaluate(policy, source, episodes, steps, seed=cfg.policy.seed)
    doc = report.to_dict()
    doc["steps_per_episode"] = steps
    doc["mean_reward_per_step"] = report.mean_reward / steps
    out = _path(args, args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, doc)
    print(f"mean total reward {report.mean_reward:.4f}, optimal-action frequency {report.mean_optimal_freq:.4f}")
    _sidecar(out.parent, cfg, "eval", {"policy": args.policy, "episodes": episodes, "steps": steps, "out": args.out})
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    model = _load_model(args, args.model)
    ds = _read_split(args, args.data, args.split)
    n = len(ds) if args.limit is None else min(args.limit, len(ds))
    if n == 0:
        raise UsageError("no sequences to reconstruct")
    batch = Batch.from_dataset(model, ds, np.arange(n))
    rec = reconstruct(model, batch, np.random.default_rng(cfg.model.seed))
    out = _out_dir(args)
    shape = model.dims.frame_shape
    for i in range(n):
        for t in range(batch.T):
            write_pgm(out / f"seq{i:04d}_t{t}.pgm", rec[i, t].reshape(shape))
    mse = float(np.mean((rec - batch.x) ** 2))
    _write_json(out / "reconstruction.json", {"sequences": n, "frames": n * batch.T, "mse": mse})
    print(f"wrote {n * batch.T} frames, mse {mse:.6f}")
    _sidecar(out, cfg, "reconstruct", {"model": args.model, "data": args.data, "split": args.split, "out": args.out})
    return 0


def cmd_counterfactual(args) -> int:
    cfg = _config(args)
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    model = _load_model(args, args.model)
    ds = _read_split(args, args.data, args.split)
    T = ds.obs.shape[1]
    if not 0 <= args.frame_index < len(ds) * T:
        raise UsageError(f"--frame-index must lie in [0, {len(ds) * T})")
    seq, t = divmod(args.frame_index, T)
    frame = ds.obs[seq, t]
    actions = None
    if args.action is not None:
        actions = np.full((1, args.horizon, model.dims.D_a), args.action)
    ro = counterfactual_rollout(model, frame.reshape(1, -1), args.horizon, np.random.default_rng(cfg.model.seed), actions)
    out = _out_dir(args)
    write_pgm(out / "frame_000.pgm", frame)
    for k in range(args.horizon):
        write_pgm(out / f"frame_{k + 1:03d}.pgm", ro.frames[0, k].reshape(frame.shape))
    _write_json(
        out / "rollout.json",
        {
            "frame_index": args.frame_index,
            "horizon": args.horizon,
            "inferred_action": ro.inferred_action[0].tolist(),
            "inferred_reward": float(ro.inferred_reward[0]),
            "actions": ro.actions[0].tolist(),
            "predicted_rewards": ro.rewards[0].tolist(),
        },
    )
    print(f"wrote {args.horizon + 1} frames")
    _sidecar(out, cfg, "counterfactual", {"model": args.model, "frame_index": args.frame_index, "horizon": args.horizon})
    return 0


def cmd_causal_query(args) -> int:
    try:
        cpt = load_cpt(_path(args, args.cpt)) if args.cpt else default_cpt()
    except FileNotFoundError as exc:
        raise UsageError(f"CPT file not found: {exc.filename}") from exc
    except CPTValidationError as exc:
        raise UsageError(f"malformed CPT: {exc}") from exc
    y: int | str = args.outcome
    if isinstance(y, str) and y.isdigit():
        y = int(y)
    try:
        if args.mode == "simpson":
            doc = {"mode": "simpson", "outcome": args.outcome, **simpson_check(cpt, y).to_dict()}
        else:
            fn = conditional_query if args.mode == "cond" else backdoor_adjust
            doc = {"mode": args.mode, "outcome": args.outcome, "values": {n: fn(cpt, i, y) for i, n in enumerate(cpt.action_names)}}
    except (KeyError, CPTValidationError) as exc:
        raise UsageError(str(exc)) from exc
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = _path(args, args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        _sidecar(out.parent, None, "causal-query", {"cpt": args.cpt, "outcome": args.outcome, "mode": args.mode})
    sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="base directory for relative paths")
    common.add_argument("--seed", type=int, default=None, help="override every seed (beats DRL_SEED)")

    parser = argparse.ArgumentParser(prog="decon-rl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate train/val/test datasets")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-model", parents=[common], help="fit the sequence model")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--variant", choices=("decon", "alt"), default="decon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_model)

    p = sub.add_parser("train-policy", parents=[common], help="train an actor-critic policy")
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true", help="use the exact confounder table as environment")
    p.add_argument("--cpt", help="table for --oracle (default: bundled)")
    p.add_argument("--data", help="dataset directory (with --model)")
    p.add_argument("--algo", choices=("vanilla", "direct", "decon"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("eval", parents=[common], help="evaluate a policy")
    p.add_argument("--config")
    p.add_argument("--policy", required=True, help="policy file, 'constant:<a>' or 'uniform'")
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--cpt")
    p.add_argument("--data")
    p.add_argument("--algo", choices=("vanilla", "decon"), default="decon", help="model rollouts to use with --model")
    p.add_argument("--episodes", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reconstruct", parents=[common], help="decode sequences through the posterior")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("counterfactual", parents=[common], help="roll the model forward from one frame")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--frame-index", type=int, required=True, help="flat index over (sequence, step)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--action", type=float, help="hold this action (default: uniform random)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_counterfactual)

    p = sub.add_parser("causal-query", parents=[common], help="conditional / interventional queries on a table")
    p.add_argument("--cpt", help="CPT JSON (default: bundled table)")
    p.add_argument("--outcome", default=EXPECTATION, help="outcome name/index or 'expectation'")
    p.add_argument("--mode", choices=("cond", "do", "simpson"), required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_causal_query)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
