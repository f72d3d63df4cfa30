"""Run configuration: one JSON document with env, model, policy and io sections.

Defaults form the desk-scale profile. The full-scale profile is a bundled JSON
overlay (``data/profiles/full.json``). Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .envs import ConfoundingSpec
from .envs.kernels import ENV_KINDS

PROFILES = ("desk", "full")
SEED_ENV = "DRL_SEED"


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpecConfig(_Section):
    p_u: float = Field(0.2, ge=0, le=1)
    p_T1_given_u: tuple[float, float] = (0.24, 0.77)
    mixture_probs: tuple[tuple[float, float], tuple[float, float]] = ((0.93, 0.73), (0.87, 0.69))
    mu_R1: float = -1.0
    mu_R2: float = -200.0
    sigma: float = Field(2.0, ge=0)
    action_category_boundary: float | None = None

    def to_spec(self) -> ConfoundingSpec:
        return ConfoundingSpec(**self.model_dump())


class SizesConfig(_Section):
    train: int = Field(2000, ge=0)
    val: int = Field(200, ge=0)
    test: int = Field(400, ge=0)


class EnvConfig(_Section):
    kind: str = "glyph"
    spec: SpecConfig = SpecConfig()
    H: int = Field(16, ge=8)
    W: int = Field(16, ge=8)
    T: int = Field(5, ge=3)
    sizes: SizesConfig = SizesConfig()
    seed: int = 0
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _known_kind(self):
        if self.kind not in ENV_KINDS:
            raise ValueError(f"env.kind must be one of {ENV_KINDS}")
        return self


class ArchConfig(_Section):
    hidden: int = Field(64, ge=1)
    lstm_hidden: int = Field(64, ge=1)
    dec_hidden: int = Field(256, ge=1)
    conv_channels: tuple[int, ...] = (16, 32)
    kernel: int = Field(5, ge=1)
    layer_norm: bool = True


class ModelConfig(_Section):
    D_z: int = Field(50, ge=1)
    D_u: int = Field(8, ge=0)
    include_action_likelihood: bool = True
    u_prior: Literal["gaussian", "bernoulli"] = "gaussian"
    u_prior_p: float = Field(0.5, ge=0, le=1)
    arch: ArchConfig = ArchConfig()
    lr: float = Field(3e-3, gt=0)
    batch: int = Field(64, ge=1)
    epochs: int = Field(30, ge=1)
    objective: Literal["elbo", "drl"] = "drl"
    kl_warmup_frac: float = Field(0.1, ge=0, le=1)
    clip_norm: float = Field(5.0, gt=0)
    seed: int = 0


class PolicyConfig(_Section):
    episodes: int = Field(300, ge=1)
    steps: int = Field(50, ge=1)
    gamma: float = Field(0.99, ge=0, le=1)
    N_u: int = Field(200, ge=1)
    u_source: Literal["prior", "posterior"] = "prior"
    batch: int = Field(128, ge=1)
    lr_actor: float = Field(1e-4, gt=0)
    lr_critic: float = Field(1e-3, gt=0)
    hidden: int = Field(64, ge=1)
    replay_capacity: int = Field(100_000, ge=1)
    reward_scale: float = Field(0.01, gt=0)
    entropy_coef: float = Field(0.02, ge=0)
    update_every: int = Field(4, ge=1)
    oracle_d_z: int = Field(4, ge=1)
    eval_episodes: int = Field(100, ge=1)
    eval_steps: int = Field(50, ge=1)
    seed: int = 0


class IOConfig(_Section):
    data_dir: str = "data"
    model_dir: str = "models"
    policy_dir: str = "policies"
    report_dir: str = "reports"


class RunConfig(_Section):
    profile: Literal["desk", "full"] = "desk"
    seed: int | None = None  # when set, overrides every section seed
    env: EnvConfig = EnvConfig()
    model: ModelConfig = ModelConfig()
    policy: PolicyConfig = PolicyConfig()
    io: IOConfig = IOConfig()

    def resolved(self) -> RunConfig:
        """Copy with the top-level seed (if any) pushed into every section."""
        if self.seed is None:
            return self
        s = self.seed
        return self.model_copy(
            update={
                "env": self.env.model_copy(update={"seed": s}),
                "model": self.model.model_copy(update={"seed": s}),
                "policy": self.policy.model_copy(update={"seed": s}),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def profile_overrides(name: str) -> dict:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; expected one of {PROFILES}")
    if name == "desk":
        return {}
    text = resources.files("decon_rl").joinpath(f"data/profiles/{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def build_config(doc: dict | None = None, seed: int | None = None, environ: dict | None = None) -> RunConfig:
    """Profile defaults, then the user document, then the seed override.

    Precedence of seeds: ``seed`` argument (from --seed), then DRL_SEED, then the document.
    """
    doc = dict(doc or {})
    profile = doc.get("profile", "desk")
    try:
        merged = _deep_merge(profile_overrides(profile), doc)
        cfg = RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    env = os.environ if environ is None else environ
    if seed is None and env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg.resolved()


def load_config(path: str | Path | None, seed: int | None = None, environ: dict | None = None) -> RunConfig:
    if path is None:
        return build_config({}, seed, environ)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{p}: top level must be a JSON object")
    return build_config(doc, seed, environ)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"])
        parts.append(f"{loc}: {err['msg']}")
    return "invalid config: " + "; ".join(parts)
