"""Exact discrete causal queries over a confounder -> action -> outcome table.

Layout of a ``DiscreteCPT`` (u = confounder, a = action, y = outcome):

    confounder_probs[u]      p(u)
    action_probs[u, a]       p(a | u)
    outcome_probs[u, a, y]   p(y | a, u)
    outcome_values[y]        real value attached to each outcome (expectation mode)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

ROW_TOL = 1e-12
EXPECTATION = "expectation"

Outcome = Union[int, str]


class CPTValidationError(ValueError):
    pass


class UnobservedActionError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteCPT:
    confounder_probs: np.ndarray
    action_probs: np.ndarray
    outcome_probs: np.ndarray
    outcome_values: np.ndarray | None = None
    action_names: tuple[str, ...] = ()
    outcome_names: tuple[str, ...] = ()

    def __post_init__(self):
        pu = np.asarray(self.confounder_probs, dtype=np.float64)
        pa = np.asarray(self.action_probs, dtype=np.float64)
        py = np.asarray(self.outcome_probs, dtype=np.float64)
        object.__setattr__(self, "confounder_probs", pu)
        object.__setattr__(self, "action_probs", pa)
        object.__setattr__(self, "outcome_probs", py)
        if self.outcome_values is not None:
            object.__setattr__(self, "outcome_values", np.asarray(self.outcome_values, dtype=np.float64))
        n_u = pu.shape[0]
        if pu.ndim != 1 or pa.ndim != 2 or py.ndim != 3 or pa.shape[0] != n_u or py.shape[:2] != pa.shape:
            raise CPTValidationError(
                f"inconsistent table shapes: p(u) {pu.shape}, p(a|u) {pa.shape}, p(y|a,u) {py.shape}"
            )
        if self.outcome_values is not None and self.outcome_values.shape != (py.shape[2],):
            raise CPTValidationError(f"outcome_values must have length {py.shape[2]}")
        for name, arr in (("confounder_probs", pu), ("action_probs", pa), ("outcome_probs", py)):
            if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
                raise CPTValidationError(f"{name}: probabilities must lie in [0, 1]")
        _check_rows("confounder_probs", pu[None, :])
        _check_rows("action_probs", pa)
        _check_rows("outcome_probs", py.reshape(-1, py.shape[2]), shape=py.shape[:2])
        if not self.action_names:
            object.__setattr__(self, "action_names", tuple(f"a{i}" for i in range(pa.shape[1])))
        if not self.outcome_names:
            object.__setattr__(self, "outcome_names", tuple(f"y{i}" for i in range(py.shape[2])))

    @property
    def n_actions(self) -> int:
        return self.action_probs.shape[1]

    def action_index(self, a: int | str) -> int:
        if isinstance(a, str):
            if a not in self.action_names:
                raise KeyError(f"unknown action {a!r}; known: {list(self.action_names)}")
            return self.action_names.index(a)
        if not 0 <= a < self.n_actions:
            raise KeyError(f"action index {a} out of range")
        return int(a)

    def outcome_weights(self, y: Outcome) -> np.ndarray:
        """Vector over outcomes that turns p(y|...) into the requested quantity."""
        n_y = self.outcome_probs.shape[2]
        if y == EXPECTATION:
            if self.outcome_values is None:
                raise CPTValidationError("expectation mode needs outcome_values")
            return self.outcome_values
        if isinstance(y, str):
            if y not in self.outcome_names:
                raise KeyError(f"unknown outcome {y!r}; known: {list(self.outcome_names)}")
            y = self.outcome_names.index(y)
        w = np.zeros(n_y)
        w[y] = 1.0
        return w

    def stratum_values(self, y: Outcome) -> np.ndarray:
        """E[w(y) | a, u] for every (u, a) cell."""
        return self.outcome_probs @ self.outcome_weights(y)

    def to_dict(self) -> dict:
        d = {
            "confounder_probs": self.confounder_probs.tolist(),
            "action_probs": self.action_probs.tolist(),
            "outcome_probs": self.outcome_probs.tolist(),
            "action_names": list(self.action_names),
            "outcome_names": list(self.outcome_names),
        }
        if self.outcome_values is not None:
            d["outcome_values"] = self.outcome_values.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DiscreteCPT:
        known = {"confounder_probs", "action_probs", "outcome_probs", "outcome_values", "action_names", "outcome_names"}
        unknown = set(d) - known
        if unknown:
            raise CPTValidationError(f"unknown CPT keys: {sorted(unknown)}")
        missing = {"confounder_probs", "action_probs", "outcome_probs"} - set(d)
        if missing:
            raise CPTValidationError(f"missing CPT keys: {sorted(missing)}")
        return cls(
            confounder_probs=d["confounder_probs"],
            action_probs=d["action_probs"],
            outcome_probs=d["outcome_probs"],
            outcome_values=d.get("outcome_values"),
            action_names=tuple(d.get("action_names", ())),
            outcome_names=tuple(d.get("outcome_names", ())),
        )


def _check_rows(name: str, rows: np.ndarray, shape: tuple[int, ...] | None = None) -> None:
    sums = rows.sum(axis=-1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        i = int(bad[0])
        where = np.unravel_index(i, shape) if shape is not None else (i,)
        raise CPTValidationError(f"{name}: row {tuple(int(k) for k in where)} sums to {float(sums.flat[i]):.6g}, expected 1")


def load_cpt(path: str | Path) -> DiscreteCPT:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CPTValidationError(f"{path}: not valid JSON ({exc})") from exc
    return DiscreteCPT.from_dict(doc)


def default_cpt() -> DiscreteCPT:
    """The bundled confounded-treatment table (T1/T2 actions, R1/R2 extra-reward components)."""
    text = resources.files("decon_rl").joinpath("data/treatment_cpt.json").read_text(encoding="utf-8")
    return DiscreteCPT.from_dict(json.loads(text))


def confounder_posterior(cpt: DiscreteCPT, a: int | str) -> np.ndarray:
    """p(u | a) via Bayes; raises when the action has zero marginal probability."""
    ai = cpt.action_index(a)
    joint = cpt.confounder_probs * cpt.action_probs[:, ai]
    total = joint.sum()
    if total <= 0.0:
        raise UnobservedActionError(f"action never observed: {cpt.action_names[ai]}")
    return joint / total


def conditional_query(cpt: DiscreteCPT, a: int | str, y: Outcome) -> float:
    """Observational p(y | a) (or E[value | a] when ``y == 'expectation'``)."""
    ai = cpt.action_index(a)
    return float(confounder_posterior(cpt, ai) @ cpt.stratum_values(y)[:, ai])


def backdoor_adjust(cpt: DiscreteCPT, a: int | str, y: Outcome) -> float:
    """Interventional p(y | do(a)) = sum_u p(y | a, u) p(u)."""
    ai = cpt.action_index(a)
    return float(cpt.confounder_probs @ cpt.stratum_values(y)[:, ai])


@dataclass
class CausalQueryResult:
    observational: list[float]
    interventional: list[float]
    preferred_action_observational: int
    preferred_action_interventional: int
    paradox_flag: bool
    stratum_reversal: bool = False
    action_names: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "observational": self.observational,
            "interventional": self.interventional,
            "preferred_action_observational": self.action_names[self.preferred_action_observational],
            "preferred_action_interventional": self.action_names[self.preferred_action_interventional],
            "paradox_flag": self.paradox_flag,
            "stratum_reversal": self.stratum_reversal,
        }


def _best(values: np.ndarray, better: str) -> int:
    # np.argmax/argmin return the first extremum, i.e. ties go to the lowest index
    return int(np.argmax(values)) if better == "higher" else int(np.argmin(values))


def simpson_check(cpt: DiscreteCPT, y: Outcome = EXPECTATION, better: str = "higher") -> CausalQueryResult:
    """Compare observational and interventional preferences between two actions.

    ``stratum_reversal`` additionally reports the classic pattern where the
    aggregate ordering is the opposite of the ordering inside every stratum of u.
    """
    if cpt.n_actions != 2:
        raise ValueError("simpson_check needs exactly two actions")
    if better not in ("higher", "lower"):
        raise ValueError("better must be 'higher' or 'lower'")
    obs = np.array([conditional_query(cpt, a, y) for a in range(2)])
    do = np.array([backdoor_adjust(cpt, a, y) for a in range(2)])
    sign = 1.0 if better == "higher" else -1.0
    strata = cpt.stratum_values(y)
    present = cpt.confounder_probs > 0
    diff_strata = sign * (strata[present, 0] - strata[present, 1])
    diff_obs = sign * (obs[0] - obs[1])
    reversal = bool(
        (np.all(diff_strata > 0) and diff_obs < 0) or (np.all(diff_strata < 0) and diff_obs > 0)
    )
    p_obs, p_do = _best(obs, better), _best(do, better)
    return CausalQueryResult(
        observational=obs.tolist(),
        interventional=do.tolist(),
        preferred_action_observational=p_obs,
        preferred_action_interventional=p_do,
        paradox_flag=p_obs != p_do,
        stratum_reversal=reversal,
        action_names=list(cpt.action_names),
    )
