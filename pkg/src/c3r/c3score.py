"""Exact sufficiency/necessity scoring over binary causal tables.

A table pairs the observational joint P(F_c, Y) with the interventional
rows P(Y | do(F_c)). When a full counterfactual specification is needed it
is given as a joint over response types: a type fixes the pair of potential
outcomes (Y under do(F_c=0), Y under do(F_c=1)), so the four types are
never (0,0), complier (0,1), defier (1,0) and always (1,1), jointly
distributed with F_c. Everything observable is derivable from that joint,
which is what makes the definitional score exactly computable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (ConfigError, ConsistencyError, ContractError,
                     DegenerateTableError, IdentifiabilityError)

_SUM_TOL = 1e-12
_CONSISTENCY_TOL = 1e-9
CLIP_SLACK = 1e-9

RESPONSE_TYPES = ("never", "complier", "defier", "always")
# potential outcomes (y under do(0), y under do(1)) per type, same order
_TYPE_OUTCOMES = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class CausalTable:
    """Finite distribution over a binary cause F_c and binary outcome Y.

    joint[v, y] = P(F_c = v, Y = y); interventional[v, y] = P(Y = y | do(F_c = v)).
    `response`, when present, is the (4, 2) joint over (response type, F_c).
    """

    joint: np.ndarray
    interventional: np.ndarray
    response: np.ndarray | None = None

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=np.float64)
        inter = np.asarray(self.interventional, dtype=np.float64)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "interventional", inter)
        if joint.shape != (2, 2) or inter.shape != (2, 2):
            raise ConfigError("joint and interventional tables must be 2x2")
        if np.any(joint < -_SUM_TOL) or np.any(inter < -_SUM_TOL):
            raise ConfigError("table entries must be non-negative")
        if abs(joint.sum() - 1.0) > _SUM_TOL:
            raise ConfigError(f"joint sums to {joint.sum()!r}, expected 1")
        for v in (0, 1):
            if abs(inter[v].sum() - 1.0) > _SUM_TOL:
                raise ConfigError(f"interventional row do(F_c={v}) does not sum to 1")
        if self.response is not None:
            resp = np.asarray(self.response, dtype=np.float64)
            object.__setattr__(self, "response", resp)
            if resp.shape != (4, 2):
                raise ConfigError("response joint must be 4x2 (type, F_c)")
            if np.any(resp < -_SUM_TOL) or abs(resp.sum() - 1.0) > _SUM_TOL:
                raise ConfigError("response joint must be a distribution")
            self._check_response_consistency()

    def _check_response_consistency(self) -> None:
        derived_joint, derived_inter = _marginals_from_response(self.response)
        if np.max(np.abs(derived_joint - self.joint)) > _CONSISTENCY_TOL:
            raise ConsistencyError(
                "response joint disagrees with the observational joint")
        if np.max(np.abs(derived_inter - self.interventional)) > _CONSISTENCY_TOL:
            raise ConsistencyError(
                "response joint disagrees with the interventional rows")

    @classmethod
    def from_response(cls, response: np.ndarray) -> "CausalTable":
        """Build the full table implied by a joint over (response type, F_c)."""
        response = np.asarray(response, dtype=np.float64)
        joint, inter = _marginals_from_response(response)
        return cls(joint=joint, interventional=inter, response=response)

    def p_fc(self, v: int) -> float:
        return float(self.joint[v].sum())

    def p_y1_given_fc(self, v: int) -> float:
        mass = self.p_fc(v)
        if mass <= 0.0:
            raise DegenerateTableError(f"P(F_c={v}) = 0, conditional undefined")
        return float(self.joint[v, 1] / mass)

    def p_y1_do(self, v: int) -> float:
        return float(self.interventional[v, 1])

    def p_y1(self) -> float:
        return float(self.joint[:, 1].sum())


def _marginals_from_response(resp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    joint = np.zeros((2, 2))
    inter = np.zeros((2, 2))
    p_type = resp.sum(axis=1)
    for t, (y0, y1) in enumerate(_TYPE_OUTCOMES):
        joint[0, y0] += resp[t, 0]
        joint[1, y1] += resp[t, 1]
        inter[0, y0] += p_type[t]
        inter[1, y1] += p_type[t]
    return joint, inter


def check_exogeneity(table: CausalTable, tol: float = 1e-9) -> bool:
    """True iff P(Y=y | do(F_c=v)) matches P(Y=y | F_c=v) for both v within tol."""
    for v in (0, 1):
        if abs(table.p_y1_do(v) - table.p_y1_given_fc(v)) > tol:
            return False
    return True


def monotonicity_direction(table: CausalTable, tol: float = 1e-9) -> str:
    """Which direction of monotonicity holds: 'positive', 'negative', 'both' or 'none'.

    Positive means the cause never prevents the outcome (no defiers); with
    only interventional rows the implied necessary condition
    P(Y=1|do(1)) >= P(Y=1|do(0)) is tested instead.
    """
    if table.response is not None:
        p_type = table.response.sum(axis=1)
        pos = p_type[RESPONSE_TYPES.index("defier")] <= tol
        neg = p_type[RESPONSE_TYPES.index("complier")] <= tol
    else:
        diff = table.p_y1_do(1) - table.p_y1_do(0)
        pos = diff >= -tol
        neg = diff <= tol
    if pos and neg:
        return "both"
    if pos:
        return "positive"
    if neg:
        return "negative"
    return "none"


def check_monotonicity(table: CausalTable, tol: float = 1e-9) -> bool:
    """True iff at least one direction of monotonicity holds within tol."""
    return monotonicity_direction(table, tol) != "none"


def pns_identifiable(table: CausalTable, tol: float = 1e-9) -> float:
    """Point-identified sufficiency-and-necessity score under the assumptions.

    Requires exogeneity and monotonicity; returns
    P(Y=1 | F_c=1) - P(Y=1 | F_c=0), non-negative under positive monotonicity.
    """
    if not check_exogeneity(table, tol):
        raise IdentifiabilityError("exogeneity violated: do-rows differ "
                                   "from conditionals beyond tolerance")
    if not check_monotonicity(table, tol):
        raise IdentifiabilityError("monotonicity violated: both response "
                                   "directions carry positive mass")
    return table.p_y1_given_fc(1) - table.p_y1_given_fc(0)


def _clip_unit(value: float, what: str) -> float:
    if value < -CLIP_SLACK or value > 1.0 + CLIP_SLACK:
        raise IdentifiabilityError(
            f"{what} = {value!r} lies outside [0, 1]; the table is not "
            "consistent with an exogenous monotone mechanism")
    return min(max(value, 0.0), 1.0)


def prob_sufficiency(table: CausalTable) -> float:
    """P(Y_do(1)=1 | Y=0, F_c=0) = (P(Y=1|do(1)) - P(Y=1)) / P(Y=0, F_c=0)."""
    denom = float(table.joint[0, 0])
    if denom <= 0.0:
        raise DegenerateTableError("P(Y=0, F_c=0) = 0, sufficiency undefined")
    return _clip_unit((table.p_y1_do(1) - table.p_y1()) / denom, "sufficiency")


def prob_necessity(table: CausalTable) -> float:
    """P(Y_do(0)=0 | Y=1, F_c=1) = (P(Y=1) - P(Y=1|do(0))) / P(Y=1, F_c=1)."""
    denom = float(table.joint[1, 1])
    if denom <= 0.0:
        raise DegenerateTableError("P(Y=1, F_c=1) = 0, necessity undefined")
    return _clip_unit((table.p_y1() - table.p_y1_do(0)) / denom, "necessity")


def c3_definition(table: CausalTable) -> float:
    """Definitional score from the full counterfactual specification.

    Evaluates PS * P(F_c=0, Y=0) + PN * P(F_c=1, Y=1), where PS and PN are
    the counterfactual conditionals read directly off the response joint.
    Terms whose conditioning event has zero mass contribute zero.
    """
    if table.response is None:
        raise ContractError("c3_definition needs a full counterfactual "
                            "specification (response joint)")
    resp = table.response
    i_never = RESPONSE_TYPES.index("never")
    i_comp = RESPONSE_TYPES.index("complier")
    i_alw = RESPONSE_TYPES.index("always")

    # F_c=0, Y=0 means the do(0) outcome was 0: types never or complier.
    mass_00 = resp[i_never, 0] + resp[i_comp, 0]
    term_suf = resp[i_comp, 0] if mass_00 > 0.0 else 0.0
    # F_c=1, Y=1 means the do(1) outcome was 1: types complier or always.
    mass_11 = resp[i_comp, 1] + resp[i_alw, 1]
    term_nec = resp[i_comp, 1] if mass_11 > 0.0 else 0.0
    return float(term_suf + term_nec)


_JOINT_KEYS = {"fc0_y0": (0, 0), "fc0_y1": (0, 1), "fc1_y0": (1, 0), "fc1_y1": (1, 1)}
_DO_KEYS = {"do0_y0": (0, 0), "do0_y1": (0, 1), "do1_y0": (1, 0), "do1_y1": (1, 1)}


def table_to_json(table: CausalTable) -> dict:
    doc = {
        "joint": {k: float(table.joint[idx]) for k, idx in _JOINT_KEYS.items()},
        "interventional": {k: float(table.interventional[idx])
                           for k, idx in _DO_KEYS.items()},
    }
    if table.response is not None:
        doc["response"] = {
            f"{name}_fc{v}": float(table.response[t, v])
            for t, name in enumerate(RESPONSE_TYPES) for v in (0, 1)
        }
    return doc


def table_from_json(doc: dict) -> CausalTable:
    def pull(section: str, keys: dict, shape: tuple) -> np.ndarray:
        if section not in doc:
            raise ConfigError(f"missing key '{section}'")
        block = doc[section]
        out = np.zeros(shape)
        for key, idx in keys.items():
            if key not in block:
                raise ConfigError(f"missing key '{section}.{key}'")
            try:
                out[idx] = float(block[key])
            except (TypeError, ValueError):
                raise ConfigError(f"key '{section}.{key}' is not a number")
        return out

    joint = pull("joint", _JOINT_KEYS, (2, 2))
    inter = pull("interventional", _DO_KEYS, (2, 2))
    response = None
    if "response" in doc:
        keys = {f"{name}_fc{v}": (t, v)
                for t, name in enumerate(RESPONSE_TYPES) for v in (0, 1)}
        response = pull("response", keys, (4, 2))
    return CausalTable(joint=joint, interventional=inter, response=response)


def read_table(path: str | Path) -> CausalTable:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
    return table_from_json(doc)


def write_table(path: str | Path, table: CausalTable) -> None:
    with open(path, "w") as fh:
        json.dump(table_to_json(table), fh, indent=2, sort_keys=True)
        fh.write("\n")


def score_table(table: CausalTable, tol: float = 1e-9) -> dict:
    """All scores and assumption flags for one table, as a JSON-ready dict."""
    exo = check_exogeneity(table, tol)
    direction = monotonicity_direction(table, tol)
    out = {
        "exogeneity": bool(exo),
        "monotonic": direction != "none",
        "monotonicity_direction": direction,
        "prob_sufficiency": prob_sufficiency(table),
        "prob_necessity": prob_necessity(table),
    }
    if exo and direction != "none":
        out["pns"] = pns_identifiable(table, tol)
    if table.response is not None:
        out["c3_definitional"] = c3_definition(table)
    return out
