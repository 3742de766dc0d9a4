"""Trial-to-trial difficulty laws acting on the task amplitude.

``ilc_update`` scales the step by how well the previous trial went;
``rule_based_update`` takes a fixed step only when the previous error norm
is at or below a threshold.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

from .errors import InvalidSpecError, InvalidStateError

log = logging.getLogger(__name__)


class Law(str, enum.Enum):
    ILC = "ilc"
    RULE_BASED = "rule_based"


class _Nominal:
    """Placeholder for the error of the (non-existent) trial before the first one.

    Resolves to ``1 / beta``, which makes the first ILC update exactly zero.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOMINAL"

    def __reduce__(self):
        return (_Nominal, ())


NOMINAL = _Nominal()


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 0.2
    beta: float = 1.0
    r_star: float = 0.2
    threshold: float = 0.7
    r_init: float = 0.04
    clamp_to_r_star: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "r_star", "threshold", "r_init"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpecError(f"controller {name} must be finite")
        if not 0 < self.alpha <= 1:
            raise InvalidSpecError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.beta <= 0:
            raise InvalidSpecError(f"beta must be > 0, got {self.beta}")
        if self.threshold <= 0:
            raise InvalidSpecError(f"threshold must be > 0, got {self.threshold}")
        if not 0 < self.r_init <= self.r_star:
            raise InvalidSpecError(
                f"need 0 < r_init <= r_star, got r_init={self.r_init}, r_star={self.r_star}")

    @property
    def max_step(self) -> float:
        return self.alpha * self.r_star


@dataclass(frozen=True)
class ControllerState:
    """Amplitude and error norm of trial ``k - 1``, used to set trial ``k``."""

    k: int
    r_prev: float
    e_prev_norm: object = NOMINAL

    @classmethod
    def first(cls, cfg: ControllerConfig) -> "ControllerState":
        return cls(1, cfg.r_init, NOMINAL)

    def advance(self, amplitude: float, error_norm: float) -> "ControllerState":
        return replace(self, k=self.k + 1, r_prev=amplitude, e_prev_norm=error_norm)


def _previous_error(state: ControllerState, cfg: ControllerConfig) -> float:
    if state.e_prev_norm is NOMINAL:
        return 1.0 / cfg.beta
    e = float(state.e_prev_norm)
    if not math.isfinite(e) or e < 0:
        raise InvalidStateError(f"previous error norm must be finite and >= 0, got {e}")
    return e


def _clamp(r: float, cfg: ControllerConfig) -> float:
    if cfg.clamp_to_r_star and r > cfg.r_star:
        log.debug("amplitude %.6g clamped to r_star %.6g", r, cfg.r_star)
        return cfg.r_star
    return r


def ilc_step(state: ControllerState, cfg: ControllerConfig) -> float:
    """Unclamped update term ``alpha r* (1 - min(beta e, 1))``."""
    e = _previous_error(state, cfg)
    return cfg.max_step * (1.0 - min(cfg.beta * e, 1.0))


def rule_based_step(state: ControllerState, cfg: ControllerConfig) -> float:
    if state.e_prev_norm is NOMINAL:
        return 0.0
    e = _previous_error(state, cfg)
    return cfg.max_step if e <= cfg.threshold else 0.0


def ilc_update(state: ControllerState, cfg: ControllerConfig) -> float:
    return _clamp(state.r_prev + ilc_step(state, cfg), cfg)


def rule_based_update(state: ControllerState, cfg: ControllerConfig) -> float:
    return _clamp(state.r_prev + rule_based_step(state, cfg), cfg)


UPDATES = {Law.ILC: (ilc_update, ilc_step), Law.RULE_BASED: (rule_based_update, rule_based_step)}


def update(state: ControllerState, cfg: ControllerConfig, law: Law) -> float:
    return UPDATES[Law(law)][0](state, cfg)


def step(state: ControllerState, cfg: ControllerConfig, law: Law) -> float:
    return UPDATES[Law(law)][1](state, cfg)


def simulate_update_sequence(errors, cfg: ControllerConfig, law: Law = Law.ILC) -> list:
    """Replay a law over recorded error norms.

    ``errors[k]`` is the error norm measured in trial ``k + 1``; the result
    has one more entry than ``errors`` and starts at ``r_init``.
    """
    state = ControllerState.first(cfg)
    amplitudes = [update(state, cfg, law)]
    for e in errors:
        if e < 0:
            raise InvalidStateError(f"error norms must be >= 0, got {e}")
        state = state.advance(amplitudes[-1], e)
        amplitudes.append(update(state, cfg, law))
    return amplitudes
