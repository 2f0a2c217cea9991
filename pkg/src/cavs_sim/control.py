"""Three-level deadband controller for the friction mode.

Per finger and per tick: open by a fixed step when the measured ratio sits
above the mode target by more than the deadband, close by a (larger) fixed
step when it sits below, do nothing inside the band.  The close step is
deliberately bigger than the open step to reduce the risk of dropping the
object while tightening.  Ratios above 1 (excessive load) feed the same
law and naturally command opening.
"""
from __future__ import annotations

from dataclasses import dataclass

from .friction import ContactState


@dataclass(frozen=True)
class ControllerConfig:
    r_target_LC: float = 0.40
    r_target_SC: float = 1.00
    epsilon: float = 0.005  # deadband as a fraction (0.5 percentage points)
    step_open: float = 0.25
    step_close: float = -0.5

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.step_open > 0:
            raise ValueError("step_open must be positive")
        if not self.step_close < 0:
            raise ValueError("step_close must be negative")
        if not abs(self.step_close) > self.step_open:
            raise ValueError("|step_close| must exceed step_open")
        if not 0 < self.r_target_LC < self.r_target_SC <= 1.5:
            raise ValueError("need 0 < r_target_LC < r_target_SC <= 1.5")

    def target(self, mode: ContactState) -> float:
        if mode is ContactState.LC:
            return self.r_target_LC
        if mode is ContactState.SC:
            return self.r_target_SC
        raise ValueError("target mode must be LC or SC")


@dataclass(frozen=True)
class FingerCommand:
    delta_d_f: float  # mm, opening positive; one of {step_open, 0, step_close}


def control_step(cfg: ControllerConfig, r_img: float, mode: ContactState) -> FingerCommand:
    """One deadband decision.  Exactly one of the three branches fires."""
    err = r_img - cfg.target(mode)
    if err > cfg.epsilon:
        return FingerCommand(cfg.step_open)
    if err < -cfg.epsilon:
        return FingerCommand(cfg.step_close)
    return FingerCommand(0.0)


def dual_finger_step(cfg: ControllerConfig, r_left: float, r_right: float,
                     mode: ContactState) -> tuple[FingerCommand, FingerCommand]:
    """Independent per-finger decisions against the same mode target."""
    return control_step(cfg, r_left, mode), control_step(cfg, r_right, mode)
