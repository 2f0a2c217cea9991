"""Configuration and scenario documents.

One JSON object configures everything: sections geometry / camera /
friction / controller / object plus an integer seed.  Every section is
optional (an empty document runs the built-in defaults), unknown keys are
rejected at every level, and all validation happens before any command
produces output.

Scenario files are JSON too: a list of steps with a target mode, duration,
and an optional per-finger disturbance, plus optional tick_dt_s and
initial_gap_mm settings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .control import ControllerConfig
from .friction import ContactState, Direction, FrictionParams
from .kinematics import CavsGeometry, GeometryInfeasible
from .plant import Disturbance, ObjectModel, ScenarioStep
from .sensing import CameraModel


class ConfigError(ValueError):
    """Document failed parsing or validation."""


@dataclass(frozen=True)
class Config:
    geometry: CavsGeometry = field(default_factory=CavsGeometry)
    camera: CameraModel = field(default_factory=CameraModel)
    friction: FrictionParams = field(default_factory=FrictionParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    object: ObjectModel = field(default_factory=ObjectModel)
    seed: int = 0


_GEOMETRY_KEYS = ("l1", "l2", "l3", "l_r", "p_ax", "p_ay", "p_cx0", "p_ex0", "p_ey0", "d_sc")
_CAMERA_KEYS = ("focal_px", "image_width_px", "image_height_px", "noise_std_pct")
_FRICTION_KEYS = ("d_LC_end", "d_SC_start", "f_local_max", "f_local_min",
                  "mu", "adhesion", "kinetic_fraction")
_CONTROLLER_KEYS = ("r_target_LC", "r_target_SC", "epsilon", "step_open", "step_close")
_OBJECT_KEYS = ("nominal_width", "stiffness", "required_hold_force", "slide_demand")


def _require_mapping(val, where: str) -> dict:
    if not isinstance(val, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(val).__name__}")
    return val


def _reject_unknown(data: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)} in {where}")


def _number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where} must be a number, got {val!r}")
    return float(val)


def _coeff_table(data, where: str) -> dict:
    data = _require_mapping(data, where)
    _reject_unknown(data, ("LC", "SC"), where)
    table = {}
    for state_name in ("LC", "SC"):
        if state_name not in data:
            raise ConfigError(f"{where} missing {state_name} row")
        row = _require_mapping(data[state_name], f"{where}.{state_name}")
        _reject_unknown(row, ("lateral", "longitudinal"), f"{where}.{state_name}")
        for dir_name in ("lateral", "longitudinal"):
            if dir_name not in row:
                raise ConfigError(f"{where}.{state_name} missing {dir_name}")
            table[(ContactState[state_name], Direction[dir_name])] = _number(
                row[dir_name], f"{where}.{state_name}.{dir_name}")
    return table


def _build(section: dict, keys: tuple[str, ...], where: str, ctor, **extra):
    _reject_unknown(section, keys, where)
    kwargs = dict(extra)
    for key in keys:
        if key in section and key not in kwargs:
            kwargs[key] = _number(section[key], f"{where}.{key}")
    try:
        return ctor(**kwargs)
    except (ValueError, GeometryInfeasible) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict) -> Config:
    data = _require_mapping(data, "config")
    _reject_unknown(data, ("geometry", "camera", "friction", "controller", "object", "seed"),
                    "config")
    geometry = _build(_require_mapping(data.get("geometry", {}), "geometry"),
                      _GEOMETRY_KEYS, "geometry", CavsGeometry)

    cam_section = _require_mapping(data.get("camera", {}), "camera")
    _reject_unknown(cam_section, _CAMERA_KEYS, "camera")
    cam_kwargs = {}
    for key in ("focal_px", "noise_std_pct"):
        if key in cam_section:
            cam_kwargs[key] = _number(cam_section[key], f"camera.{key}")
    for key in ("image_width_px", "image_height_px"):
        if key in cam_section:
            val = cam_section[key]
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"camera.{key} must be an integer")
            cam_kwargs[key] = val
    try:
        camera = CameraModel(**cam_kwargs)
    except ValueError as exc:
        raise ConfigError(f"camera: {exc}") from exc

    fric_section = _require_mapping(data.get("friction", {}), "friction")
    _reject_unknown(fric_section, _FRICTION_KEYS, "friction")
    fric_kwargs = {}
    for key in ("d_LC_end", "d_SC_start", "f_local_max", "f_local_min", "kinetic_fraction"):
        if key in fric_section:
            fric_kwargs[key] = _number(fric_section[key], f"friction.{key}")
    if "mu" in fric_section:
        fric_kwargs["mu"] = _coeff_table(fric_section["mu"], "friction.mu")
    if "adhesion" in fric_section:
        fric_kwargs["adhesion"] = _coeff_table(fric_section["adhesion"], "friction.adhesion")
    try:
        friction = FrictionParams(**fric_kwargs)
    except ValueError as exc:
        raise ConfigError(f"friction: {exc}") from exc

    controller = _build(_require_mapping(data.get("controller", {}), "controller"),
                        _CONTROLLER_KEYS, "controller", ControllerConfig)
    obj = _build(_require_mapping(data.get("object", {}), "object"),
                 _OBJECT_KEYS, "object", ObjectModel)

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if seed < 0:
        raise ConfigError("seed must be >= 0")

    if not geometry.d_sc > friction.d_SC_start:
        raise ConfigError(
            f"geometry.d_sc ({geometry.d_sc:g}) must exceed friction.d_SC_start "
            f"({friction.d_SC_start:g}) for the rising press-curve tail")

    return Config(geometry=geometry, camera=camera, friction=friction,
                  controller=controller, object=obj, seed=seed)


def load_config(path: str | Path | None) -> Config:
    """Config from a JSON file; None loads the built-in defaults."""
    if path is None:
        return Config()
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: invalid JSON: {exc}") from exc
    return parse_config(data)


_SCENARIO_KEYS = ("steps", "tick_dt_s", "initial_gap_mm")
_STEP_KEYS = ("name", "target_mode", "duration_s", "disturbance")
_DISTURBANCE_KEYS = ("finger", "kind", "magnitude", "t_offset_s", "duration_s")


@dataclass(frozen=True)
class Scenario:
    steps: tuple[ScenarioStep, ...]
    tick_dt_s: float = 0.1
    initial_gap_mm: float | None = None  # None = object width + 2


def parse_scenario(data: dict) -> Scenario:
    data = _require_mapping(data, "scenario")
    _reject_unknown(data, _SCENARIO_KEYS, "scenario")
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ConfigError("scenario.steps must be a non-empty list")
    steps = []
    for idx, raw in enumerate(raw_steps):
        where = f"scenario.steps[{idx}]"
        raw = _require_mapping(raw, where)
        _reject_unknown(raw, _STEP_KEYS, where)
        name = raw.get("name", f"step {idx + 1}")
        if not isinstance(name, str):
            raise ConfigError(f"{where}.name must be a string")
        mode_name = raw.get("target_mode")
        if mode_name not in ("LC", "SC"):
            raise ConfigError(f"{where}.target_mode must be LC or SC, got {mode_name!r}")
        duration = _number(raw.get("duration_s", 0), f"{where}.duration_s")
        disturbance = None
        if raw.get("disturbance") is not None:
            draw = _require_mapping(raw["disturbance"], f"{where}.disturbance")
            _reject_unknown(draw, _DISTURBANCE_KEYS, f"{where}.disturbance")
            try:
                disturbance = Disturbance(
                    finger=draw.get("finger", ""),
                    kind=draw.get("kind", ""),
                    magnitude=_number(draw.get("magnitude", 0), f"{where}.disturbance.magnitude"),
                    t_offset_s=_number(draw.get("t_offset_s", 0.0),
                                       f"{where}.disturbance.t_offset_s"),
                    duration_s=(None if draw.get("duration_s") is None
                                else _number(draw["duration_s"],
                                             f"{where}.disturbance.duration_s")),
                )
            except ValueError as exc:
                raise ConfigError(f"{where}.disturbance: {exc}") from exc
        try:
            steps.append(ScenarioStep(name=name, target_mode=ContactState[mode_name],
                                      duration_s=duration, disturbance=disturbance))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    tick_dt = _number(data.get("tick_dt_s", 0.1), "scenario.tick_dt_s")
    if not tick_dt > 0:
        raise ConfigError("scenario.tick_dt_s must be positive")
    gap = data.get("initial_gap_mm")
    gap_val = None if gap is None else _number(gap, "scenario.initial_gap_mm")
    if gap_val is not None and gap_val < 0:
        raise ConfigError("scenario.initial_gap_mm must be >= 0")
    return Scenario(steps=tuple(steps), tick_dt_s=tick_dt, initial_gap_mm=gap_val)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path}: invalid JSON: {exc}") from exc
    return parse_scenario(data)
