"""JSON job configuration for ``loopshape simulate``.

A job has five sections: ``design`` (the error compensator G_e), ``plant``,
``loop``, ``signals`` and ``run``.  Documents are validated against
:data:`JOB_SCHEMA` before anything is built; unknown keys are rejected.

Units: design frequencies in cycles/sample, phases in degrees, disturbance
frequency ``omega`` in radians/sample, sample periods in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .glm_design import PolyBasisSpec, SinBasisSpec, design_poly, design_sin, to_highpass
from .loop_sim import GaussianNoise, LoopConfig, PIDGains, SignalSpec, Sinusoid
from .plant_tools import ContinuousTF, lss_design, motor_model, sim_plant_z, zoh_discretize
from .ratfun import RationalTF

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM, "minItems": 1}
_POLE = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}]}

DESIGN_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "basis": {"const": "poly"},
                "K": {"type": "integer", "minimum": 0},
                "m_hat": _NUM,
                "sigma": {"type": "number", "exclusiveMaximum": 0},
                "deriv": {"type": "integer", "minimum": 0},
                "highpass": {"type": "boolean"},
            },
            "required": ["basis", "K", "sigma"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "basis": {"const": "sin"},
                "freqs_cps": _NUMS,
                "gains": _NUMS,
                "phases_deg": _NUMS,
                "sigma": {"type": "number", "exclusiveMaximum": 0},
            },
            "required": ["basis", "freqs_cps", "gains", "sigma"],
            "additionalProperties": False,
        },
    ]
}

JOB_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "loopshape simulation job",
    "type": "object",
    "properties": {
        "design": DESIGN_SCHEMA,
        "plant": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"builtin": {"enum": ["motor", "sim4"]}},
                    "required": ["builtin"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"b": _NUMS, "a": _NUMS, "T": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["b", "a", "T"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"s_num": _NUMS, "s_den": _NUMS,
                                   "T": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["s_num", "s_den", "T"],
                    "additionalProperties": False,
                },
            ]
        },
        "loop": {
            "type": "object",
            "properties": {
                "K_e": _NUM,
                "K_i": _NUM,
                "K_r": _NUM,
                "reference_shaper": DESIGN_SCHEMA,
                "io_delay": {"type": "integer", "minimum": 0},
                "saturation": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "controller": {
                    "oneOf": [
                        {
                            "type": "object",
                            "properties": {"type": {"const": "pid"}, "Kp": _NUM, "Ki": _NUM, "Kd": _NUM},
                            "required": ["type", "Kp", "Ki", "Kd"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {
                                "type": {"const": "lss"},
                                "ctrl_poles": {"type": "array", "items": _POLE, "minItems": 1},
                                "obs_poles": {"type": "array", "items": _POLE, "minItems": 1},
                            },
                            "required": ["type", "ctrl_poles", "obs_poles"],
                            "additionalProperties": False,
                        },
                    ]
                },
            },
            "additionalProperties": False,
        },
        "signals": {
            "type": "object",
            "properties": {
                "reference": {"enum": ["step", "zero", "ramp"]},
                "amplitude": _NUM,
                "start": {"type": "integer", "minimum": 0},
                "disturbance": {
                    "type": "object",
                    "properties": {"amplitude": _NUM, "omega": _NUM, "phase_deg": _NUM},
                    "required": ["amplitude", "omega"],
                    "additionalProperties": False,
                },
                "noise": {
                    "type": "object",
                    "properties": {"mean": _NUM, "variance": {"type": "number", "minimum": 0},
                                   "seed": {"type": "integer"}},
                    "required": ["variance", "seed"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "length": {"type": "integer", "minimum": 64},
                "outputs": {
                    "type": "object",
                    "properties": {
                        "trace": {"type": "string"},
                        "metrics": {"type": "string"},
                        "svg": {"type": "string"},
                    },
                    "additionalProperties": False,
                },
            },
            "required": ["length"],
            "additionalProperties": False,
        },
    },
    "required": ["plant", "run"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """The job document is malformed or inconsistent."""


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, JOB_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid job config at {where}: {exc.message}") from None


def design_from_dict(d: dict, T: Optional[float] = None) -> RationalTF:
    """Build a compensator from a design section (also used by the CLI)."""
    if d["basis"] == "poly":
        spec = PolyBasisSpec(d["K"], d["sigma"], d.get("m_hat", 0.0), d.get("deriv", 0))
        h = design_poly(spec, T).h
        if d.get("highpass"):
            h = to_highpass(h, spec.m_hat)
        return h
    freqs = [2 * math.pi * f for f in d["freqs_cps"]]
    phases = [math.radians(p) for p in d.get("phases_deg", [0.0] * len(freqs))]
    return design_sin(SinBasisSpec(freqs, d["gains"], phases, d["sigma"]), T).h


def plant_from_dict(p: dict) -> RationalTF:
    if "builtin" in p:
        return motor_model() if p["builtin"] == "motor" else sim_plant_z()
    if "b" in p:
        return RationalTF.from_coeffs(p["b"], p["a"], p["T"])
    return zoh_discretize(ContinuousTF.from_coeffs(p["s_num"], p["s_den"]), p["T"])


def _pole(p) -> complex:
    return complex(p[0], p[1]) if isinstance(p, list) else float(p)


@dataclass
class Job:
    config: LoopConfig
    signals: SignalSpec
    length: int
    outputs: dict = field(default_factory=dict)


def build_job(doc: dict) -> Job:
    validate(doc)
    plant = plant_from_dict(doc["plant"])
    T = plant.sample_period or 1.0
    loop = doc.get("loop", {})
    ge = design_from_dict(doc["design"], T) if "design" in doc else None
    gr = design_from_dict(loop["reference_shaper"], T) if "reference_shaper" in loop else None

    controller = None
    ctl = loop.get("controller")
    if ctl and ctl["type"] == "pid":
        controller = PIDGains(ctl["Kp"], ctl["Ki"], ctl["Kd"])
    elif ctl:
        controller = lss_design(plant, [_pole(p) for p in ctl["ctrl_poles"]],
                                [_pole(p) for p in ctl["obs_poles"]])
    if controller is not None and (ge is not None or "K_i" in loop):
        raise ConfigError("a PID/LSS controller replaces design, K_e and K_i; give one or the other")

    sat = loop.get("saturation")
    config = LoopConfig(
        plant,
        K_e=loop.get("K_e", 1.0),
        G_e=ge,
        Ki=loop.get("K_i"),
        G_r=gr,
        K_r=loop.get("K_r", 1.0),
        controller=controller,
        io_delay=loop.get("io_delay", 0),
        saturation=tuple(sat) if sat else None,
        T=T,
    )

    sig = doc.get("signals", {})
    dist = sig.get("disturbance")
    noise = sig.get("noise")
    signals = SignalSpec(
        reference=sig.get("reference", "step"),
        amplitude=sig.get("amplitude", 1.0),
        start=sig.get("start", 0),
        disturbance=Sinusoid(dist["amplitude"], dist["omega"], math.radians(dist.get("phase_deg", 0.0)))
        if dist else None,
        noise=GaussianNoise(noise.get("mean", 0.0), noise["variance"], noise["seed"]) if noise else None,
    )
    run = doc["run"]
    return Job(config, signals, run["length"], dict(run.get("outputs", {})))
