"""Parameter file handling and the solved-design bundle.

The parameter file is a flat JSON document of dotted keys with decimal SI
values, e.g. ``"fefet.i0": 1e-7`` (amперes), ``"row.c_o": 2.5e-15`` (farads).
Unknown keys are rejected so typos in overrides fail loudly.  The shipped
default file is a calibration product committed with the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .device import DeviceParams

SCHEMA_VERSION = 1

_DEVICE_KEYS = (
    "i0",
    "wl_ratio",
    "n_slope",
    "kappa_t",
    "i0_t_exponent",
    "lambda",
    "leakage_floor",
)

KNOWN_KEYS = frozenset(
    ["schema_version"]
    + [f"fefet.{k}" for k in _DEVICE_KEYS]
    + ["fefet.vth_low", "fefet.vth_high"]
    + [f"m1.{k}" for k in _DEVICE_KEYS]
    + ["m1.vth"]
    + [f"m2.{k}" for k in _DEVICE_KEYS]
    + ["m2.vth"]
    + [
        "bias.v_bl",
        "bias.v_sl",
        "bias.v_wl_on",
        "baseline.r_load",
        "baseline.v_read_subthreshold",
        "baseline.v_read_saturation",
        "row.n_cells",
        "row.c_o",
        "row.c_acc",
        "row.t_read",
        "energy.c_wordline",
        "mc.sigma_vth",
        "mc.runs",
        "sweep.t_min",
        "sweep.t_max",
        "sweep.t_step",
        "sweep.t_ref",
    ]
)


class UnknownParameterError(KeyError):
    """A parameter key not present in the documented schema."""


def load_param_file(path: str | Path) -> dict:
    """Load a flat parameter file, validating keys against the schema."""
    with open(path) as fh:
        raw = json.load(fh)
    return validate_params(raw)


def validate_params(raw: dict) -> dict:
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise UnknownParameterError(f"unknown parameter keys: {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if int(version) != SCHEMA_VERSION:
        raise ValueError(f"unsupported parameter schema version {version}")
    return dict(raw)


def default_params() -> dict:
    """The committed, calibrated default parameter set."""
    text = resources.files("fecim.data").joinpath("default_params.json").read_text()
    return validate_params(json.loads(text))


def save_param_file(params: dict, path: str | Path) -> None:
    ordered = {k: params[k] for k in sorted(params, key=_key_order)}
    with open(path, "w") as fh:
        json.dump(ordered, fh, indent=2)
        fh.write("\n")


def _key_order(key: str):
    # schema_version first, then groups in file-schema order.
    groups = ["fefet", "m1", "m2", "bias", "baseline", "row", "energy", "mc", "sweep"]
    if key == "schema_version":
        return (0, 0, key)
    head = key.split(".", 1)[0]
    return (1, groups.index(head) if head in groups else len(groups), key)


def apply_overrides(params: dict, overrides: dict) -> dict:
    """Apply per-key overrides (already-parsed values); rejects unknown keys."""
    merged = dict(params)
    for key, value in overrides.items():
        if key not in KNOWN_KEYS:
            raise UnknownParameterError(f"unknown parameter key: {key}")
        merged[key] = value
    return merged


def _device_from(params: dict, prefix: str, vth_low_key: str, vth_high_key: str | None) -> DeviceParams:
    get = lambda k: params[f"{prefix}.{k}"]
    return DeviceParams(
        i0=get("i0"),
        wl_ratio=get("wl_ratio"),
        n_slope=get("n_slope"),
        vth_ref=params[vth_low_key],
        kappa_t=get("kappa_t"),
        i0_t_exponent=get("i0_t_exponent"),
        lambda_=get("lambda"),
        vth_ref_high=params[vth_high_key] if vth_high_key else None,
        leakage_floor=get("leakage_floor"),
    )


@dataclass(frozen=True)
class Design:
    """A fully-specified cell/array design: devices, biases and geometry."""

    fefet: DeviceParams
    m1: DeviceParams
    m2: DeviceParams
    v_bl: float
    v_sl: float
    v_wl_on: float
    r_load: float
    v_read_subthreshold: float
    v_read_saturation: float
    n_cells: int
    c_o: float
    c_acc: float
    t_read: float
    c_wordline: float
    mc_sigma: float
    mc_runs: int
    sweep: tuple = (0.0, 85.0, 5.0, 27.0)  # (t_min, t_max, t_step, t_ref) degC

    @classmethod
    def from_params(cls, params: dict) -> "Design":
        return cls(
            fefet=_device_from(params, "fefet", "fefet.vth_low", "fefet.vth_high"),
            m1=_device_from(params, "m1", "m1.vth", None),
            m2=_device_from(params, "m2", "m2.vth", None),
            v_bl=params["bias.v_bl"],
            v_sl=params["bias.v_sl"],
            v_wl_on=params["bias.v_wl_on"],
            r_load=params["baseline.r_load"],
            v_read_subthreshold=params["baseline.v_read_subthreshold"],
            v_read_saturation=params["baseline.v_read_saturation"],
            n_cells=int(params["row.n_cells"]),
            c_o=params["row.c_o"],
            c_acc=params["row.c_acc"],
            t_read=params["row.t_read"],
            c_wordline=params["energy.c_wordline"],
            mc_sigma=params["mc.sigma_vth"],
            mc_runs=int(params["mc.runs"]),
            sweep=(
                params["sweep.t_min"],
                params["sweep.t_max"],
                params["sweep.t_step"],
                params["sweep.t_ref"],
            ),
        )


def default_design() -> Design:
    return Design.from_params(default_params())
