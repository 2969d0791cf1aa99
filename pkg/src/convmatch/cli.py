"""Command-line front end: scenarios, sweeps and one-off analyses.

Usage::

    convmatch simulate SCENARIO.json [--out DIR] [--dt SECONDS]
    convmatch sweep SWEEP.json [--out DIR]
    convmatch analyze {steady-state,droop-coeffs,max-power,lyapunov,manifold} [...]

Scenario files are JSON with the unit spelled out in every field name
(``c_dc_farads``, ``t_end_seconds`` ...); unknown keys are rejected.  A
bare file name that does not exist is looked up among the bundled
scenarios.

Exit codes: 0 success, 2 unreadable/malformed input, 3 invalid
configuration, 4 simulation diverged (the partial trace is still written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import _layout as L
from . import analysis as an
from . import kernel
from .classic_ctrl import (
    DroopParams,
    InnerLoopController,
    OpenLoopModulation,
    PolarVoc,
    SineReference,
    VdpReference,
    VdpVocState,
    inner_gains_from_poles,
)
from .errors import ConfigError, ConvmatchError, DivergenceError
from .matching_ctrl import MatchingController
from .network import NetworkTrace, build_network, simulate_network
from .outer_ctrl import AmpTrackConfig, EtaTrackConfig, IdcPidConfig, ReactiveShapeParams
from .plant import ConverterParams, LoadModel, LoadSegment, PlantState
from .sim import FixedModulation, SimConfig, SimTrace, simulate, steady_from_columns

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_DIVERGED = 4

FLAG_NAMES = {
    L.F_MOD_SAT: "modulation_saturated",
    L.F_MU_CLAMP: "mu_clamped",
    L.F_ETA_HOLD: "eta_held",
    L.F_IDC_CLAMP: "idc_clamped",
    L.F_CTRL_UNDEF: "controller_undefined",
    L.F_OSC_DEGENERATE: "oscillator_degenerate",
    L.F_AMP_CLAMP: "amplitude_clamped",
}

AUX_HEADER = ("t", "i_dc", "mu", "eta", "flags", "energy_supplied")


class InputError(Exception):
    """Unreadable or syntactically broken input (exit code 2)."""


# ---------------------------------------------------------------- field tables

_CONVERTER_FIELDS = {
    "c_dc_farads": "c_dc",
    "g_dc_siemens": "g_dc",
    "i_dc_amperes": "i_dc",
    "r_ohms": "r",
    "l_henries": "l",
    "c_farads": "c",
    "eta_rad_per_volt_second": "eta",
    "mu": "mu",
}
_SIM_FIELDS = {
    "dt_seconds": "dt",
    "t_end_seconds": "t_end",
    "record_every": "record_every",
    "steady_tol": "steady_tol",
    "steady_window_seconds": "steady_window",
}
_INITIAL_FIELDS = {
    "v_dc_volts": "v_dc",
    "i_alpha_amperes": "i_a",
    "i_beta_amperes": "i_b",
    "v_alpha_volts": "v_a",
    "v_beta_volts": "v_b",
    "i_gamma_amperes": "i_gamma",
    "v_gamma_volts": "v_gamma",
}
_LOAD_FIELDS = {
    "t_start_seconds": "t_start",
    "g_siemens": "g",
    "b_siemens": "b",
    "i_const_alpha_amperes": "ica",
    "i_const_beta_amperes": "icb",
}
_AMP_FIELDS = {
    "mode": "mode",
    "il_ref_amperes": "il_ref",
    "v_ref_volts": "v_ref",
    "k_p": "k_p",
    "k_i_per_second": "k_i",
    "k_x_per_second": "k_x",
    "lambda_x_per_second": "lambda_x",
    "lambda0_per_second": "lambda0",
    "k_cp": "k_cp",
    "k_ci_per_second": "k_ci",
}
_PID_FIELDS = {
    "k_p_siemens": "k_p",
    "k_i_siemens_per_second": "k_i",
    "k_d_farads": "k_d",
    "n_filter_per_second": "n_filter",
    "v_dc_ref_volts": "v_dc_ref",
    "bias_amperes": "bias",
}
_ETA_FIELDS = {
    "tau_per_second": "tau",
    "j_extra": "j_extra",
    "omega_ref_rad_per_second": "omega_ref",
    "law": "law",
}
_SHAPE_FIELDS = {"mode": "mode", "base": "base", "gain_per_var": "gain",
                 "q_filter_per_second": "q_filter"}
_DROOP_FIELDS = {
    "omega0_rad_per_second": "omega0",
    "v0_hat_volts": "v0_hat",
    "p0_watts": "p0",
    "q0_var": "q0",
    "n_f_rad_per_second_per_watt": "n_f",
    "n_a_volts_per_var": "n_a",
    "amp_scale": "amp_scale",
    "theta0_rad": "theta0",
}
_SINE_FIELDS = {"omega_rad_per_second": "omega", "amp_volts": "amp", "theta0_rad": "theta0"}
_VDP_FIELDS = {
    "x1a": "x1a", "x2a": "x2a", "x1b": "x1b", "x2b": "x2b",
    "mu_vdp": "mu_vdp", "kappa": "kappa", "omega0_rad_per_second": "omega0",
}
_OPEN_LOOP_FIELDS = {
    "omega_ref_rad_per_second": "omega_ref",
    "m_ref": "m_ref",
    "lambda_m_per_second": "lambda_m",
    "scale": "scale",
    "capacitor_feedback": "capacitor_feedback",
    "v_dc_ref_volts": "v_dc_ref",
    "v_m0": "v_m0",
    "theta0_rad": "theta0",
}


def _pick(d: Any, table: dict, where: str, extra: tuple = ()) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - set(table) - set(extra)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = {}
    for key, attr in table.items():
        if key in d:
            v = d[key]
            if isinstance(v, bool) or isinstance(v, str) or v is None:
                out[attr] = v
            elif isinstance(v, (int, float)):
                if not math.isfinite(v):
                    raise ConfigError(f"{where}.{key} must be finite")
                out[attr] = v
            else:
                raise ConfigError(f"{where}.{key}: expected a number")
    return out


# ---------------------------------------------------------------- scenario model


@dataclass
class Scenario:
    name: str
    params: ConverterParams
    controller: Any
    load: LoadModel
    sim: SimConfig
    initial: PlantState = field(default_factory=PlantState)
    controller_spec: dict = field(default_factory=dict)
    network: Optional[dict] = None
    raw: dict = field(default_factory=dict)


def parse_converter(d) -> ConverterParams:
    return ConverterParams(**_pick(d or {}, _CONVERTER_FIELDS, "converter"))


def parse_load(rows) -> LoadModel:
    if not isinstance(rows, list) or not rows:
        raise ConfigError("load: expected a non-empty list of segments")
    segs = []
    for k, r in enumerate(rows):
        f = _pick(r, _LOAD_FIELDS, f"load[{k}]")
        segs.append(LoadSegment(
            float(f.get("t_start", 0.0)), float(f.get("g", 0.0)), float(f.get("b", 0.0)),
            (float(f.get("ica", 0.0)), float(f.get("icb", 0.0))),
        ))
    return LoadModel(tuple(segs))


def parse_sim(d, dt_override: Optional[float] = None) -> SimConfig:
    f = _pick(d or {}, _SIM_FIELDS, "sim")
    if dt_override is not None:
        f["dt"] = dt_override
    if "record_every" in f:
        f["record_every"] = int(f["record_every"])
    return SimConfig(**f)


def parse_initial(d) -> PlantState:
    f = _pick(d or {}, _INITIAL_FIELDS, "initial")
    return PlantState(
        v_dc=float(f.get("v_dc", 0.0)),
        i_ab=(float(f.get("i_a", 0.0)), float(f.get("i_b", 0.0))),
        v_ab=(float(f.get("v_a", 0.0)), float(f.get("v_b", 0.0))),
        i_gamma=float(f.get("i_gamma", 0.0)),
        v_gamma=float(f.get("v_gamma", 0.0)),
    )


def _parse_reference(d):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("inner_loop.reference needs a 'type'")
    kind = d["type"]
    body = {k: v for k, v in d.items() if k != "type"}
    if kind == "sine":
        return SineReference(**_pick(body, _SINE_FIELDS, "reference"))
    if kind == "droop":
        return DroopParams(**_pick(body, _DROOP_FIELDS, "reference"))
    if kind == "polar_voc":
        f = _pick(body, _DROOP_FIELDS, "reference", extra=("lambda_osc_per_second",))
        lam = body.get("lambda_osc_per_second", 100.0)
        return PolarVoc(DroopParams(**f), float(lam))
    if kind == "vdp_voc":
        f = _pick(body, _VDP_FIELDS, "reference", extra=("v_ref_amp_volts", "amp_scale"))
        return VdpReference(
            VdpVocState(**f),
            float(body.get("v_ref_amp_volts", 165.0)),
            float(body.get("amp_scale", math.sqrt(1.5))),
        )
    raise ConfigError(f"unknown reference type {kind!r}")


def parse_controller(d, p: ConverterParams):
    if d is None:
        d = {"type": "matching"}
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("controller needs a 'type'")
    kind = d["type"]
    body = {k: v for k, v in d.items() if k != "type"}
    if kind == "matching":
        allowed = ("theta0_rad", "amp_tracking", "idc_pid", "eta_tracking", "reactive_shaping")
        unknown = set(body) - set(allowed)
        if unknown:
            raise ConfigError(f"controller: unknown field(s) {sorted(unknown)}")
        amp = body.get("amp_tracking")
        pid = body.get("idc_pid")
        eta = body.get("eta_tracking")
        shape = body.get("reactive_shaping")
        return MatchingController(
            theta0=float(body.get("theta0_rad", 0.0)),
            amp=None if amp is None else AmpTrackConfig(**_pick(amp, _AMP_FIELDS, "amp_tracking")),
            pid=None if pid is None else IdcPidConfig(**_pick(pid, _PID_FIELDS, "idc_pid")),
            eta=None if eta is None else EtaTrackConfig(**_pick(eta, _ETA_FIELDS, "eta_tracking")),
            shape=None if shape is None else ReactiveShapeParams(
                **_pick(shape, _SHAPE_FIELDS, "reactive_shaping")),
        )
    if kind in ("inner_loop", "droop", "polar_voc", "vdp_voc"):
        lam0 = float(body.pop("lambda0_per_second", -5e4))
        laml = float(body.pop("lambda_l_per_second", -5e5))
        gains = inner_gains_from_poles(lam0, laml, p)
        if kind == "inner_loop":
            ref = body.pop("reference", {"type": "sine"})
            if body:
                raise ConfigError(f"controller: unknown field(s) {sorted(body)}")
            return InnerLoopController(gains, _parse_reference(ref))
        return InnerLoopController(gains, _parse_reference({"type": kind, **body}))
    if kind == "open_loop":
        return OpenLoopModulation(**_pick(body, _OPEN_LOOP_FIELDS, "controller"))
    if kind == "fixed":
        f = _pick(body, {"m_alpha": "ma", "m_beta": "mb"}, "controller")
        return FixedModulation((float(f.get("ma", 0.0)), float(f.get("mb", 0.0))))
    raise ConfigError(f"unknown controller type {kind!r}")


_TOP_KEYS = {"name", "description", "converter", "converters", "controller", "load",
             "sim", "initial", "network"}


def parse_scenario(d: dict, dt_override: Optional[float] = None) -> Scenario:
    if not isinstance(d, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"scenario: unknown field(s) {sorted(unknown)}")
    name = str(d.get("name", "scenario"))
    sim = parse_sim(d.get("sim"), dt_override)
    if d.get("network") is not None:
        convs = d.get("converters")
        if not isinstance(convs, list) or len(convs) != 2:
            raise ConfigError("network scenarios need 'converters' with two entries")
        ctrl = d.get("controller")
        if ctrl is not None and ctrl.get("type") != "matching":
            raise ConfigError("network converters run matching control only")
        params = [parse_converter(c) for c in convs]
        net = parse_network_spec(d["network"], params)
        build_network(net)
        return Scenario(name, params[0], None, LoadModel.constant(), sim,
                        network=net, raw=d)
    p = parse_converter(d.get("converter"))
    ctrl = parse_controller(d.get("controller"), p)
    load = parse_load(d.get("load", [{"t_start_seconds": 0.0}]))
    init = parse_initial(d.get("initial"))
    for seg in load.schedule:
        sim.grid_index(seg.t_start)
    return Scenario(name, p, ctrl, load, sim, init, d.get("controller") or {"type": "matching"},
                    raw=d)


_NET_FIELDS = {
    "topology": "topology",
    "r_net_ohms": "r_net",
    "l_net_henries": "l_net",
    "r_load_ohms": "r_load",
    "v_dc0_volts": "v_dc0",
}


def parse_network_spec(d, params) -> dict:
    f = _pick(d, _NET_FIELDS, "network", extra=("loads", "theta0_rad", "enabled"))
    cfg = dict(f)
    cfg["converters"] = params
    if "loads" in d:
        loads = d["loads"]
        if not isinstance(loads, list) or len(loads) != 2:
            raise ConfigError("network.loads: expected two segment lists")
        cfg["loads"] = [parse_load(rows) for rows in loads]
    if "theta0_rad" in d:
        cfg["theta0"] = tuple(float(v) for v in d["theta0_rad"])
    if "enabled" in d:
        cfg["enabled"] = tuple(bool(v) for v in d["enabled"])
    return cfg


def load_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        name = path.name if path.suffix == ".json" else path.name + ".json"
        bundled = resources.files("convmatch") / "scenarios" / name
        if path.parent == Path(".") and bundled.is_file():
            text = bundled.read_text(encoding="utf-8")
        else:
            raise InputError(f"{path}: no such file")
    except OSError as exc:
        raise InputError(f"{path}: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")


def bundled_scenarios() -> list[str]:
    root = resources.files("convmatch") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


# ---------------------------------------------------------------- summaries


def flag_names(flags: int) -> list[str]:
    return [name for bit, name in FLAG_NAMES.items() if flags & bit]


def _aux_columns(trace: SimTrace) -> dict:
    return {
        "t": trace.t,
        "i_dc": trace.i_dc,
        "mu": trace.mu,
        "eta": trace.eta,
        "flags": trace.sample_flags,
        "energy_supplied": trace.energy_supplied,
    }


def write_columns(path, cols: dict, header) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        n = len(cols[header[0]])
        for k in range(n):
            w.writerow([str(int(cols[h][k])) if h in ("event", "flags") else repr(float(cols[h][k]))
                        for h in header])


def read_columns(path) -> dict:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    arr = np.array(rows) if rows else np.zeros((0, len(header)))
    return {h: arr[:, k] for k, h in enumerate(header)}


def _segments(cols: dict) -> list[tuple[float, float]]:
    t = cols["t"]
    starts = [0.0] + [float(t[k]) for k in np.flatnonzero(np.asarray(cols["event"]) > 0)]
    ends = starts[1:] + [float(t[-1])]
    return list(zip(starts, ends))


def droop_conformity(cols: dict, droop: DroopParams, settle_fraction: float = 0.3) -> dict:
    """How well settled (P, omega) and (Q, v) points sit on the droop lines.

    For each load segment the last ``settle_fraction`` of the segment is
    averaged.  The frequency residual is normalised by the largest
    commanded deviation from the nominal frequency, so 0.01 means 1% of the
    droop excursion.  The amplitude residual is relative to the line value:
    resistive load steps barely move Q, so an excursion-based scale would
    be close to zero.
    """
    t = cols["t"]
    pts = []
    for a, b in _segments(cols):
        sel = (t >= b - settle_fraction * (b - a)) & (t <= b)
        if sel.sum() < 3:
            continue
        p = float(np.mean(cols["P_load"][sel]))
        q = float(np.mean(cols["Q_load"][sel]))
        w = float(np.nanmean(cols["omega_est"][sel]))
        v = float(np.mean(cols["amp_v"][sel]))
        pts.append((p, q, w, v, droop.frequency(p), droop.amp_scale * droop.amplitude(q)))
    if not pts:
        return {"segments": 0}
    dev_w = max(max(abs(x[4] - droop.omega0) for x in pts), 1e-12)
    return {
        "segments": len(pts),
        "points": [dict(zip(("p_load", "q_load", "omega", "amp_v", "omega_line", "amp_line"), x))
                   for x in pts],
        "frequency_residual": max(abs(x[2] - x[4]) for x in pts) / dev_w,
        "amplitude_residual": max(abs(x[3] - x[5]) / max(abs(x[5]), 1e-12) for x in pts),
    }


def _droop_of(controller) -> Optional[DroopParams]:
    if isinstance(controller, InnerLoopController):
        ref = controller.reference
        if isinstance(ref, DroopParams):
            return ref
        if isinstance(ref, PolarVoc):
            return ref.droop
    return None


def summarize_columns(scn: Scenario, cols: dict, aux: dict) -> dict:
    """Summary derived from exported columns only (trace CSV + aux CSV + config)."""
    p = scn.params
    out: dict = {"n_samples": int(len(cols["t"])), "t_end": float(cols["t"][-1])}
    st = steady_from_columns(cols, scn.sim)
    tail = cols["t"] >= cols["t"][-1] - scn.sim.steady_window - 1e-9 * scn.sim.dt
    if st is None:
        out["settle_time"] = None
        out["steady"] = None
    else:
        out["settle_time"] = st[0]
        out["steady"] = st[1]
    w_tail = cols["omega_est"][tail]
    out["final"] = {
        "v_dc": float(np.mean(cols["v_dc"][tail])),
        "omega": float(np.nanmean(w_tail)) if not np.all(np.isnan(w_tail)) else None,
        "amp_vx": float(np.mean(cols["amp_vx"][tail])),
        "amp_v": float(np.mean(cols["amp_v"][tail])),
        "amp_il": float(np.mean(cols["amp_il"][tail])),
        "p_x": float(np.mean(cols["P_x"][tail])),
        "q_x": float(np.mean(cols["Q_x"][tail])),
    }
    if out["final"]["omega"] is not None:
        out["final"]["frequency_hz"] = out["final"]["omega"] / (2 * math.pi)
    storage = 0.5 * (p.c_dc * cols["v_dc"] ** 2
                     + p.l * (cols["i_alpha"] ** 2 + cols["i_beta"] ** 2)
                     + p.c * (cols["v_alpha"] ** 2 + cols["v_beta"] ** 2))
    viol = an.storage_violation(storage, aux["energy_supplied"])
    tol = 1e-6 * float(np.max(storage))
    out["passivity"] = {"violation_j": viol, "tolerance_j": tol, "passed": bool(viol <= tol)}
    flags = 0
    for f in aux["flags"]:
        flags |= int(f)
    out["flags"] = flag_names(flags)
    if isinstance(scn.controller, MatchingController) and scn.controller.pid is None \
            and scn.controller.eta is None and scn.controller.amp is None \
            and scn.controller.shape is None:
        try:
            prof = an.steady_state_profile(p, out["final"]["p_x"])
            out["analytic"] = {"v_dc": prof.v_dc_ss, "amp_vx": prof.vx_amp, "omega": prof.omega}
        except ConvmatchError as exc:
            out["analytic"] = {"error": str(exc)}
    droop = _droop_of(scn.controller)
    if droop is not None:
        out["droop_conformity"] = droop_conformity(cols, droop)
    return out


def summarize_network(trace: NetworkTrace, sim: SimConfig) -> dict:
    out: dict = {"n_samples": int(len(trace.t)), "t_end": float(trace.t[-1])}
    freqs = {}
    for k in (1, 2):
        if trace.params.enabled[k - 1]:
            try:
                freqs[f"bus{k}"] = trace.steady_frequency(k)
            except ConvmatchError:
                freqs[f"bus{k}"] = None
    out["omega"] = freqs
    vals = [v for v in freqs.values() if v is not None]
    if len(vals) == 2:
        out["frequency_mismatch_rel"] = abs(vals[0] - vals[1]) / abs(vals[0])
    s = trace.storage()
    viol = trace.passivity_violation()
    tol = 1e-6 * float(np.max(s))
    out["passivity"] = {"violation_j": viol, "tolerance_j": tol, "passed": bool(viol <= tol)}
    out["power"] = trace.power_bookkeeping()
    return out


# ---------------------------------------------------------------- runners


def _controller_label(scn: Scenario) -> str:
    if scn.network is not None:
        return "matching"
    return str(scn.controller_spec.get("type", "matching"))


def run_scenario(scn: Scenario, out_dir: Path, seed: Optional[int] = None) -> tuple[int, dict]:
    """Simulate, write ``trace.csv``/``aux.csv``/``summary.json``; return (exit code, summary)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"name": scn.name, "controller": _controller_label(scn), "backend": kernel.BACKEND,
               "seed": seed, "dt": scn.sim.dt}
    code = EXIT_OK
    if scn.network is not None:
        params, state = build_network(scn.network)
        try:
            tr = simulate_network(params, state, scn.sim)
            summary["status"] = "ok"
        except DivergenceError as exc:
            tr = exc.trace
            summary["status"] = "diverged"
            summary["diverged_at"] = exc.last_valid_time
            code = EXIT_DIVERGED
        tr.to_csv(out_dir / "trace.csv")
        summary["topology"] = params.topology
        if code == EXIT_OK:
            summary.update(summarize_network(tr, scn.sim))
        summary["files"] = {"trace": "trace.csv"}
    else:
        try:
            tr = simulate(scn.params, scn.controller, scn.load, scn.sim, scn.initial)
            summary["status"] = "ok"
        except DivergenceError as exc:
            tr = exc.trace
            summary["status"] = "diverged"
            summary["diverged_at"] = exc.last_valid_time
            code = EXIT_DIVERGED
        cols = tr.columns()
        aux = _aux_columns(tr)
        tr.to_csv(out_dir / "trace.csv")
        write_columns(out_dir / "aux.csv", aux, AUX_HEADER)
        if code == EXIT_OK and len(tr.t) >= 3:
            summary.update(summarize_columns(scn, cols, aux))
        summary["files"] = {"trace": "trace.csv", "aux": "aux.csv"}
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)
    return code, summary


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def set_path(d: dict, path: str, value) -> dict:
    """Copy of ``d`` with the dotted ``path`` (list indices allowed) set to ``value``."""
    out = copy.deepcopy(d)
    keys = path.split(".")
    cur: Any = out
    for k in keys[:-1]:
        try:
            cur = cur[int(k)] if isinstance(cur, list) else cur[k]
        except (KeyError, IndexError, ValueError, TypeError):
            raise ConfigError(f"parameter path {path!r} does not resolve")
    last = keys[-1]
    if isinstance(cur, list):
        try:
            cur[int(last)] = value
        except (IndexError, ValueError):
            raise ConfigError(f"parameter path {path!r} does not resolve")
    elif isinstance(cur, dict):
        cur[last] = value
    else:
        raise ConfigError(f"parameter path {path!r} does not resolve")
    return out


@dataclass
class SweepSpec:
    name: str
    template: dict
    parameter: str
    values: list
    workers: int = 1


def parse_sweep(d: dict) -> SweepSpec:
    if not isinstance(d, dict):
        raise ConfigError("sweep must be a JSON object")
    unknown = set(d) - {"name", "description", "template", "parameter", "values", "workers"}
    if unknown:
        raise ConfigError(f"sweep: unknown field(s) {sorted(unknown)}")
    for k in ("template", "parameter", "values"):
        if k not in d:
            raise ConfigError(f"sweep: missing {k!r}")
    vals = d["values"]
    if not isinstance(vals, list) or not vals:
        raise ConfigError("sweep: values must be a non-empty list")
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError("sweep: values must be finite numbers")
    spec = SweepSpec(str(d.get("name", "sweep")), d["template"], str(d["parameter"]),
                     [float(v) for v in vals], int(d.get("workers", 1)))
    # resolve once so a bad path fails before any simulation
    parse_scenario(set_path(spec.template, spec.parameter, spec.values[0]))
    return spec


SWEEP_SIM_COLUMNS = ("v_dc", "omega", "amp_vx", "amp_v", "amp_il", "p_x", "q_x", "p_load", "q_load")
SWEEP_ANALYTIC_COLUMNS = ("v_dc_analytic", "amp_vx_analytic", "omega_analytic", "p_max_analytic",
                          "eq_v_dc", "eq_amp_il", "b_analytic")


def sweep_point(template: dict, parameter: str, value: float, dt: Optional[float]) -> dict:
    row: dict = {"value": value}
    scn = parse_scenario(set_path(template, parameter, value), dt)
    try:
        tr = simulate(scn.params, scn.controller, scn.load, scn.sim, scn.initial)
    except DivergenceError as exc:
        row["status"] = f"diverged at t={exc.last_valid_time:.6g}"
        return row
    cols = tr.columns()
    st = steady_from_columns(cols, scn.sim)
    tail = tr.window(tr.t[-1] - scn.sim.steady_window)
    row["status"] = "settled" if st is not None else "unsettled"
    w = tr.omega_est[tail]
    row.update(
        v_dc=float(np.mean(tr.v_dc[tail])),
        omega=float(np.nanmean(w)) if not np.all(np.isnan(w)) else float("nan"),
        amp_vx=float(np.mean(tr.amp_vx[tail])),
        amp_v=float(np.mean(tr.amp_v[tail])),
        amp_il=float(np.mean(tr.amp_il[tail])),
        p_x=float(np.mean(tr.p_x[tail])),
        q_x=float(np.mean(tr.q_x[tail])),
        p_load=float(np.mean(tr.p_load[tail])),
        q_load=float(np.mean(tr.q_load[tail])),
    )
    p = scn.params
    row["p_max_analytic"] = an.max_power(p).p_max
    try:
        prof = an.steady_state_profile(p, row["p_x"])
        row.update(v_dc_analytic=prof.v_dc_ss, amp_vx_analytic=prof.vx_amp,
                   omega_analytic=prof.omega)
    except ConvmatchError:
        pass
    seg = scn.load.schedule[-1]
    plain = isinstance(scn.controller, MatchingController) and scn.controller == MatchingController(
        theta0=scn.controller.theta0)
    if plain and seg.g > 0:
        try:
            eq = an.dq_equilibrium(p, seg.g, seg.b)
            row.update(eq_v_dc=eq.v_dc_s, eq_amp_il=eq.il_amp)
        except ConvmatchError:
            pass
    if plain and seg.g == 0 and seg.b != 0 and math.isfinite(row["omega"]):
        b_cri = an.critical_susceptance(p, row["omega"])
        branch = "over" if seg.b > b_cri else "under"
        try:
            row["b_analytic"] = an.reactive_characteristic_b(p, row["amp_il"], row["omega"], branch)
        except ConvmatchError:
            pass
    return row


def run_sweep(spec: SweepSpec, out_dir: Path, dt: Optional[float] = None) -> list[dict]:
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(v):
        try:
            return sweep_point(spec.template, spec.parameter, v, dt)
        except ConvmatchError as exc:
            return {"value": v, "status": f"error: {exc}"}

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as ex:
            rows = list(ex.map(one, spec.values))
    else:
        rows = [one(v) for v in spec.values]
    header = ("value", "status") + SWEEP_SIM_COLUMNS + SWEEP_ANALYTIC_COLUMNS
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow((spec.parameter,) + header[1:])
        for r in rows:
            w.writerow([r.get("status", "") if h == "status" else repr(float(r.get(h, float("nan"))))
                        for h in header])
    with open(out_dir / "sweep.json", "w", encoding="utf-8") as fh:
        json.dump(_clean({"name": spec.name, "parameter": spec.parameter, "rows": rows}),
                  fh, indent=2, sort_keys=True)
    return rows


# ---------------------------------------------------------------- analyze


def _analyze(args) -> dict:
    p = parse_converter(load_json(args.converter).get("converter", {})) if args.converter \
        else ConverterParams()
    op = args.op
    if op == "steady-state":
        res = an.steady_state_profile(p, args.p_x, args.branch)
        return an.to_record("steady_state_profile", {"p_x": args.p_x, "branch": args.branch}, res)
    if op == "droop-coeffs":
        prof = an.steady_state_profile(p, args.p_x)
        d_vx, d_w = an.droop_coefficients(p, prof)
        return an.to_record("droop_coefficients", {"p_x": args.p_x},
                            {"d_vx": d_vx, "d_omega": d_w, "at": prof.__dict__})
    if op == "max-power":
        return an.to_record("max_power", {}, an.max_power(p))
    if op == "lyapunov":
        eq = an.dq_equilibrium(p, args.g, args.b)
        rep = an.lyapunov_condition(p, eq, args.g)
        return an.to_record("lyapunov_condition", {"g": args.g, "b": args.b}, {
            "condition_lhs": rep.condition_lhs, "condition_rhs": rep.condition_rhs,
            "holds": rep.holds, "eigenvalues": rep.eigenvalues,
            "negative_definite": rep.negative_definite,
            "equilibrium": {"v_dc": eq.v_dc_s, "i_dq": eq.i_dq_s, "v_dq": eq.v_dq_s,
                            "omega": eq.omega_s, "residual": eq.residual},
        })
    if op == "manifold":
        w = args.omega if args.omega is not None else (
            an.dq_equilibrium(p, args.g, args.b).omega_s if args.g > 0 else p.eta * p.v_dc_open)
        rep = an.internal_model_manifold(p, args.g, args.b, w)
        return an.to_record("internal_model_manifold", {"g": args.g, "b": args.b, "omega_s": w}, {
            "f": rep.f, "residual": rep.residual, "a_hurwitz": rep.a_hurwitz,
            "spectral_abscissa": rep.spectral_abscissa,
        })
    raise ConfigError(f"unknown analysis {op!r}")


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convmatch", description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="output directory (default: ./out)")
    ap.add_argument("--dt", type=float, default=None, help="override the integration step")
    ap.add_argument("--seed", type=int, default=None,
                    help="reserved; simulations are deterministic and ignore it")
    sub = ap.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("config")
    w = sub.add_parser("sweep", help="run a parameter sweep")
    w.add_argument("config")
    sub.add_parser("list", help="list bundled scenarios")
    a = sub.add_parser("analyze", help="closed-form analyses")
    a.add_argument("op", choices=["steady-state", "droop-coeffs", "max-power", "lyapunov", "manifold"])
    a.add_argument("--converter", help="JSON file with a 'converter' block (default: reference design)")
    a.add_argument("--p-x", dest="p_x", type=float, default=0.0, help="active power in W")
    a.add_argument("--branch", choices=["stable", "unstable"], default="stable")
    a.add_argument("--g", type=float, default=0.3, help="load conductance in S")
    a.add_argument("--b", type=float, default=0.0, help="load susceptance in S")
    a.add_argument("--omega", type=float, default=None, help="synchronous frequency in rad/s")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    out = Path(args.out or "out")
    try:
        if args.cmd == "list":
            print("\n".join(bundled_scenarios()))
            return EXIT_OK
        if args.cmd == "simulate":
            scn = parse_scenario(load_json(args.config), args.dt)
            code, summary = run_scenario(scn, out, args.seed)
            print(json.dumps(_clean(summary), indent=2, sort_keys=True))
            if code == EXIT_DIVERGED:
                print(f"diverged at t={summary.get('diverged_at')}", file=sys.stderr)
            return code
        if args.cmd == "sweep":
            spec = parse_sweep(load_json(args.config))
            rows = run_sweep(spec, out, args.dt)
            print(f"{len(rows)} points written to {out / 'sweep.csv'}")
            return EXIT_OK
        if args.cmd == "analyze":
            rec = _analyze(args)
            text = an.dumps_record(rec)
            print(text)
            if args.out is not None:
                out.mkdir(parents=True, exist_ok=True)
                (out / f"analysis_{args.op}.json").write_text(text + "\n", encoding="utf-8")
            return EXIT_OK
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ConfigError, TypeError, ConvmatchError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
