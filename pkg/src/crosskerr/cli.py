"""Batch front-end: ``crosskerr run <config> [--override key=value]... [--workers N] [--out DIR] [--plot]``.

Configs are INI documents with a ``[run]`` section naming the experiment
and seed, a ``[device]`` section and one section per experiment. Keys of
physical quantities carry their unit (``_MHz``, ``_kHz``, ``_us``, ``_GHz``).
Exit codes: 1 configuration error, 2 numerical failure, 3 too many
unassigned Floquet points.
"""
from __future__ import annotations

import argparse
import ast
import configparser
import csv
import json
import logging
import math
import operator
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger("crosskerr")

ENV_WORKERS = "CROSSKERR_WORKERS"
EXIT_CONFIG, EXIT_NUMERIC, EXIT_FLAGGED = 1, 2, 3

REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class FlaggedPointsError(RuntimeError):
    pass


# ------------------------------------------------------------------- values

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text: str) -> float:
    """Float from a literal or a small arithmetic expression in ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(text)

    return float(ev(ast.parse(text.strip(), mode="eval")))


def _int(text: str) -> int:
    v = parse_number(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"{t!r} not in {options}")
        return t

    return parse


def _str(text: str) -> str:
    return text.strip()


_COHERENCE = _choice("none", "idle", "driven", "driven-ramsey")

_DEVICE_FIELDS = {
    "omega_a_MHz": "omega_a", "omega_b_MHz": "omega_b", "omega_c_MHz": "omega_c",
    "K_a_MHz": "K_a", "K_b_MHz": "K_b", "alpha_c_MHz": "alpha_c",
    "chi_a_MHz": "chi_a", "chi_b_MHz": "chi_b", "K_ab_MHz": "K_ab",
    "EJ1_GHz": "EJ1", "EJ2_GHz": "EJ2", "EC_GHz": "EC", "flux_Phi0": "flux",
    "g_ac_MHz": "g_ac", "g_bc_MHz": "g_bc",
}

SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"experiment": (_str, REQUIRED), "seed": (_int, None)},
    "device": {
        "preset": (_str, REQUIRED),
        "dephasing": (_choice("coherence", "rate"), "coherence"),
        **{k: (parse_number, None) for k in _DEVICE_FIELDS},
    },
    "chevron": {
        "g1_MHz": (parse_number, REQUIRED),
        "delta_min_MHz": (parse_number, REQUIRED),
        "delta_max_MHz": (parse_number, REQUIRED),
        "delta_points": (_int, REQUIRED),
        "t_max_us": (parse_number, REQUIRED),
        "t_points": (_int, REQUIRED),
        "coherence": (_COHERENCE, "driven"),
    },
    "sweep": {
        "xi": (parse_number, REQUIRED),
        "delta_min_MHz": (parse_number, REQUIRED),
        "delta_max_MHz": (parse_number, REQUIRED),
        "delta_points": (_int, REQUIRED),
        "cavity_dim": (_int, 4),
        "coupler_dim": (_int, 12),
        "tol": (parse_number, 1e-4),
        "max_flagged_fraction": (parse_number, 0.25),
    },
    "ramsey": {
        "model": (_choice("effective", "floquet"), "effective"),
        "g_ab_kHz": (parse_number, None),
        "t_max_us": (parse_number, None),
        "xi": (parse_number, None),
        "delta_MHz": (parse_number, None),
        "periods_max": (_int, None),
        "points": (_int, 41),
        "dim": (_int, 3),
    },
    "gate": {
        "g_ab_kHz": (parse_number, None),
        "target_phase": (parse_number, math.pi),
        "n_a": (_int, 1),
        "n_b": (_int, 1),
        "dim": (_int, 3),
        "coherence": (_COHERENCE, "none"),
        "idle_coherence": (_COHERENCE, "idle"),
        "state": (_choice("++", "+0", "1+"), "++"),
        "n_gates": (_int, 6),
    },
    "tomography": {
        "encoding": (_choice("0/1", "0/2"), REQUIRED),
        "states": (_int, 20),
        "shots": (_int, 500),
        "pairs": (_int, None),
        "confusion": (_choice("measured", "none"), "measured"),
        "samples": (_int, 1024),
        "thinning": (_int, 128),
    },
    "parity": {
        "T1_us": (parse_number, REQUIRED),
        "delay_max_us": (parse_number, REQUIRED),
        "points": (_int, 41),
        "readout": (_choice("ideal", "snap"), "ideal"),
        "confusion": (_choice("none", "bob"), "none"),
    },
    "budget": {
        "states": (_str, "++,+0,1+"),
        "g_ab_kHz": (parse_number, None),
        "delta_MHz": (parse_number, -6.0),
        "ramp_us": (parse_number, 0.2),
        "prep_us": (parse_number, 2.0),
    },
}

EXPERIMENTS = {
    "chevron": ("device", "chevron"),
    "crosskerr-sweep": ("device", "sweep"),
    "ramsey": ("device", "ramsey"),
    "cz-gate": ("device", "gate"),
    "repeated-gates": ("device", "gate"),
    "bell-state": ("device", "gate"),
    "tomography": ("tomography",),
    "parity-check": ("device", "parity"),
    "error-budget": ("device", "budget"),
}
STOCHASTIC = {"tomography"}


@dataclass
class RunConfig:
    experiment: str
    seed: int | None
    sections: dict[str, dict]
    resolved: configparser.ConfigParser

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]


def _apply_overrides(cp: configparser.ConfigParser, overrides, experiment: str | None) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, key = key.split(".", 1)
        else:
            owners = [s for s in cp.sections() if cp.has_option(s, key)]
            if len(owners) == 1:
                section = owners[0]
            elif len(owners) > 1:
                raise ConfigError(key, f"ambiguous override, qualify with one of {owners}")
            else:
                cands = [s for s in EXPERIMENTS.get(experiment, ()) if key in SCHEMA[s]]
                if not cands:
                    raise ConfigError(key, "override names no known key")
                section = cands[-1]
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def load_config(path, overrides=()) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    except configparser.Error as exc:
        raise ConfigError(str(path), f"malformed config: {exc.message}") from None
    experiment = cp.get("run", "experiment", fallback=None)
    _apply_overrides(cp, overrides, experiment)
    if not cp.has_section("run"):
        raise ConfigError("run", "missing required section")
    if experiment not in EXPERIMENTS:
        raise ConfigError("run.experiment", f"must be one of {sorted(EXPERIMENTS)}")
    needed = ("run",) + EXPERIMENTS[experiment]
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(name, "unknown section")
    sections, resolved = {}, configparser.ConfigParser(interpolation=None)
    resolved.optionxform = str
    for name in needed:
        if not cp.has_section(name):
            raise ConfigError(name, f"missing required section for experiment {experiment!r}")
        schema, values = SCHEMA[name], {}
        for key in cp.options(name):
            if key not in schema:
                raise ConfigError(f"{name}.{key}", "unknown key (physical quantities need a unit suffix)")
        resolved.add_section(name)
        for key, (parse, default) in schema.items():
            if cp.has_option(name, key):
                raw = cp.get(name, key)
                try:
                    values[key] = parse(raw)
                except (ValueError, SyntaxError):
                    raise ConfigError(f"{name}.{key}", f"invalid value {raw!r}") from None
            elif default is REQUIRED:
                raise ConfigError(f"{name}.{key}", "missing required key")
            else:
                values[key] = default
            if values[key] is not None:
                resolved.set(name, key, _format_value(values[key]))
        sections[name] = values
    seed = sections["run"]["seed"]
    if experiment in STOCHASTIC and seed is None:
        raise ConfigError("run.seed", "seed is required for stochastic experiments")
    if seed is not None and not 0 <= seed < 2**64:
        raise ConfigError("run.seed", "seed must be a 64-bit unsigned integer")
    return RunConfig(experiment, seed, sections, resolved)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    """Rows of scalars; complex values become ``<name>_re``/``<name>_im`` columns."""
    flat = []
    for row in rows:
        out = {}
        for k, v in row.items():
            if isinstance(v, (complex, np.complexfloating)):
                out[f"{k}_re"], out[f"{k}_im"] = v.real, v.imag
            else:
                out[k] = v
        flat.append(out)
    columns = list(flat[0]) if flat else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in flat:
            w.writerow([_fmt(row[c]) for c in columns])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(format(v, ".9g")) if math.isfinite(v) else None
    return v


def write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ------------------------------------------------------------- experiments


def _device(cfg: RunConfig):
    from .models import preset

    dev = cfg["device"]
    try:
        params = preset(dev["preset"])
    except ValueError as exc:
        raise ConfigError("device.preset", str(exc)) from None
    changes = {field: dev[key] for key, field in _DEVICE_FIELDS.items() if dev.get(key) is not None}
    try:
        return params.with_(**changes) if changes else params
    except ValueError as exc:
        raise ConfigError("device", str(exc)) from None


def _coherences(params, name: str):
    return None if name == "none" else params.coherence(name)


def _linspace(sec, lo, hi, n):
    if sec[n] < 1:
        raise ConfigError(n, "need at least one point")
    return np.linspace(sec[lo], sec[hi], sec[n])


def _gate_coupling(cfg: RunConfig, params, section: str) -> float:
    from .models import OPERATING_CROSSKERR

    g = cfg[section]["g_ab_kHz"]
    if g is None:
        if params.name not in OPERATING_CROSSKERR:
            raise ConfigError(f"{section}.g_ab_kHz", f"required for preset {params.name!r}")
        return OPERATING_CROSSKERR[params.name]
    return g * 1e-3


def run_chevron(cfg, workers):
    from .protocols import chevron_scan, exchange_calibration

    params, sec = _device(cfg), cfg["chevron"]
    coh = _coherences(params, sec["coherence"])
    deph = cfg["device"]["dephasing"]
    deltas = _linspace(sec, "delta_min_MHz", "delta_max_MHz", "delta_points")
    times = np.linspace(0.0, sec["t_max_us"], sec["t_points"])
    maps = chevron_scan(sec["g1_MHz"], deltas, times, coh, dephasing=deph)
    fit, _ = exchange_calibration(sec["g1_MHz"], coh, t_max=sec["t_max_us"], points=max(sec["t_points"], 201), dephasing=deph)
    summary = {"g1_fit_MHz": fit.g1, "g1_fit_stderr_MHz": fit.stderr["g1"], "kappa1_per_us": fit.kappa1, "kappa_phi_per_us": fit.kappa_phi}
    return list(maps.rows()), summary


def run_sweep(cfg, workers):
    from .effective import SwtInputs, engineered_crosskerr
    from .floquet import calibrate_for_xi, crosskerr_sweep
    from .models import build_full_squid_hamiltonian

    params, sec = _device(cfg), cfg["sweep"]
    model = build_full_squid_hamiltonian(params, dims=(sec["cavity_dim"], sec["cavity_dim"], sec["coupler_dim"]))
    dressed = model.dressed()
    cal = calibrate_for_xi(model, sec["xi"], dressed)
    deltas = _linspace(sec, "delta_min_MHz", "delta_max_MHz", "delta_points")
    sweep = crosskerr_sweep(model, cal.epsilon_f, deltas, cal.resonance, workers=workers, tol=sec["tol"])
    disp = dressed.dispersive()
    rows = []
    for row, d in zip(sweep.rows(), deltas):
        s = SwtInputs(cal.resonance.g1, d, disp["chi_b"], disp["K_a"], disp["K_b"], disp["K_ab"], disp["chi_a"])
        row["g_swt_kHz"] = engineered_crosskerr(s) * 1e3
        rows.append(row)
    summary = {
        "xi": sec["xi"],
        "epsilon_f_MHz": cal.epsilon_f,
        "resonance_MHz": cal.resonance.frequency,
        "g1_MHz": cal.resonance.g1,
        "stark_shift_MHz": cal.stark_shift,
        "static_K_ab_kHz": sweep.static_k * 1e3,
        "n_flagged": sweep.n_flagged,
    }
    frac = sweep.n_flagged / max(len(sweep.points), 1)
    if frac > sec["max_flagged_fraction"]:
        raise FlaggedPointsError(f"{sweep.n_flagged} of {len(sweep.points)} Floquet points unassigned", rows, summary)
    return rows, summary


def run_ramsey(cfg, workers):
    from .protocols import ramsey_crosskerr, ramsey_crosskerr_floquet, two_mode_system

    params, sec = _device(cfg), cfg["ramsey"]
    if sec["model"] == "effective":
        from .models import build_effective_crosskerr

        for key in ("g_ab_kHz", "t_max_us"):
            if sec[key] is None:
                raise ConfigError(f"ramsey.{key}", "required for the effective model")
        s = two_mode_system(sec["dim"])
        res = ramsey_crosskerr(build_effective_crosskerr(sec["g_ab_kHz"] * 1e-3, s), s, np.linspace(0, sec["t_max_us"], sec["points"]))
        summary = {"g_ab_kHz": res.g_ab * 1e3, "frame_b0_MHz": res.slope_0, "frame_b1_MHz": res.slope_1}
    else:
        from .floquet import calibrate_for_xi
        from .models import build_full_squid_hamiltonian

        for key in ("xi", "delta_MHz", "periods_max"):
            if sec[key] is None:
                raise ConfigError(f"ramsey.{key}", "required for the floquet model")
        model = build_full_squid_hamiltonian(params)
        cal = calibrate_for_xi(model, sec["xi"])
        f = cal.resonance.frequency + sec["delta_MHz"]
        periods = np.unique(np.linspace(0, sec["periods_max"], sec["points"]).astype(int))
        res = ramsey_crosskerr_floquet(model, cal.epsilon_f, f, periods)
        summary = {"g_ab_kHz": res.g_ab * 1e3, "epsilon_f_MHz": cal.epsilon_f, "drive_MHz": f}
    rows = [{"t_us": t, "phase_b0_rad": p0, "phase_b1_rad": p1} for t, p0, p1 in zip(res.times, res.phases_0, res.phases_1)]
    return rows, summary


def run_cz(cfg, workers):
    from .effective import gate_time
    from .hilbert import DensityMatrix, state_fidelity
    from .protocols import bell_target, cphase_gate, plus_state, two_mode_system
    from scipy.linalg import expm
    from .models import build_effective_crosskerr

    params, sec = _device(cfg), cfg["gate"]
    g = _gate_coupling(cfg, params, "gate")
    dim = sec["dim"]
    s = two_mode_system(dim)
    psi = np.kron(plus_state(dim), plus_state(dim))
    t = gate_time(g, sec["target_phase"], sec["n_a"], sec["n_b"])
    out = cphase_gate(DensityMatrix.from_ket(s, psi), g, sec["target_phase"], sec["n_a"], sec["n_b"], _coherences(params, sec["coherence"]), cfg["device"]["dephasing"])
    h = build_effective_crosskerr(g, s)
    target = expm(-1j * h * t) @ psi
    summary = {"gate_time_us": t, "g_ab_kHz": g * 1e3, "target_phase_rad": sec["target_phase"], "fidelity": state_fidelity(out.matrix, target)}
    if abs(sec["target_phase"] - math.pi) < 1e-12 and sec["n_a"] == sec["n_b"] == 1:
        summary["bell_fidelity"] = state_fidelity(out.matrix, bell_target(dim))
    rows = _matrix_rows(out.matrix)
    return rows, summary


def _matrix_rows(m):
    return [{"row": i, "col": j, "rho": complex(m[i, j])} for i in range(m.shape[0]) for j in range(m.shape[1])]


def run_bell(cfg, workers):
    from .protocols import bell_state

    params, sec = _device(cfg), cfg["gate"]
    g = _gate_coupling(cfg, params, "gate")
    res = bell_state(g, _coherences(params, sec["coherence"]), sec["dim"], cfg["device"]["dephasing"])
    rows = [{"pauli": k, "value": v} for k, v in res.bars.items()]
    return rows, {"bell_fidelity": res.fidelity, "leakage": res.bars["leakage"]}


def run_repeated(cfg, workers):
    from .protocols import _initial_ket, repeated_gate_fidelity, two_mode_system

    params, sec = _device(cfg), cfg["gate"]
    g = _gate_coupling(cfg, params, "gate")
    s = two_mode_system(sec["dim"])
    psi = _initial_ket(sec["state"], sec["dim"])
    deph = cfg["device"]["dephasing"]
    on = repeated_gate_fidelity(psi, s, g, sec["n_gates"], _coherences(params, sec["coherence"]), sec["target_phase"], True, deph)
    off = repeated_gate_fidelity(psi, s, g, sec["n_gates"], _coherences(params, sec["idle_coherence"]), sec["target_phase"], False, deph)
    rows = [{"n_gates": n, "fidelity": a, "fidelity_idle": b} for n, a, b in zip(on.n_gates, on.fidelities, off.fidelities)]
    summary = {
        "state": sec["state"],
        "per_gate_infidelity": on.per_gate_infidelity,
        "idle_per_gate_infidelity": off.per_gate_infidelity,
        "single_gate_infidelity": 1 - on.fidelities[1],
    }
    return rows, summary


def run_tomography(cfg, workers):
    from .tomography import (
        CONFUSION_ALICE,
        CONFUSION_BOB,
        ENCODINGS,
        apply_confusion,
        check_physical,
        measurement_matrix,
        optimize_displacements,
        outcome_probabilities,
        random_code_state,
        reconstruct,
        sample_counts,
    )

    sec = cfg["tomography"]
    _, dim, default_pairs = ENCODINGS[sec["encoding"]]
    pairs = sec["pairs"] or default_pairs
    plan = optimize_displacements(dim, pairs, seed=cfg.seed % 2**32)
    conf = (CONFUSION_ALICE, CONFUSION_BOB) if sec["confusion"] == "measured" else None
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for k in range(sec["states"]):
        truth = random_code_state(sec["encoding"], rng)
        p = outcome_probabilities(truth, plan)
        if conf:
            p = apply_confusion(p, *conf)
        shots = sec["shots"]
        freqs = sample_counts(p, shots, rng) / shots if shots else p
        rec = reconstruct(freqs, plan, shots or None, conf, int(rng.integers(2**32)), sec["samples"], sec["thinning"], truth)
        row = {"state": k, "fidelity_ls": rec.fidelity_ls}
        if rec.posterior:
            row.update(fidelity_bme=rec.fidelity_bme, physical=check_physical(rec.rho), acceptance=rec.posterior.acceptance)
        rows.append(row)
    key = "fidelity_bme" if sec["shots"] else "fidelity_ls"
    fids = [r[key] for r in rows]
    summary = {
        "encoding": sec["encoding"],
        "pairs": plan.size,
        "sigma_min": measurement_matrix(plan).sigma_min,
        "median_fidelity": float(np.median(fids)),
        "min_fidelity": float(np.min(fids)),
        "estimator": "bme" if sec["shots"] else "ls",
    }
    return rows, summary


def run_parity(cfg, workers):
    from .protocols import SNAP_TABLE, parity_check_protocol
    from .tomography import CONFUSION_BOB

    sec = cfg["parity"]
    _device(cfg)
    delays = np.linspace(0.0, sec["delay_max_us"], sec["points"])
    res = parity_check_protocol(
        delays,
        sec["T1_us"],
        SNAP_TABLE["parity-map"] if sec["readout"] == "snap" else None,
        CONFUSION_BOB if sec["confusion"] == "bob" else None,
    )
    summary = {
        "t1_unconditioned_us": res.t1_unconditioned,
        "t1_post_selected_us": res.t1_post_selected,
        "ratio": res.t1_post_selected / res.t1_unconditioned,
    }
    return list(res.rows()), summary


def run_budget(cfg, workers):
    from .protocols import BudgetConfig, INITIAL_STATES, error_budget

    params, sec = _device(cfg), cfg["budget"]
    states = tuple(s.strip() for s in sec["states"].split(","))
    for s in states:
        if s not in INITIAL_STATES:
            raise ConfigError("budget.states", f"unknown state {s!r}")
    bc = BudgetConfig(
        g_ab=_gate_coupling(cfg, params, "budget"),
        delta=sec["delta_MHz"],
        ramp=sec["ramp_us"],
        prep_time=sec["prep_us"],
        dephasing=cfg["device"]["dephasing"],
    )
    budgets = error_budget(params, states, bc)
    rows = [{"state": b.state, "source": k, "infidelity": v} for b in budgets for k, v in b.contributions.items()]
    summary = {"total_infidelity": {b.state: b.total for b in budgets}}
    return rows, summary


RUNNERS = {
    "chevron": run_chevron,
    "crosskerr-sweep": run_sweep,
    "ramsey": run_ramsey,
    "cz-gate": run_cz,
    "repeated-gates": run_repeated,
    "bell-state": run_bell,
    "tomography": run_tomography,
    "parity-check": run_parity,
    "error-budget": run_budget,
}


def _numeric_errors():
    from .dynamics import SolverError
    from .effective import ResonanceError
    from .floquet import FloquetError
    from .protocols import ProtocolError
    from .tomography import TomographyError

    return (SolverError, ResonanceError, FloquetError, ProtocolError, TomographyError, RuntimeError, np.linalg.LinAlgError, FloatingPointError)


def run(config_path, overrides=(), workers: int | None = None, out: str | None = None, plot: bool = False) -> int:
    """Run one experiment; returns the process exit status."""
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    workers = workers or int(os.environ.get(ENV_WORKERS, "1") or 1)
    out_dir = Path(out or Path(config_path).with_suffix("").name + "-out")
    status = 0
    try:
        rows, summary = RUNNERS[cfg.experiment](cfg, workers)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FlaggedPointsError as exc:
        log.error("%s", exc.args[0])
        _, rows, summary = exc.args
        status = EXIT_FLAGGED
    except _numeric_errors() as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.experiment
    write_csv(out_dir / f"{stem}.csv", rows)
    summary = {"experiment": cfg.experiment, "seed": cfg.seed, "results": summary}
    write_json(out_dir / "summary.json", summary)
    with open(out_dir / "resolved.cfg", "w") as fh:
        cfg.resolved.write(fh)
    if plot:
        from .plotting import plot_experiment

        plot_experiment(cfg.experiment, out_dir / f"{stem}.csv", out_dir / f"{stem}.png")
    log.info("wrote %s", out_dir)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="crosskerr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("config")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, default=None, help=f"parallel workers (default ${ENV_WORKERS} or 1)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--plot", action="store_true", help="also render a PNG figure from the CSV")
    p.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.config, args.override, args.workers, args.out, args.plot)


if __name__ == "__main__":
    sys.exit(main())
