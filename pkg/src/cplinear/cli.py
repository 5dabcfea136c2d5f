"""Batch front end.

Each command reads one JSON config and writes ``<command>.json`` (plus a CSV
for grid-shaped results) into ``--out``. Exit status: 0 on success, 1 on
input errors, 2 when a verification run finds a counterexample.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import assignment, channels, dynamics, lindblad
from .errors import CPLinearError
from .linalg import DEFAULT_TOL, matrix_from_json, matrix_to_json

log = logging.getLogger("cplinear")

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 1, 2

_MATRIX = {
    "type": "object",
    "required": ["dim", "re", "im"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "re": {"type": "array", "items": {"type": "number"}},
        "im": {"type": "array", "items": {"type": "number"}},
    },
}
_DIM = {"type": "integer", "minimum": 1}
_INITIAL_SET = {
    "type": "object",
    "required": ["d_S", "d_E", "states"],
    "properties": {"d_S": _DIM, "d_E": _DIM, "states": {"type": "array", "minItems": 1, "items": _MATRIX}},
}
_UNITARY = {"anyOf": [{"type": "string"}, _MATRIX]}
_POLICY = {
    "type": "object",
    "properties": {"kind": {"enum": ["restricted", "product_complement"]}, "omega_E": _MATRIX},
}

SCHEMAS = {
    "classify-map": {
        "type": "object",
        "required": ["superop", "seed"],
        "properties": {
            "superop": {"type": "object", "required": ["d_in", "d_out", "transfer"]},
            "n_samples": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
        },
    },
    "build-assignment": {
        "type": "object",
        "required": ["initial_set", "seed"],
        "properties": {
            "initial_set": _INITIAL_SET,
            "policy": _POLICY,
            "n_samples": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
        },
    },
    "u-consistency": {
        "type": "object",
        "required": ["d_S", "d_E", "initial_set", "unitaries"],
        "properties": {
            "d_S": _DIM,
            "d_E": _DIM,
            "initial_set": _INITIAL_SET,
            "unitaries": {"type": "array", "minItems": 1, "items": _UNITARY},
            "probes": {"type": "array", "items": _MATRIX},
            "policy": _POLICY,
            "seed": {"type": "integer"},
        },
    },
    "verify-prop1": {
        "type": "object",
        "required": ["d_S", "d_E", "n_unitaries", "n_states", "seed"],
        "properties": {
            "d_S": _DIM,
            "d_E": _DIM,
            "n_unitaries": _DIM,
            "n_states": _DIM,
            "seed": {"type": "integer"},
            "omega_E": {"anyOf": [{"enum": ["pure", "mixed"]}, _MATRIX]},
            "adversarial": {"type": "boolean"},
            "cp_floor": {"type": "number", "minimum": 0},
            "match_tol": {"type": "number", "minimum": 0},
        },
    },
    "cp-family": {
        "type": "object",
        "required": ["d_S", "d_E", "unitary", "sigma", "weights", "Q"],
        "properties": {
            "d_S": _DIM,
            "d_E": _DIM,
            "unitary": _UNITARY,
            "sigma": {"type": "array", "minItems": 1, "items": _MATRIX},
            "weights": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            "Q": {"type": "array", "minItems": 1, "items": _MATRIX},
            "seed": {"type": "integer"},
        },
    },
    "lindblad-scan": {
        "type": "object",
        "required": ["generator", "grid"],
        "properties": {
            "generator": {
                "type": "object",
                "required": ["d", "segments"],
                "properties": {
                    "d": _DIM,
                    "segments": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["t_start", "t_end", "H"],
                            "properties": {
                                "t_start": {"type": "number"},
                                "t_end": {"type": "number"},
                                "H": _MATRIX,
                                "lindblad": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["A", "gamma"],
                                        "properties": {"A": _MATRIX, "gamma": {"type": "number"}},
                                    },
                                },
                            },
                        },
                    },
                },
            },
            "grid": {"type": "array", "items": {"type": "number"}},
            "steps_per_unit": {"type": "integer", "minimum": 1},
        },
    },
}


class ConfigError(Exception):
    pass


def load_config(command: str, path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft7Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator == "required":
            missing = [f for f in err.validator_value if f not in err.instance]
            raise ConfigError(f"{path}: field {where}: missing required field {missing[0]!r}")
        raise ConfigError(f"{path}: field {where}: {err.message}")
    return cfg


def _cls_report(s, cfg, tol, workers):
    return channels.classify(s, cfg.get("n_samples", 200), cfg["seed"], tol, workers).to_json()


def cmd_classify_map(cfg, tol, workers):
    s = channels.SuperOp.from_json(cfg["superop"])
    return {"classification": _cls_report(s, cfg, tol, workers)}, None, EXIT_OK


def cmd_build_assignment(cfg, tol, workers):
    s = assignment.InitialSet.from_json(cfg["initial_set"])
    policy = assignment.policy_from_json(cfg.get("policy", {}), s.d_E)
    basis = assignment.select_independent(s, tol)
    lam = assignment.build_assignment(basis, policy, tol)
    superop = assignment.assignment_as_superop(lam)
    return {
        "m": basis.m,
        "assignment": lam.to_json(),
        "classification": _cls_report(superop, cfg, tol, workers),
    }, None, EXIT_OK


def cmd_u_consistency(cfg, tol, workers):
    s = assignment.InitialSet.from_json(cfg["initial_set"])
    if (s.d_S, s.d_E) != (cfg["d_S"], cfg["d_E"]):
        raise ConfigError("field initial_set: d_S/d_E disagree with the scenario")
    unitaries = dynamics.unitaries_from_spec(cfg["unitaries"], s.d_S, s.d_E)
    probes = [matrix_from_json(p) for p in cfg.get("probes", [])]
    lam = None
    if probes:
        lam = assignment.assignment_from_set(s, assignment.policy_from_json(cfg.get("policy", {}), s.d_E), tol)
    rows = []
    for label, u in unitaries:
        row = {"unitary": label, "u_consistency": dynamics.u_consistency(u, s, tol).to_json()}
        if lam is not None:
            row["linearity_witness"] = dynamics.linearity_witness(u, lam, probes, tol).to_json()
        rows.append(row)
    return {"d_S": s.d_S, "d_E": s.d_E, "results": rows}, None, EXIT_OK


def cmd_verify_prop1(cfg, tol, workers):
    omega = cfg.get("omega_E", "pure")
    if isinstance(omega, dict):
        omega = matrix_from_json(omega)
    report = dynamics.verify_product_input_cp(
        cfg["d_S"],
        cfg["d_E"],
        cfg["n_unitaries"],
        cfg["n_states"],
        seed=cfg["seed"],
        omega=omega,
        adversarial=cfg.get("adversarial", True),
        tol=tol,
        cp_floor=cfg.get("cp_floor", 1e-9),
        match_tol=cfg.get("match_tol", 1e-10),
        workers=workers,
    )
    csv_rows = [("trial", "min_choi_eig", "max_deviation")] + report.csv_rows()
    return report.to_json(), csv_rows, EXIT_OK if report.passed else EXIT_FAILED


def cmd_cp_family(cfg, tol, workers):
    (label, u), *rest = dynamics.unitaries_from_spec([cfg["unitary"]], cfg["d_S"], cfg["d_E"])
    if rest:
        raise ConfigError("field unitary: must resolve to a single unitary")
    sigma = [matrix_from_json(m) for m in cfg["sigma"]]
    qs = [matrix_from_json(m) for m in cfg["Q"]]
    family, out = dynamics.cp_family(u, sigma, cfg["weights"], qs, tol)
    joint = sum(w * np.kron(q, s) for w, q, s in zip(cfg["weights"], qs, sigma))
    exact = dynamics.reduced_dynamics(u, joint, cfg["d_S"], cfg["d_E"])
    return {
        "unitary": label,
        "min_choi_eigenvalues": family.min_choi_eigenvalues(),
        "rho_S_out": matrix_to_json(out),
        "max_deviation_from_exact": float(np.max(np.abs(out - exact))),
    }, None, EXIT_OK


def cmd_lindblad_scan(cfg, tol, workers):
    g = lindblad.GKSLGenerator.from_json(cfg["generator"])
    scan = lindblad.divisibility_scan(g, cfg["grid"], cfg.get("steps_per_unit", 100), tol)
    csv_rows = [("t1", "t2", "min_choi_eig")] + scan.csv_rows()
    return scan.to_json(), csv_rows, EXIT_OK


COMMANDS = {
    "classify-map": cmd_classify_map,
    "build-assignment": cmd_build_assignment,
    "u-consistency": cmd_u_consistency,
    "verify-prop1": cmd_verify_prop1,
    "cp-family": cmd_cp_family,
    "lindblad-scan": cmd_lindblad_scan,
}


def _write(out_dir: Path, command: str, report: dict, csv_rows):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{command}.json", "w") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")
    if csv_rows is not None:
        with open(out_dir / f"{command}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in csv_rows:
                writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cplinear", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory (default: cwd)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--tol", type=float, default=1.0, help="scale every tolerance by this factor")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command: str, config_path, out_dir=".", seed=None, tol_scale=1.0, threads=1) -> int:
    try:
        cfg = load_config(command, config_path)
        if seed is not None:
            cfg["seed"] = seed
        if not tol_scale > 0:
            raise ConfigError(f"--tol must be positive, got {tol_scale}")
        tol = DEFAULT_TOL.scaled(tol_scale)
        report, csv_rows, status = COMMANDS[command](cfg, tol, max(1, threads))
    except (ConfigError, CPLinearError, ValueError, KeyError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        print(f"cplinear {command}: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    _write(Path(out_dir), command, report, csv_rows)
    if status == EXIT_FAILED:
        print(f"cplinear {command}: verification failed, counterexample written", file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return run(args.command, args.config, args.out, args.seed, args.tol, args.threads)


if __name__ == "__main__":
    sys.exit(main())
