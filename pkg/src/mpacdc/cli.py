"""Command-line interface: ``mpacdc <subcommand> [options]``.

Every run is described by one JSON config (defaults from ``print-config``)
with ``--set section.key=value`` overrides.  Exit codes: 0 ok, 1 check
failure, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import data_gen
from .blocks import save_tensormap
from .density import FeatureSpec
from .errors import ConfigurationError, ContractError, GenerationError, InputError, ParseError
from .features import compute_features, resolve_spec
from .models import (
    RidgeModel,
    fit_equivariant_vector,
    fit_invariant,
    gfre,
    invariant_design,
    invariant_matrix,
    learning_curve,
    rmse,
    spec_fingerprint,
    vector_design,
    write_predictions,
)
from .radial import RadialBasisSpec
from .so3 import Rotation, build_cg_cache, wigner_matrix
from .structures import read_xyz, write_xyz

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "features": {
        "feature_string": "nu=2",
        "n_max": 6,
        "r_cut": 3.5,
        "smearing_sigma": 0.3,
        "cutoff_width": 0.5,
        "l_max": 4,
        "lambda_max": None,
        "lambda_keep": None,
        "sigma_keep": None,
        "species": None,
        "neighbor_species": None,
        "center_species": None,
        "density": "delta",
        "pca_dim": None,
    },
    "gen": {"dataset": "ch4", "n": 100, "params": {}},
    "model": {"target": "energy", "reg": 1e-8},
    "gfre": {"feature_string_b": "[1<-1]", "train_fraction": 0.5, "reg": 1e-8},
    "lcurve": {"train_sizes": [10, 20, 40], "regs": [1e-10, 1e-8, 1e-6, 1e-4], "n_val": None, "n_splits": 3},
    "check": {"n_rotations": 20, "tolerance": 1e-9, "inversion": True},
}

_INT_OR_NULL = {"type": ["integer", "null"]}
_STR_LIST_OR_NULL = {"type": ["array", "null"], "items": {"type": "string"}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "threads": {"type": "integer", "minimum": 1},
        "features": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feature_string": {"type": "string", "minLength": 1},
                "n_max": {"type": "integer", "minimum": 1},
                "r_cut": {"type": "number", "exclusiveMinimum": 0},
                "smearing_sigma": {"type": "number", "exclusiveMinimum": 0},
                "cutoff_width": {"type": "number", "exclusiveMinimum": 0},
                "l_max": {"type": "integer", "minimum": 0, "maximum": 16},
                "lambda_max": {"type": ["integer", "null"], "minimum": 0, "maximum": 16},
                "lambda_keep": {"type": ["array", "null"], "items": {"type": "integer", "minimum": 0}},
                "sigma_keep": {"type": ["array", "null"], "items": {"enum": [-1, 1]}},
                "species": _STR_LIST_OR_NULL,
                "neighbor_species": _STR_LIST_OR_NULL,
                "center_species": _STR_LIST_OR_NULL,
                "density": {"enum": ["delta", "gaussian"]},
                "pca_dim": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "gen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset": {"enum": ["ch4", "nacl", "dipole"]},
                "n": {"type": "integer", "minimum": 1},
                "params": {"type": "object"},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target": {"enum": ["energy", "dipole"]},
                "reg": {"type": "number", "minimum": 0},
            },
        },
        "gfre": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "feature_string_b": {"type": "string", "minLength": 1},
                "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "reg": {"type": "number", "minimum": 0},
            },
        },
        "lcurve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "train_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "regs": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "n_val": _INT_OR_NULL,
                "n_splits": {"type": "integer", "minimum": 1},
            },
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_rotations": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "inversion": {"type": "boolean"},
            },
        },
    },
}


class IOFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_override(text):
    if "=" not in text:
        raise ConfigurationError(f"--set expects key=value, got {text!r}")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    update = value
    for k in reversed(keys):
        update = {k: update}
    return update


def validate_config(config):
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as err:
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"config field {where}: {err.message}") from None
    return config


def load_config(path=None, overrides=()):
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise IOFailure(f"cannot read config {path}: {err}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"config {path} is not valid JSON: {err}") from None
        if not isinstance(user, dict):
            raise ConfigurationError("config root must be an object")
        config = _merge(config, user)
    for item in overrides:
        config = _merge(config, _parse_override(item))
    return validate_config(config)


def feature_spec(fcfg):
    """FeatureSpec from the ``features`` config section."""
    basis = RadialBasisSpec(
        n_max=fcfg["n_max"],
        r_cut=fcfg["r_cut"],
        smearing_sigma=fcfg["smearing_sigma"],
        cutoff_width=fcfg["cutoff_width"],
    )
    return FeatureSpec(
        basis=basis,
        l_max=fcfg["l_max"],
        feature_string=fcfg["feature_string"],
        lambda_max=fcfg["lambda_max"],
        lambda_keep=fcfg["lambda_keep"],
        sigma_keep=fcfg["sigma_keep"],
        species=fcfg["species"],
        neighbor_species=fcfg["neighbor_species"],
        center_species=fcfg["center_species"],
        density=fcfg["density"],
        pca_dim=fcfg["pca_dim"],
    )


# ---------------------------------------------------------------------------
# I/O helpers


def _read_structures(path):
    try:
        return read_xyz(path)
    except OSError as err:
        raise IOFailure(f"cannot read {path}: {err}") from None


def _output_path(path):
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IOFailure(f"cannot create {p.parent}: {err}") from None
    return p


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    try:
        _output_path(path).write_text(text)
    except OSError as err:
        raise IOFailure(f"cannot write {path}: {err}") from None


def _targets(structures, kind):
    key = "energy" if kind == "energy" else "dipole"
    try:
        values = [st.tags[key] for st in structures]
    except KeyError:
        raise ConfigurationError(f"input structures lack the {key!r} tag") from None
    return np.asarray(values, dtype=float)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(config, args):
    gcfg = config["gen"]
    params = dict(gcfg["params"])
    try:
        if gcfg["dataset"] == "ch4":
            structures = data_gen.gen_ch4_like(gcfg["n"], config["seed"], **params)
        elif gcfg["dataset"] == "nacl":
            structures = data_gen.gen_nacl_toy(gcfg["n"], config["seed"], **params)
        else:
            structures = data_gen.gen_point_charge_molecules(gcfg["n"], config["seed"], **params)
    except TypeError as err:
        raise ConfigurationError(f"gen.params: {err}") from None
    info = {"generator": gcfg["dataset"], "seed": config["seed"]}
    info.update({k: v for k, v in params.items() if isinstance(v, (int, float, str))})
    try:
        write_xyz(structures, _output_path(args.output), extra_info=info)
    except OSError as err:
        raise IOFailure(f"cannot write {args.output}: {err}") from None
    print(f"wrote {len(structures)} structures to {args.output}")
    return EXIT_OK


def _features(config, structures, feature_string=None):
    spec = feature_spec(config["features"])
    if feature_string is not None:
        spec = spec.with_(feature_string=feature_string)
    spec = resolve_spec(spec, structures)
    return spec, compute_features(structures, spec, threads=config["threads"])


def cmd_features(config, args):
    structures = _read_structures(args.input)
    _, tmap = _features(config, structures)
    try:
        manifest = save_tensormap(tmap, args.output)
    except OSError as err:
        raise IOFailure(f"cannot write features to {args.output}: {err}") from None
    for entry in manifest["blocks"]:
        print(f"sigma={entry['sigma']:+d} lambda={entry['lambda']} shape={tuple(entry['shape'])} {entry['sha256'][:12]}")
    return EXIT_OK


def cmd_train(config, args):
    structures = _read_structures(args.input)
    spec, tmap = _features(config, structures)
    kind = config["model"]["target"]
    y = _targets(structures, kind)
    fp = spec_fingerprint(spec)
    species = spec.center_species or spec.species
    fit = fit_invariant if kind == "energy" else fit_equivariant_vector
    try:
        model = fit(tmap, structures, y, reg=config["model"]["reg"], species=species, fingerprint=fp)
    except ContractError as err:
        raise ConfigurationError(str(err)) from None
    model.feature_config = config["features"]
    try:
        model.save(_output_path(args.output))
    except OSError as err:
        raise IOFailure(f"cannot write {args.output}: {err}") from None
    pred = model.predict(tmap, structures)
    print(f"train RMSE {rmse(pred, y):.6e} on {len(structures)} structures")
    return EXIT_OK


def cmd_eval(config, args):
    try:
        model = RidgeModel.load(args.model)
    except OSError as err:
        raise IOFailure(f"cannot read model {args.model}: {err}") from None
    structures = _read_structures(args.input)
    config = dict(config, features=_merge(config["features"], model.feature_config))
    spec, tmap = _features(config, structures)
    if spec_fingerprint(spec) != model.fingerprint:
        raise ConfigurationError("feature settings do not match the model fingerprint")
    pred = model.predict(tmap, structures)
    kind = "energy" if model.target_kind == "scalar_extensive" else "dipole"
    y = _targets(structures, kind)
    try:
        write_predictions(_output_path(args.output), range(len(structures)), y, pred)
    except OSError as err:
        raise IOFailure(f"cannot write {args.output}: {err}") from None
    print(f"RMSE {rmse(pred, y):.6e} on {len(structures)} structures")
    return EXIT_OK


def cmd_gfre(config, args):
    structures = _read_structures(args.input)
    gcfg = config["gfre"]
    _, fa = _features(config, structures)
    _, fb = _features(config, structures, gcfg["feature_string_b"])
    xa, xb = invariant_matrix(fa), invariant_matrix(fb)
    if fa.blocks[(1, 0)].samples != fb.blocks[(1, 0)].samples:
        raise ConfigurationError("the two feature sets are defined on different samples")
    perm = np.random.default_rng(config["seed"]).permutation(len(xa))
    n_train = max(1, int(round(gcfg["train_fraction"] * len(xa))))
    train, test = perm[:n_train], perm[n_train:]
    report = {
        "a": config["features"]["feature_string"],
        "b": gcfg["feature_string_b"],
        "gfre_a_to_b": gfre(xa, xb, train, test, gcfg["reg"]),
        "gfre_b_to_a": gfre(xb, xa, train, test, gcfg["reg"]),
        "n_train": int(len(train)),
        "n_test": int(len(test)),
    }
    _write_json(args.output, report)
    return EXIT_OK


def cmd_lcurve(config, args):
    structures = _read_structures(args.input)
    spec, tmap = _features(config, structures)
    lcfg = config["lcurve"]
    kind = config["model"]["target"]
    y = _targets(structures, kind)
    species = spec.center_species or spec.species
    if kind == "energy":
        design, per = invariant_design(tmap, structures, species), 1
    else:
        design, per = vector_design(tmap, structures, species), 3
    rows = learning_curve(
        design, y, lcfg["train_sizes"], lcfg["regs"], seed=config["seed"],
        n_val=lcfg["n_val"], n_splits=lcfg["n_splits"], rows_per_sample=per,
    )
    try:
        with open(_output_path(args.output), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_train", "rmse_mean", "rmse_std"])
            for row in rows:
                w.writerow([row["n_train"], repr(row["rmse_mean"]), repr(row["rmse_std"])])
    except OSError as err:
        raise IOFailure(f"cannot write {args.output}: {err}") from None
    for row in rows:
        print(f"n_train={row['n_train']:6d} rmse={row['rmse_mean']:.6e} +- {row['rmse_std']:.2e}")
    return EXIT_OK


def equivariance_report(structures, spec, n_rotations=20, seed=0, inversion=True, cache=None, threads=1):
    """Max |f(R S) - D(R) f(S)| per block key over random rotations (and inversion)."""
    spec = resolve_spec(spec, structures)
    if cache is None:
        cache = build_cg_cache(min(16, max(spec.lambda_cap, spec.l_max)))
    ref = compute_features(structures, spec, threads=threads, cache=cache)
    rng = np.random.default_rng(seed)
    rotations = [Rotation.random(rng) for _ in range(n_rotations)]
    if inversion:
        rotations.append(Rotation.inversion())
    residual = {key: 0.0 for key in ref.blocks}
    for rot in rotations:
        moved = compute_features([st.transformed(rot.matrix) for st in structures], spec, threads=threads, cache=cache)
        for key, blk in ref.blocks.items():
            sigma, lam = key
            expected = np.einsum("ab,sbp->sap", wigner_matrix(lam, rot), blk.values)
            if rot.improper:
                expected = sigma * expected
            other = moved.blocks.get(key)
            if other is None or other.values.shape != expected.shape:
                residual[key] = np.inf
                continue
            scale = max(1.0, float(np.max(np.abs(blk.values)))) if blk.values.size else 1.0
            err = float(np.max(np.abs(other.values - expected))) / scale if expected.size else 0.0
            residual[key] = max(residual[key], err)
    return residual


def cmd_check_equivariance(config, args, cache=None):
    structures = _read_structures(args.input)
    spec = feature_spec(config["features"])
    ccfg = config["check"]
    residual = equivariance_report(
        structures, spec, ccfg["n_rotations"], config["seed"], ccfg["inversion"], cache, config["threads"]
    )
    tol = ccfg["tolerance"]
    failed = []
    for (sigma, lam), err in sorted(residual.items(), key=lambda kv: (kv[0][1], -kv[0][0])):
        ok = err < tol
        print(f"sigma={sigma:+d} lambda={lam} residual={err:.3e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failed.append(f"sigma={sigma:+d},lambda={lam}")
    report = {
        "tolerance": tol,
        "residual": {f"sigma={s:+d},lambda={l}": e for (s, l), e in residual.items()},
        "failed": failed,
    }
    if args.output:
        _write_json(args.output, report)
    if failed:
        print(f"equivariance check failed for {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_print_config(config, args):
    _write_json(None, config)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="mpacdc", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. features.l_max=3 (repeatable)")
    common.add_argument("--threads", type=int, help="worker threads for per-structure stages")
    common.add_argument("--seed", type=int, help="random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a toy dataset")
    p.add_argument("-o", "--output", required=True)
    p = sub.add_parser("features", parents=[common], help="compute feature blocks")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p = sub.add_parser("train", parents=[common], help="fit a ridge model")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="model file")
    p = sub.add_parser("eval", parents=[common], help="predict with a fitted model")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="predictions CSV")
    p = sub.add_parser("gfre", parents=[common], help="feature-space reconstruction errors")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="JSON report (stdout when omitted)")
    p = sub.add_parser("lcurve", parents=[common], help="learning curve")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="CSV table")
    p = sub.add_parser("check-equivariance", parents=[common], help="rotation and inversion audit")
    p.add_argument("input")
    p.add_argument("--n-rotations", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("-o", "--output", help="JSON report")
    sub.add_parser("print-config", parents=[common], help="print the effective configuration")
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "gfre": cmd_gfre,
    "lcurve": cmd_lcurve,
    "check-equivariance": cmd_check_equivariance,
    "print-config": cmd_print_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.threads is not None:
            overrides.append(f"threads={args.threads}")
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if getattr(args, "n_rotations", None) is not None:
            overrides.append(f"check.n_rotations={args.n_rotations}")
        if getattr(args, "tolerance", None) is not None:
            overrides.append(f"check.tolerance={args.tolerance!r}")
        config = load_config(args.config, overrides)
        return COMMANDS[args.command](config, args)
    except (ConfigurationError, InputError, GenerationError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (IOFailure, ParseError, OSError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
