"""Command-line interface: ``mafe {synth,graph,embed,eval,sweep}``.

Every command accepts ``--config FILE`` with ``key = value`` lines; flags
given on the command line take precedence.  Exit status is 0 on success,
1 for invalid input and 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .datasets import generate_synthetic
from .engine import EngineConfig, run
from .evaluation import METRICS, distance_matrix, dimension_sweep, frobenius_residual, repeated_evaluation
from .exceptions import NumericalError, ValidationError
from .fields import FAMILIES, FieldModel
from .graph import bilateral_graph, gaussian_perplexity_graph, pca_reduce, sample_covariance, smt_estimate

logger = logging.getLogger("mafe")

AUTO = "AUTO"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _auto_int(text):
    return AUTO if str(text).upper() == AUTO else int(text)


def _auto_float(text):
    return AUTO if str(text).upper() == AUTO else float(text)


def _pca(text):
    t = str(text).upper()
    return t if t in (AUTO, "NONE") else int(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _dims(text):
    """``1..20`` or ``1,2,5``."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


# name: (type, default, help)
COMMON = {"config": (str, None, "key=value file; flags override it")}

SYNTH = {
    "classes": (int, 3, "number of classes"),
    "per_class": (int, 100, "pixels per class"),
    "bands": (int, 20, "spectral bands"),
    "layout": (str, "blocks", "blocks or checker"),
    "noise": (float, 0.02, "noise standard deviation"),
    "seed": (int, 0, "random seed"),
    "output": (str, None, "pixel CSV to write"),
}

GRAPH = {
    "input": (str, None, "pixel CSV"),
    "kernel": (str, "bilateral", "bilateral or gaussian"),
    "k": (int, 15, "neighbours per vertex"),
    "sigma_s": (_auto_float, AUTO, "spatial bandwidth (AUTO: median neighbour distance)"),
    "smt_rotations": (_auto_int, AUTO, "Givens rotations (AUTO: min(2d, budget))"),
    "pca": (_pca, AUTO, "PCA target dimension, NONE, or AUTO (40 for gaussian if d > 40)"),
    "output": (str, None, "graph CSV to write"),
}

FIELD = {
    "model": (str, "mafe-br", "/".join(FAMILIES)),
    "p": (float, None, "attraction exponent"),
    "q": (float, None, "repulsion exponent"),
    "xi_a": (float, None, "attraction strength"),
    "xi_r": (float, None, "repulsion strength"),
    "sigma": (float, None, "MAFE-BR repulsion width"),
    "sigma_a": (float, None, "MAFEE attraction width"),
    "sigma_r": (float, None, "MAFEE repulsion width"),
}

ENGINE = {
    "dim": (int, 2, "embedding dimension"),
    "alpha": (float, 0.1, "initial learning rate"),
    "gamma1": (float, 1e-4, "meta learning rate for the latest gradient pair"),
    "gamma2": (float, 1e-5, "meta learning rate for the previous gradient pair"),
    "eps": (float, 1e-5, "gradient-norm threshold"),
    "max_iter": (int, 1000, "iteration cap"),
    "seed": (int, 0, "random seed"),
    "snapshot_every": (_auto_int, AUTO, "trajectory cadence (AUTO: 1 if N <= 100 else 10)"),
    "backtracking": (_bool, True, "halve steps that raise the energy"),
}

EMBED = {
    "graph": (str, None, "graph CSV"),
    **FIELD,
    **ENGINE,
    "output": (str, None, "embedding CSV to write"),
    "trajectory": (str, None, "optional trajectory CSV to write"),
}

EVAL = {
    "embedding": (str, None, "embedding CSV"),
    "input": (str, None, "labelled pixel CSV"),
    "runs": (int, 10, "number of stratified splits"),
    "train_frac": (float, 0.7, "training fraction per class"),
    "metric": (str, AUTO, "sam, euclidean or AUTO (euclidean for m = 1)"),
    "seed": (int, 0, "random seed"),
    "output": (str, None, "report CSV to write"),
}

SWEEP = {
    "graph": (str, None, "graph CSV"),
    "input": (str, None, "labelled pixel CSV"),
    "dims": (_dims, "1..20", "dimensions, e.g. 1..20 or 1,2,5"),
    "runs": (int, 10, "number of stratified splits"),
    "train_frac": (float, 0.7, "training fraction per class"),
    "metric": (str, AUTO, "sam, euclidean or AUTO"),
    **FIELD,
    **{k: v for k, v in ENGINE.items() if k != "dim"},
    "output": (str, None, "sweep CSV to write"),
}

COMMANDS = {
    "synth": (SYNTH, "generate a synthetic labelled scene"),
    "graph": (GRAPH, "build a neighbourhood graph"),
    "embed": (EMBED, "run the embedding engine"),
    "eval": (EVAL, "1NN evaluation of an embedding"),
    "sweep": (SWEEP, "misclassification error versus embedding dimension"),
}

REQUIRED = {
    "synth": ("output",),
    "graph": ("input", "output"),
    "embed": ("graph", "output"),
    "eval": ("embedding", "input"),
    "sweep": ("graph", "input", "output"),
}


def build_parser():
    parser = _Parser(prog="mafe", description="Artificial-field graph embedding.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (options, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        for key, (_, default, text) in {**COMMON, **options}.items():
            flag = "--" + key.replace("_", "-")
            shown = "" if default is None else f" [default: {default}]"
            # raw strings; conversion happens after merging with the config file
            p.add_argument(flag, dest=key, default=None, help=text + shown)
    return parser


def resolve(command, namespace):
    """Merge defaults < config file < flags and convert types."""
    options = COMMANDS[command][0]
    given = {k: v for k, v in vars(namespace).items() if v is not None}
    config = io.load_config(given["config"]) if "config" in given else {}
    unknown = sorted(set(config) - set(options))
    if unknown:
        raise ValidationError(f"unknown config keys for '{command}': {', '.join(unknown)}")
    out = {}
    for key, (conv, default, _) in options.items():
        raw = given.get(key, config.get(key))
        if raw is None:
            out[key] = default if not isinstance(default, str) or conv is str else conv(default)
            continue
        try:
            out[key] = conv(raw)
        except ValueError:
            raise ValidationError(f"invalid value for --{key.replace('_', '-')}: {raw!r}") from None
    missing = [k for k in REQUIRED[command] if out.get(k) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return out


def _check_input(path):
    if not Path(path).is_file():
        raise ValidationError(f"no such file: {path}")


def _check_output(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ValidationError(f"output directory does not exist: {parent}")


def _manifest(path, command, opts, resolved):
    payload = {"command": command, "options": opts, "resolved": resolved}
    io.write_manifest(str(path) + ".manifest.json", payload)


def _field(opts):
    params = {k: opts[k] for k in ("p", "q", "xi_a", "xi_r", "sigma", "sigma_a", "sigma_r")}
    return FieldModel.default(opts["model"], **params)


def _engine(opts):
    every = opts["snapshot_every"]
    return EngineConfig(
        alpha=opts["alpha"], gamma1=opts["gamma1"], gamma2=opts["gamma2"], eps=opts["eps"],
        max_iter=opts["max_iter"], seed=opts["seed"],
        snapshot_every=None if every == AUTO else every,
        backtracking=opts["backtracking"],
    )


def _metric(opts):
    metric = opts["metric"]
    if metric.upper() == AUTO:
        return None
    if metric not in METRICS:
        raise ValidationError(f"--metric must be one of {METRICS} or AUTO")
    return metric


def _labelled(path):
    data = io.load_pixels_csv(path)
    if data.labels is None:
        raise ValidationError(f"{path} has no label column; evaluation needs labelled pixels")
    return data


def cmd_synth(opts):
    if opts["classes"] < 2:
        raise ValidationError("--classes must be >= 2")
    if opts["layout"] not in ("blocks", "checker"):
        raise ValidationError("--layout must be blocks or checker")
    _check_output(opts["output"])
    data = generate_synthetic(
        opts["classes"], opts["per_class"], opts["bands"], opts["layout"], opts["noise"], opts["seed"]
    )
    io.save_pixels_csv(data, opts["output"])
    _manifest(opts["output"], "synth", opts, {"n_pixels": data.n_pixels})


def cmd_graph(opts):
    if opts["kernel"] not in ("bilateral", "gaussian"):
        raise ValidationError("--kernel must be bilateral or gaussian")
    if opts["k"] < 1:
        raise ValidationError("--k must be >= 1")
    if opts["sigma_s"] != AUTO and not opts["sigma_s"] > 0:
        raise ValidationError("--sigma-s must be positive")
    if opts["smt_rotations"] != AUTO and opts["smt_rotations"] < 0:
        raise ValidationError("--smt-rotations must be >= 0")
    if opts["pca"] not in (AUTO, "NONE") and opts["pca"] < 1:
        raise ValidationError("--pca must be >= 1")
    _check_input(opts["input"])
    _check_output(opts["output"])
    data = io.load_pixels_csv(opts["input"])

    pca = opts["pca"]
    if pca == AUTO:
        pca = 40 if opts["kernel"] == "gaussian" and data.n_bands > 40 else None
    elif pca == "NONE":
        pca = None
    if pca is not None:
        data = pca_reduce(data, pca)

    resolved = {"pca": pca, "n": data.n_pixels, "bands": data.n_bands}
    if opts["kernel"] == "gaussian":
        graph = gaussian_perplexity_graph(data, opts["k"])
    else:
        rotations = None if opts["smt_rotations"] == AUTO else opts["smt_rotations"]
        cov = smt_estimate(sample_covariance(data), rotations)
        sigma_s = None if opts["sigma_s"] == AUTO else opts["sigma_s"]
        graph = bilateral_graph(data, opts["k"], sigma_s=sigma_s, cov=cov)
        resolved.update(sigma_s=graph.sigma_s, smt_rotations=cov.n_rotations)
    io.save_graph_csv(graph, opts["output"])
    resolved["edges"] = int(graph.edges()[0].size)
    _manifest(opts["output"], "graph", opts, resolved)


def cmd_embed(opts):
    field = _field(opts)
    config = _engine(opts)
    if opts["dim"] < 1:
        raise ValidationError("--dim must be >= 1")
    _check_input(opts["graph"])
    _check_output(opts["output"])
    if opts["trajectory"]:
        _check_output(opts["trajectory"])
    graph = io.load_graph_csv(opts["graph"])
    result = run(graph, field, config, m=opts["dim"])
    io.save_embedding_csv(result.Z, opts["output"])
    if opts["trajectory"]:
        io.save_trajectory_csv(result.trajectory, opts["trajectory"])
    resolved = {
        "field": field.__dict__,
        "snapshot_every": config.cadence(graph.n),
        "iterations": result.n_iter,
        "termination": result.reason,
        "final_energy": io.fmt(result.energy),
        "final_gradnorm": io.fmt(result.grad_norm),
    }
    _manifest(opts["output"], "embed", opts, resolved)
    print(f"{result.reason} after {result.n_iter} iterations, |grad| = {result.grad_norm:.3g}")


def cmd_eval(opts):
    metric = _metric(opts)
    if opts["runs"] < 1:
        raise ValidationError("--runs must be >= 1")
    if not 0 < opts["train_frac"] < 1:
        raise ValidationError("--train-frac must lie in (0, 1)")
    _check_input(opts["embedding"])
    _check_input(opts["input"])
    if opts["output"]:
        _check_output(opts["output"])
    Z = io.load_embedding_csv(opts["embedding"])
    data = _labelled(opts["input"])
    if Z.shape[0] != data.n_pixels:
        raise ValidationError(f"embedding has {Z.shape[0]} rows but {opts['input']} has {data.n_pixels} pixels")
    frob = frobenius_residual(distance_matrix(data.spectra), distance_matrix(Z))
    report = repeated_evaluation(Z, data.labels, opts["runs"], opts["seed"], opts["train_frac"], metric, frob)
    print(report.table())
    if opts["output"]:
        io.save_report_csv(report, opts["output"])
        _manifest(opts["output"], "eval", opts, {"metric": report.metric})


def cmd_sweep(opts):
    field = _field(opts)
    config = _engine(opts)
    metric = _metric(opts)
    if not opts["dims"] or min(opts["dims"]) < 1:
        raise ValidationError("--dims must list positive dimensions")
    if opts["runs"] < 1:
        raise ValidationError("--runs must be >= 1")
    _check_input(opts["graph"])
    _check_input(opts["input"])
    _check_output(opts["output"])
    graph = io.load_graph_csv(opts["graph"])
    data = _labelled(opts["input"])
    if graph.n != data.n_pixels:
        raise ValidationError(f"graph has {graph.n} vertices but {opts['input']} has {data.n_pixels} pixels")
    rows = dimension_sweep(graph, field, data.labels, opts["dims"], opts["runs"], opts["seed"], config, opts["train_frac"], metric)
    io.save_sweep_csv(rows, opts["output"])
    for r in rows:
        print(f"m={r.m:3d}  error={r.mean_error:6.2f} +/- {r.std_error:.2f}")
    _manifest(opts["output"], "sweep", opts, {"field": field.__dict__, "dims": [r.m for r in rows]})


HANDLERS = {"synth": cmd_synth, "graph": cmd_graph, "embed": cmd_embed, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        opts = resolve(args.command, args)
        HANDLERS[args.command](opts)
    except NumericalError as exc:
        print(f"mafe: numerical error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"mafe: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
