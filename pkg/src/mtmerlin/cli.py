"""Command-line entry point: simulate, preprocess, train, despeckle, evaluate.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
Every output file carries the config hash: CSV and PGM files in a comment
line, MLP1 files in their metadata block, SLCS files through ``manifest.json``
next to them (the SLCS header has no free field).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config, parse_config
from .core import RngHandle
from .errors import Diverged, FormatError, MerlinError, NonFinite
from .evaluation import EvalReport, config_hash, psnr_log
from .io import read_slcs, real_stack, write_pgm16, write_slcs
from .preprocess import WhitenedStack, preprocess_stack, recenter_spectrum
from .scene import (ExponentialCoherence, SarResponseSpec, average_coherence, coherence_matrix,
                    piecewise_scene, synthesize_stack)

log = logging.getLogger("mtmerlin")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Run:
    """Output directory, config hash and manifest bookkeeping for one subcommand."""

    def __init__(self, cfg, command, out_dir):
        self.cfg = cfg
        self.command = command
        self.hash = config_hash(f"{command}\n{cfg.canonical()}")
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"output directory {out_dir} is not writable", key="output_dir")
        self.files = {}

    def path(self, name):
        return os.path.join(self.out, name)

    def slcs(self, name, stack, role):
        write_slcs(self.path(name), stack)
        self.files[name] = role

    def pgm(self, name, img, **kw):
        write_pgm16(self.path(name), img, comment=f"config_hash={self.hash}", **kw)
        self.files[name] = "preview"

    def text(self, name, content, role):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(content)
        self.files[name] = role

    def finish(self, **extra):
        manifest = dict(command=self.command, config_hash=self.hash, version=__version__,
                        files=dict(sorted(self.files.items())), **extra)
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _record(**fields):
    log.info(" ".join(f"{k}={v}" for k, v in fields.items()))


def _require_file(path, section, key, cfg):
    if not path:
        raise ConfigError(f"[{section}] {key} is required", key=key, line=cfg.line_of(section, key))
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}", key=key, line=cfg.line_of(section, key))
    return path


# ------------------------------------------------------------------ simulate

def _scene_from(cfg, tau):
    sc = cfg["scene"]
    if sc["sar_response"] == "identity":
        resp = SarResponseSpec.identity()
    else:
        ov = sc["oversampling"]
        if len(ov) == 1:
            ov = (ov[0], ov[0])
        resp = SarResponseSpec.apodized(sc["taper"], tuple(ov))
    coh = ExponentialCoherence.regular(sc["dates"], tau)
    scene = piecewise_scene((sc["height"], sc["width"]), sc["dates"], RngHandle(cfg["run"]["seed"]).child(1),
                            n_classes=sc["n_classes"], dynamic_db=sc["dynamic_db"],
                            change_fraction=sc["change_fraction"], cell_size=sc["cell_size"],
                            ref_index=sc["ref_index"], coherence=coh, sar_response=resp,
                            base_level=sc["base_level"])
    if sc["ramp_fx"] or sc["ramp_fy"]:
        scene.psi = [(sc["ramp_fx"], sc["ramp_fy"], 0.0)] * sc["dates"]
        scene.__post_init__()
    return scene


def cmd_simulate(cfg, args):
    sc = cfg["scene"]
    run = _Run(cfg, "simulate", args.out or cfg["run"]["output_dir"])
    taus = args.tau_sweep if args.tau_sweep is not None else sc["tau_sweep"]
    sweep = bool(taus)
    if not sweep:
        taus = (sc["tau"],)
    produced = []
    for tau in taus:
        scene = _scene_from(cfg, tau)
        gbar = average_coherence(coherence_matrix(scene.coherence))
        stack, truth = synthesize_stack(scene, RngHandle(cfg["run"]["seed"]).child(2))
        suffix = f"_gbar{gbar:.4f}" if sweep else ""
        run.slcs(f"stack{suffix}.slcs", stack, "stack")
        target = np.stack([truth.target(t) for t in range(scene.T)])
        run.slcs(f"truth{suffix}.slcs", real_stack(target), "truth")
        run.pgm(f"truth{suffix}.pgm", np.log(target[sc["ref_index"]]))
        print(f"tau={tau:g} gamma_bar={gbar:.6f} file=stack{suffix}.slcs")
        produced.append(dict(tau=tau, gamma_bar=gbar, stack=f"stack{suffix}.slcs"))
    run.finish(outputs=produced)
    return EXIT_OK


# ------------------------------------------------------------------ preprocess

def cmd_preprocess(cfg, args):
    pp = cfg["preprocess"]
    src = _require_file(pp["input"], "preprocess", "input", cfg)
    stack = read_slcs(src)
    run = _Run(cfg, "preprocess", args.out or cfg["run"]["output_dir"])
    stages = []

    def stage_log(rec):
        stages.append(rec)
        _record(**rec)

    ws = preprocess_stack(stack, pp["ref_date"], whiten=pp["whiten"], coh_window=pp["coh_window"],
                          ds_quantile=pp["ds_quantile"], center=pp["center"], stage_log=stage_log)
    planes = ws.planes()
    centered = recenter_spectrum(stack, ws.shift).planes()
    if not np.array_equal(planes[ws.ref_index], centered[ws.ref_index]):
        raise AssertionError("reference plane altered by whitening")
    run.slcs("whitened.slcs", ws.data, "whitened")
    if ws.maps:
        coh = np.ones(planes.shape, dtype=np.float64)
        for t, m in ws.maps.items():
            coh[t] = np.abs(m.gamma)
        run.slcs("coherence.slcs", real_stack(coh), "coherence magnitude")
    run.pgm("ref_intensity.pgm", np.log(np.abs(planes[ws.ref_index]) ** 2 + 1e-10))
    run.finish(ref_date=ws.ref_index, whiten=pp["whiten"], shift=[ws.shift.fx, ws.shift.fy],
               n_clamped=ws.n_clamped, stages=[s["stage"] for s in stages])
    return EXIT_OK


# ------------------------------------------------------------------ train

def cmd_train(cfg, args):
    from .nn import ArchSpec, TrainConfig, train
    from .nn.params_io import save_params

    tr = cfg["train"]
    inputs = args.inputs or tr["inputs"]
    if not inputs:
        raise ConfigError("[train] inputs is required", key="inputs", line=cfg.line_of("train", "inputs"))
    ref = cfg["preprocess"]["ref_date"]
    stacks = []
    for p in inputs:
        if not os.path.isfile(p):
            raise ConfigError(f"file not found: {p}", key="inputs", line=cfg.line_of("train", "inputs"))
        stacks.append(WhitenedStack(read_slcs(p), ref))
    tc = TrainConfig(patch_size=tr["patch_size"], batch_size=tr["batch_size"], epochs=tr["epochs"],
                     lr_schedule=tr["lr_schedule"], seed=cfg["run"]["seed"],
                     patches_per_epoch=tr["patches_per_epoch"], aux_dates=tr["aux_dates"],
                     encoding=tr["encoding"], dtype=tr["dtype"])
    run = _Run(cfg, "train", args.out or cfg["run"]["output_dir"])
    from .loss import build_input_sets
    n_ch = build_input_sets(stacks[0], tr["aux_dates"], tr["encoding"]).n_channels
    arch = ArchSpec(in_channels=n_ch, depth=cfg["arch"]["depth"], base_width=cfg["arch"]["base_width"])
    result = train(stacks, tc, RngHandle(cfg["run"]["seed"]), arch=arch,
                   on_epoch=lambda e, l: _record(epoch=e, loss=f"{l:.6f}"))
    result.params.meta = dict(config_hash=run.hash, ref_date=ref,
                              aux_dates=list(tr["aux_dates"]) if tr["aux_dates"] else None)
    save_params(run.path("params.mlp1"), result.params)
    run.files["params.mlp1"] = "params"
    lines = [f"# config_hash={run.hash}", "epoch,loss"]
    lines += [f"{i},{v:.8f}" for i, v in enumerate(result.loss_curve)]
    run.text("loss.csv", "\n".join(lines) + "\n", "loss curve")
    run.finish(n_params=result.params.n_params, final_loss=result.loss_curve[-1])
    return EXIT_OK


# ------------------------------------------------------------------ despeckle

def cmd_despeckle(cfg, args):
    from .nn import despeckle
    from .nn.params_io import load_params

    ds = cfg["despeckle"]
    params = load_params(_require_file(args.params or ds["params"], "despeckle", "params", cfg))
    stack = read_slcs(_require_file(args.input or ds["input"], "despeckle", "input", cfg))
    ref = params.meta.get("ref_date", cfg["preprocess"]["ref_date"])
    aux = ds["aux_dates"] if ds["aux_dates"] is not None else params.meta.get("aux_dates")
    est = despeckle(params, WhitenedStack(stack, ref), aux)
    if not np.all(np.isfinite(est)):
        raise NonFinite("estimate contains non-finite values")
    run = _Run(cfg, "despeckle", args.out or cfg["run"]["output_dir"])
    run.slcs("estimate.slcs", real_stack(est), "estimate")
    run.pgm("estimate.pgm", np.log(est))
    run.finish(ref_date=ref, model_config_hash=params.meta.get("config_hash"))
    return EXIT_OK


# ------------------------------------------------------------------ evaluate

def _experiment_config(cfg):
    from .experiments import ExperimentConfig

    ev = cfg["eval"]
    keys = ("size", "dates", "cell_size", "n_train", "n_locations", "steps", "patch_size", "batch_size",
            "base_width", "draws", "realizations", "t_values", "coherence_targets", "whiten_targets")
    return ExperimentConfig(seed=cfg["run"]["seed"], depth=cfg["arch"]["depth"],
                            **{k: ev[k] for k in keys})


def cmd_evaluate(cfg, args):
    ev = cfg["eval"]
    run = _Run(cfg, "evaluate", args.out or cfg["run"]["output_dir"])
    if ev["mode"] == "compare":
        est = read_slcs(_require_file(args.estimate or ev["estimate"], "eval", "estimate", cfg)).planes().real
        truth = read_slcs(_require_file(args.truth or ev["truth"], "eval", "truth", cfg)).planes().real
        ref = truth[ev["truth_date"]]
        peak = "auto" if ev["peak"] is None else ev["peak"]
        report = EvalReport(config_hash=run.hash)
        report.rows.append(dict(label="estimate", location=0, draw=0, realization=0,
                                psnr=psnr_log(est[0], ref, peak)))
    else:
        from .experiments import run_psnr_vs_coherence, run_psnr_vs_T

        ecfg = _experiment_config(cfg)
        fn = run_psnr_vs_T if ev["mode"] == "psnr-vs-T" else run_psnr_vs_coherence
        report = fn(ecfg, on_label=lambda lab, rep: _record(label=lab, median_psnr=f"{rep.median(lab):.4f}"))
        report.config_hash = run.hash
        for lab in report.bias2:
            tag = lab.replace("=", "").replace("+", "_")
            run.pgm(f"bias2_{tag}.pgm", report.bias2[lab])
            run.pgm(f"variance_{tag}.pgm", report.variance[lab])
    run.text("psnr_rows.csv", report.rows_csv(), "psnr rows")
    run.text("psnr_summary.csv", report.summary_csv(), "psnr summary")
    for lab in report.labels():
        print(f"label={lab} median_psnr={report.median(lab):.4f}")
    run.finish(mode=ev["mode"])
    return EXIT_OK


# ------------------------------------------------------------------ entry point

COMMANDS = {"simulate": cmd_simulate, "preprocess": cmd_preprocess, "train": cmd_train,
            "despeckle": cmd_despeckle, "evaluate": cmd_evaluate}


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser():
    ap = argparse.ArgumentParser(prog="mtmerlin", description="Multi-temporal SAR despeckling pipeline.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI configuration document")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration value (repeatable)")
        p.add_argument("--out", help="output directory (overrides run.output_dir)")
        p.add_argument("--seed", type=int, help="overrides run.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for BLAS and kernels")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="simulate an SLC stack and its ground truth")
    common(p)
    p.add_argument("--tau-sweep", type=_floats, help="comma-separated decorrelation times, one stack each")

    p = sub.add_parser("preprocess", help="center and whiten a stack")
    common(p)
    p.add_argument("--input")
    p.add_argument("--ref-date", type=int)
    p.add_argument("--whiten", choices=("on", "off"))
    p.add_argument("--coh-window", type=int)
    p.add_argument("--ds-quantile", type=float)

    p = sub.add_parser("train", help="self-supervised training on preprocessed stacks")
    common(p)
    p.add_argument("--inputs", nargs="+")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("despeckle", help="apply a trained model")
    common(p)
    p.add_argument("--params")
    p.add_argument("--input")

    p = sub.add_parser("evaluate", help="PSNR reports")
    common(p)
    p.add_argument("--mode", choices=("compare", "psnr-vs-T", "psnr-vs-coherence"))
    p.add_argument("--estimate")
    p.add_argument("--truth")
    return ap


def _flag_overrides(args):
    out = list(args.overrides)
    if args.seed is not None:
        out.append(f"run.seed={args.seed}")
    pairs = {"ref_date": "preprocess.ref_date", "coh_window": "preprocess.coh_window",
             "ds_quantile": "preprocess.ds_quantile", "epochs": "train.epochs", "mode": "eval.mode"}
    for attr, key in pairs.items():
        val = getattr(args, attr, None)
        if val is not None:
            out.append(f"{key}={val}")
    if getattr(args, "whiten", None) is not None:
        out.append(f"preprocess.whiten={args.whiten}")
    if getattr(args, "input", None) and args.command == "preprocess":
        out.append(f"preprocess.input={args.input}")
    return out


def _set_threads(n):
    if n < 1:
        raise ConfigError("--threads must be at least 1", key="threads")
    # the numba kernels are serial; BLAS is the only threaded component
    from threadpoolctl import threadpool_limits
    threadpool_limits(n)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    for attr in ("params", "estimate", "truth"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    if not hasattr(args, "inputs"):
        args.inputs = None
    if not hasattr(args, "tau_sweep"):
        args.tau_sweep = None
    if args.command != "preprocess" and not hasattr(args, "input"):
        args.input = None
    try:
        _set_threads(args.threads)
        overrides = _flag_overrides(args)
        cfg = load_config(args.config, overrides) if args.config else parse_config("", overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Diverged, NonFinite, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, MerlinError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
