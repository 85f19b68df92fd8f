"""Command-line interface.

Exit codes: 0 success, 2 validation/format error, 3 domain error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import adaptor as ad
from . import landmarks as lm
from . import model as md
from . import poseedit as pe
from . import surrogate as sg
from .errors import DomainError, FormatError, LpmmError


def _fail(exc: LpmmError) -> None:
    click.echo(f"error [{exc.code}]: {exc}", err=True)
    sys.exit(3 if isinstance(exc, DomainError) else 2)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LpmmError as exc:
            _fail(exc)
        except FileNotFoundError as exc:
            click.echo(f"error [file_not_found]: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})", code="malformed_json")


def _load_params(path: str) -> md.ParamVector:
    obj = _load_json(path)
    if isinstance(obj, dict):
        obj = obj.get("params", obj.get("values"))
    if not isinstance(obj, list):
        raise FormatError(f"{path}: expected a parameter list", code="malformed_json")
    return md.ParamVector(np.asarray(obj, dtype=np.float64))


def _load_landmarks(path: str, n: int | None = None) -> lm.LandmarkSet:
    obj = _load_json(path)
    space = "canonical"
    if isinstance(obj, dict):
        space = obj.get("space", "canonical")
        obj = obj.get("points")
    if not isinstance(obj, list):
        raise FormatError(f"{path}: expected landmark points", code="malformed_json")
    lms = lm.LandmarkSet(obj, n=n)
    if space == "pixel":
        lms = lm.normalize_to_canonical(lms)
    return lms


def _load_dataset(path: str) -> lm.LandmarkDataset:
    data = Path(path).read_bytes()
    return lm.normalize_dataset(lm.parse_landmark_records(data))


def _emit(payload: dict, as_json: bool, text_lines: list[str]) -> None:
    if as_json:
        click.echo(json.dumps(payload))
    else:
        for line in text_lines:
            click.echo(line)


def _write_out(out: str | None, payload: dict) -> None:
    if out:
        Path(out).write_text(json.dumps(payload))


@click.group()
def main():
    """Landmark-parameter morphable model toolkit."""


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path(), help="JSONL landmark dataset")
@click.option("--m", "m", type=int, default=None, help="component count (default: min(2n, N-1))")
@click.option("--out", required=True, type=click.Path(), help="output model file")
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def build(dataset_path, m, out, as_json):
    """Build the PCA model from a landmark dataset."""
    dataset = _load_dataset(dataset_path)
    model = md.build_lpmm(dataset, m)
    md.save_model(model, out)
    payload = {
        "n": model.n, "m": model.m,
        "fingerprint": model.dataset_fingerprint,
        "explained_variance_top5": [md.explained_variance(model, k) for k in range(1, min(5, model.m) + 1)],
        "warnings": list(model.warnings),
        "out": str(out),
    }
    _emit(payload, as_json, [
        f"built model: n={model.n} m={model.m} samples={len(dataset)}",
        *(f"warning: {w}" for w in model.warnings),
        f"wrote {out}",
    ])


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--points", "points_path", required=True, type=click.Path(), help="landmark JSON file")
@click.option("--k", required=True, type=int)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def fit(model_path, points_path, k, out, as_json):
    """Fit rig parameters to a landmark set."""
    model = md.load_model(model_path)
    lms = _load_landmarks(points_path, n=model.n)
    p = md.fit_params(model, lms, k)
    payload = {"params": p.values.tolist(), "k": p.k}
    _write_out(out, payload)
    _emit(payload, as_json, [f"params (k={p.k}): {np.array2string(p.values, precision=6)}"])


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def reconstruct(model_path, params_path, out, as_json):
    """Reconstruct landmarks from rig parameters."""
    model = md.load_model(model_path)
    p = _load_params(params_path)
    lms = md.reconstruct(model, p)
    payload = {"points": [[float(x), float(y)] for x, y in lms.points], "space": "canonical"}
    _write_out(out, payload)
    _emit(payload, as_json, [f"reconstructed {lms.n} points (k={p.k})" + (f" -> {out}" if out else "")])


@main.command()
@click.option("--params", "params_path", required=True, type=click.Path())
@click.option("--scale", "scale_alpha", type=float, default=None, help="scale pose away from base")
@click.option("--add", "adds", multiple=True, metavar="NAME=WEIGHT", help="apply a library blendshape")
@click.option("--library", "library_dir", type=click.Path(), default=None, help="blendshape directory")
@click.option("--model", "model_path", type=click.Path(), default=None, help="model for fingerprint checks")
@click.option("--interpolate-to", "interp_path", type=click.Path(), default=None)
@click.option("--alpha", type=float, default=0.5, help="interpolation position in [0,1]")
@click.option("--out", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def edit(params_path, scale_alpha, adds, library_dir, model_path, interp_path, alpha, out, as_json):
    """Edit parameters: scaling, blendshape application, interpolation."""
    p = _load_params(params_path)
    if scale_alpha is not None:
        p = pe.scale_from_base(p, scale_alpha)
    if adds:
        if library_dir is None:
            raise FormatError("--add requires --library", code="missing_library")
        fingerprint = md.load_model(model_path).dataset_fingerprint if model_path else None
        weighted = []
        for spec in adds:
            name, _, weight = spec.partition("=")
            if not weight:
                raise FormatError(f"--add expects NAME=WEIGHT, got {spec!r}", code="bad_edit_spec")
            bs = pe.load_blendshape(Path(library_dir) / f"{name}.json", fingerprint)
            weighted.append((bs, float(weight)))
        p = pe.apply_blendshapes(p, weighted)
    if interp_path is not None:
        p = pe.interpolate_params(p, _load_params(interp_path), alpha)
    payload = {"params": p.values.tolist(), "k": p.k}
    _write_out(out, payload)
    _emit(payload, as_json, [f"edited params (k={p.k}): {np.array2string(p.values, precision=6)}"])


@main.command("train-adaptor")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--k", required=True, type=int)
@click.option("--steps", required=True, type=int)
@click.option("--seed", type=int, default=0, help="training seed")
@click.option("--surrogate-seed", type=int, default=None, help="defaults to --seed")
@click.option("--w", "latent_w", type=int, default=16, help="latent dimension")
@click.option("--raster", "raster_spec", default="64x64", help="HxW")
@click.option("--sigma", type=float, default=0.02)
@click.option("--lr", type=float, default=1e-4)
@click.option("--batch-size", type=int, default=32)
@click.option("--variant", type=click.Choice(["rgb", "latent"]), default="rgb")
@click.option("--no-pose-reg", is_flag=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def train_adaptor_cmd(model_path, dataset_path, k, steps, seed, surrogate_seed, latent_w,
                      raster_spec, sigma, lr, batch_size, variant, no_pose_reg, out,
                      report_path, as_json):
    """Train the parameter-to-latent adaptor against a seeded surrogate."""
    model = md.load_model(model_path)
    dataset = _load_dataset(dataset_path)
    try:
        h_str, w_str = raster_spec.lower().split("x")
        raster = sg.RasterConfig(height=int(h_str), width=int(w_str), sigma=sigma)
    except ValueError:
        raise FormatError(f"--raster expects HxW, got {raster_spec!r}", code="bad_raster_spec")
    if surrogate_seed is None:
        surrogate_seed = seed
    stack = sg.make_surrogate(surrogate_seed, latent_w, model.n, raster, model.mean)
    cfg = ad.TrainConfig(
        k=k, steps=steps, seed=seed, learning_rate=lr, batch_size=batch_size,
        loss_variant=variant, pose_reg_enabled=not no_pose_reg,
    )
    if cfg.k > model.m:
        raise DomainError(f"k={cfg.k} exceeds model m={model.m}", code="k_out_of_range")
    net, report = ad.train_adaptor(model, stack, dataset, cfg)
    ad.save_adaptor(net, out, cfg, stack.seed)
    if report_path:
        Path(report_path).write_text(json.dumps(report.as_dict()))
    payload = {
        "final": report.final.as_dict(),
        "steps_run": report.steps_run,
        "wall_time_s": report.wall_time_s,
        "out": str(out),
    }
    _emit(payload, as_json, [
        f"trained {report.steps_run} steps in {report.wall_time_s:.1f}s",
        f"final loss: total={report.final.total:.6f} rgb={report.final.rgb:.6f} "
        f"pose_reg={report.final.pose_reg:.6f}",
        f"wrote {out}",
    ])


@main.command("eval-nme")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--ks", required=True, help="comma-separated degrees, e.g. 1,5,10")
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def eval_nme(model_path, dataset_path, ks, as_json):
    """Reconstruction NME sweep over degrees k."""
    model = md.load_model(model_path)
    dataset = _load_dataset(dataset_path)
    try:
        k_list = [int(tok) for tok in ks.split(",") if tok.strip()]
    except ValueError:
        raise FormatError(f"--ks expects integers, got {ks!r}", code="bad_ks")
    reports = md.nme_sweep(model, dataset, k_list)
    payload = {"reports": [{"k": r.k, "mean": r.mean, "skipped": r.skipped} for r in reports]}
    _emit(payload, as_json, [f"k={r.k:>4}  mean NME {r.mean:.8f}  (skipped {r.skipped})" for r in reports])


@main.command("export-model")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@handle_errors
def export_model(model_path, out, as_json):
    """Validate a model file and rewrite it to a new location."""
    model = md.load_model(model_path)
    md.save_model(model, out)
    payload = {"n": model.n, "m": model.m, "fingerprint": model.dataset_fingerprint, "out": str(out)}
    _emit(payload, as_json, [f"exported model (n={model.n}, m={model.m}) to {out}"])


@main.command()
@click.option("--state-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--ui-dir", type=click.Path(), default=None, help="serve a built web UI from this directory")
@handle_errors
def serve(state_dir, host, port, ui_dir):
    """Run the HTTP JSON API (and optionally the web UI)."""
    from .service import run_server

    run_server(host, port, state_dir, ui_dir)


if __name__ == "__main__":
    main()
