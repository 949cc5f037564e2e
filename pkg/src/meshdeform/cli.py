"""Command-line driver: dataset synthesis, training, inference and the
latent-space tools, plus the HTTP service launcher."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import latent, synth, training
from .mesh import MeshError, load_mesh, save_mesh
from .model import ConfigError, ModelParams, predict
from .nn import WeightFormatError
from .operators import SolverError


def _fail(prefix, message):
    click.echo(f"{prefix}: {message}", err=True)
    sys.exit(1)


def _load_model(path):
    try:
        return ModelParams.load(path)
    except FileNotFoundError:
        _fail("io error", f"no such model file: {path}")
    except (WeightFormatError, ConfigError) as exc:
        _fail("config error", exc)


def _load_obj(path):
    try:
        return load_mesh(path)
    except MeshError as exc:
        _fail("io error", exc)


def _load_mask(path, n_faces):
    try:
        p = Path(path)
        if p.suffix == ".json":
            return latent.Mask.from_json(p, n_faces)
        return latent.Mask.from_column_text(p)
    except (OSError, ValueError, KeyError, IndexError) as exc:
        _fail("io error", f"bad mask file {path}: {exc}")


@click.group()
def main():
    """Localized mesh deformation engine."""


@main.command("synth")
@click.option("--kind", type=click.Choice(synth.KINDS), required=True)
@click.option("--count", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resolution", type=int, default=600, show_default=True,
              help="approximate vertex count of the template")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth_cmd(kind, count, seed, resolution, out_dir):
    """Generate a synthetic registered pose family."""
    try:
        dataset = synth.synth_dataset(kind, count, seed, target_vertices=resolution)
    except ValueError as exc:
        _fail("data error", exc)
    synth.save_dataset(dataset, out_dir)
    click.echo(f"wrote {len(dataset.poses)} poses to {out_dir}")


@main.command("train")
@click.option("--data", "data_dirs", type=click.Path(exists=True), required=True,
              multiple=True, help="dataset directory; repeat for several identities")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--log", "log_path", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None, help="override config epochs")
@click.option("--seed", type=int, default=None, help="override config seed")
@click.option("--checkpoint-dir", type=click.Path(), default=None)
@click.option("--quiet", is_flag=True)
def train_cmd(data_dirs, config_path, out_path, log_path, epochs, seed, checkpoint_dir, quiet):
    """Train on one or more synthesized dataset directories."""
    try:
        config = training.TrainConfig.from_json(config_path) if config_path \
            else training.TrainConfig()
        if epochs is not None:
            config.epochs = epochs
        if seed is not None:
            config.seed = seed
    except (ValueError, KeyError, ConfigError, json.JSONDecodeError) as exc:
        _fail("config error", exc)
    try:
        datasets = [synth.load_dataset(d) for d in data_dirs]
        dataset = datasets[0] if len(datasets) == 1 else datasets
    except (FileNotFoundError, ValueError, MeshError) as exc:
        _fail("data error", exc)
    if checkpoint_dir:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    def progress(rec):
        if not quiet and (rec["epoch"] % 10 == 0 or rec["epoch"] == config.epochs - 1):
            click.echo(f"epoch {rec['epoch']:4d}  total {rec['total']:.3e}  "
                       f"rec {rec['rec']:.3e}  normal {rec['normal']:.3e}")

    try:
        params, _ = training.train(dataset, config, checkpoint_dir=checkpoint_dir,
                                   log_path=log_path, progress=progress)
    except training.TrainingDiverged as exc:
        if exc.last_good is not None:
            exc.last_good.save(out_path)
            _fail("training error", f"{exc}; last good checkpoint saved to {out_path}")
        _fail("training error", exc)
    except SolverError as exc:
        _fail("solver error", exc)
    params.save(out_path)
    click.echo(f"saved model to {out_path}")


@main.command("predict")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--target", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def predict_cmd(model_path, source, target, out_path):
    """Morph a source mesh towards a target mesh."""
    params = _load_model(model_path)
    src, tgt = _load_obj(source), _load_obj(target)
    try:
        deformed = predict(src, tgt, params)
    except SolverError as exc:
        _fail("solver error", exc)
    save_mesh(deformed, out_path)
    click.echo(f"wrote {out_path}")


@main.command("interp")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--target", type=click.Path(exists=True), required=True)
@click.option("--steps", type=int, default=5, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def interp_cmd(model_path, source, target, steps, out_dir):
    """Write an interpolation sequence as numbered OBJ frames."""
    params = _load_model(model_path)
    src, tgt = _load_obj(source), _load_obj(target)
    try:
        frames = latent.interpolation_sequence(src, tgt, params, steps)
    except (ValueError, SolverError) as exc:
        _fail("solver error" if isinstance(exc, SolverError) else "data error", exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, frame in enumerate(frames):
        name = f"frame_{k:03d}.obj"
        save_mesh(frame, out / name)
        files.append(name)
    manifest = {"steps": steps, "alphas": [k / (steps - 1) for k in range(steps)],
                "frames": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    click.echo(f"wrote {steps} frames to {out_dir}")


@main.command("mask-deform")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--target", type=click.Path(exists=True), required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def mask_deform_cmd(model_path, source, target, mask_path, alpha, out_path):
    """Deform only the masked faces towards the target."""
    params = _load_model(model_path)
    src, tgt = _load_obj(source), _load_obj(target)
    mask = _load_mask(mask_path, src.n_faces)
    try:
        deformed = latent.partial_deform(src, tgt, mask, params, alpha=alpha)
    except SolverError as exc:
        _fail("solver error", exc)
    save_mesh(deformed, out_path)
    click.echo(f"wrote {out_path}")


@main.command("mix")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--part", "parts", multiple=True, required=True,
              help="TARGET_OBJ:MASK_JSON (mask path 'full' selects all faces)")
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def mix_cmd(model_path, source, parts, alpha, out_path):
    """Blend several masked pose codes into one deformation."""
    params = _load_model(model_path)
    src = _load_obj(source)
    resolved = []
    for spec in parts:
        if ":" not in spec:
            _fail("data error", f"--part expects TARGET_OBJ:MASK_JSON, got {spec!r}")
        mesh_path, mask_path = spec.rsplit(":", 1)
        tgt = _load_obj(mesh_path)
        mask = latent.Mask.full(src.n_faces) if mask_path == "full" \
            else _load_mask(mask_path, src.n_faces)
        resolved.append((tgt, mask))
    try:
        deformed = latent.mix(src, resolved, params, alpha=alpha)
    except SolverError as exc:
        _fail("solver error", exc)
    save_mesh(deformed, out_path)
    click.echo(f"wrote {out_path}")


@main.command("stats")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--components", type=int, default=3, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def stats_cmd(model_path, data_dir, components, out_dir):
    """Mean pose and principal deformation components of a dataset."""
    params = _load_model(model_path)
    try:
        dataset = synth.load_dataset(data_dir)
    except (FileNotFoundError, ValueError, MeshError) as exc:
        _fail("data error", exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    targets = [dataset.poses[i] for i in dataset.train_indices]
    try:
        mean = latent.mean_pose(dataset.neutral, targets, params)
        pcs = latent.pca_poses(dataset.neutral, targets, params, components)
    except (ValueError, SolverError) as exc:
        _fail("solver error" if isinstance(exc, SolverError) else "data error", exc)
    save_mesh(mean, out / "mean.obj")
    payload = {"components": [
        {"variance": var, "direction": code.z.tolist()} for var, code in pcs
    ]}
    (out / "components.json").write_text(json.dumps(payload, indent=2) + "\n")
    click.echo(f"wrote statistics to {out_dir}")


@main.command("transfer")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True,
              help="identity A mesh to deform")
@click.option("--neutral", type=click.Path(exists=True), required=True,
              help="identity B neutral mesh")
@click.option("--pose", type=click.Path(exists=True), required=True,
              help="identity B posed mesh")
@click.option("--mask", "mask_path", type=click.Path(exists=True), default=None)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def transfer_cmd(model_path, source, neutral, pose, mask_path, alpha, out_path):
    """Transfer identity B's pose onto identity A."""
    params = _load_model(model_path)
    src = _load_obj(source)
    mask = _load_mask(mask_path, src.n_faces) if mask_path else None
    try:
        deformed = latent.transfer(src, _load_obj(neutral), _load_obj(pose), params,
                                   mask=mask, alpha=alpha)
    except (ValueError, SolverError) as exc:
        _fail("solver error" if isinstance(exc, SolverError) else "data error", exc)
    save_mesh(deformed, out_path)
    click.echo(f"wrote {out_path}")


@main.command("locality")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--source", type=click.Path(exists=True), required=True)
@click.option("--target", type=click.Path(exists=True), required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def locality_cmd(model_path, source, target, mask_path, alpha, out_path):
    """Deformation-gradient magnitude per graph distance from a mask."""
    params = _load_model(model_path)
    src, tgt = _load_obj(source), _load_obj(target)
    mask = _load_mask(mask_path, src.n_faces)
    try:
        profile = latent.locality_profile(src, tgt, mask, params, alpha=alpha)
    except SolverError as exc:
        _fail("solver error", exc)
    Path(out_path).write_text(json.dumps(profile.to_dict(), indent=2) + "\n")
    click.echo(f"wrote {out_path}")


@main.command("serve")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--port", type=int, default=8089, show_default=True,
              envvar="MESHDEFORM_PORT")
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(model_path, data_dir, port, host):
    """Serve the deformation engine over HTTP."""
    import uvicorn

    from .service import build_state, create_app

    params = _load_model(model_path)
    try:
        state = build_state(params, data_dir)
    except (FileNotFoundError, ValueError, MeshError) as exc:
        _fail("data error", exc)
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
