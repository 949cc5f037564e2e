"""Losses and the end-to-end training loop.

The objective is a per-vertex mean squared reconstruction error plus a
weighted cosine penalty between target face normals and normals derived
from the predicted (pre-Poisson) Jacobians.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as md
from . import nn
from .autodiff import Tensor
from .mesh import face_normals
from .operators import JacobianField, SolverError, mesh_operators

NORMAL_EPS = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite; carries the last finite
    checkpoint."""

    def __init__(self, message, last_good=None, epoch=None):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-4
    lambda_n: float = 1e-5
    grad_accum: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    model: md.ModelConfig = field(default_factory=md.ModelConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.lambda_n < 0:
            raise ValueError("lambda_n must be non-negative")
        if self.grad_accum < 1:
            raise ValueError("grad_accum must be >= 1")

    def to_dict(self):
        d = {k: getattr(self, k) for k in
             ("epochs", "learning_rate", "lambda_n", "grad_accum", "seed", "checkpoint_every")}
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model_cfg = md.ModelConfig.from_dict(d.pop("model", {}))
        return cls(model=model_cfg, **d)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(open(path).read()))


def reconstruction_loss(target, predicted):
    """Mean over vertices of the squared Euclidean distance."""
    if target.n_vertices != predicted.n_vertices:
        raise ValueError(
            f"vertex count mismatch: {target.n_vertices} vs {predicted.n_vertices}")
    diff = target.vertices - predicted.vertices
    return float(np.mean(np.sum(diff * diff, axis=1)))


def _jacobian_normals(J, edge1, edge2):
    a = (J @ edge1[:, :, None])[:, :, 0]
    b = (J @ edge2[:, :, None])[:, :, 0]
    cr = np.cross(a, b)
    norms = np.linalg.norm(cr, axis=1)
    valid = norms >= NORMAL_EPS
    safe = np.where(valid, norms, 1.0)
    return cr / safe[:, None], valid


def normal_loss(target, J, source):
    """Mean (over faces) of one minus the cosine between target face normals
    and normals extracted from the predicted Jacobians via the deformed edge
    cross product. Faces whose cross product degenerates are skipped and
    counted with a warning."""
    mats = J.matrices if isinstance(J, JacobianField) else np.asarray(J, dtype=np.float64)
    if mats.shape[0] != source.n_faces:
        raise ValueError("Jacobian field is not aligned with the source faces")
    e1, e2 = mesh_operators(source).edge_vectors
    n_pred, valid = _jacobian_normals(mats, e1, e2)
    n_target = face_normals(target)
    skipped = int((~valid).sum())
    if skipped:
        warnings.warn(f"normal loss skipped {skipped} degenerate faces", RuntimeWarning)
    dots = np.einsum("ij,ij->i", n_target, n_pred)
    terms = np.where(valid, 1.0 - dots, 0.0)
    return float(terms.sum() / source.n_faces)


def total_loss(rec, nrm, lambda_n):
    """Weighted objective: reconstruction + lambda_n * normal term."""
    return rec + lambda_n * nrm


def _loss_t(source, target, params, lambda_n, bundle, target_positions, target_normals):
    """Differentiable objective for one (source, target) pair."""
    displacement, jac = md._forward_pair_t(source, target, params)
    predicted = ad.add(bundle.positions, displacement)
    diff = ad.sub(predicted, target_positions)
    rec = ad.mul(ad.tsum(ad.mul(diff, diff)), 1.0 / source.n_vertices)
    if lambda_n == 0.0:
        return rec, rec, None
    a = ad.reshape(ad.matmul(jac, bundle.edge1), (source.n_faces, 3))
    b = ad.reshape(ad.matmul(jac, bundle.edge2), (source.n_faces, 3))
    cr = ad.cross3(a, b)
    norms = ad.sqrt(ad.tsum(ad.mul(cr, cr), axis=1))
    valid = (norms.data >= NORMAL_EPS).astype(np.float64)
    skipped = int(valid.size - valid.sum())
    if skipped:
        warnings.warn(f"normal loss skipped {skipped} degenerate faces", RuntimeWarning)
    safe = ad.add(ad.mul(norms, valid), Tensor(1.0 - valid))
    unit = ad.row_scale(cr, ad.powc(safe, -1.0))
    dots = ad.tsum(ad.mul(unit, target_normals), axis=1)
    terms = ad.mul(ad.sub(Tensor(np.ones_like(valid)), dots), valid)
    nrm = ad.mul(ad.tsum(terms), 1.0 / source.n_faces)
    total = ad.add(rec, ad.mul(nrm, lambda_n))
    return total, rec, nrm


def pair_loss(source, target, params, lambda_n):
    """Scalar loss tensor for one training pair (kept differentiable)."""
    bundle = md._bundle(source, params.config)
    return _loss_t(source, target, params, lambda_n, bundle,
                   Tensor(target.vertices), Tensor(face_normals(target)))


def train(dataset, config, checkpoint_dir=None, log_path=None, progress=None):
    """End-to-end gradient descent through the Poisson solve.

    ``dataset`` may be a single :class:`~meshdeform.synth.PoseDataset` or a
    sequence of them (one per identity); each pair trains against its own
    neutral. Deterministic for a fixed seed. Returns (params, history), where
    history holds one record per epoch; a JSON-lines log is written when
    ``log_path`` is given. Non-finite losses abort with the last finite
    checkpoint attached to the raised :class:`TrainingDiverged`.
    """
    datasets = list(dataset) if isinstance(dataset, (list, tuple)) else [dataset]
    if not any(ds.train_indices for ds in datasets):
        raise ValueError("empty training split")
    scale = mesh_operators(datasets[0].neutral).mean_edge_length ** 2
    params = md.ModelParams.initialize(config.model, seed=config.seed,
                                       diffusion_time_scale=scale)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    pairs = []
    for ds in datasets:
        bundle = md._bundle(ds.neutral, params.config)
        for i in ds.train_indices:
            pose = ds.poses[i]
            pairs.append((ds.neutral, bundle, pose, Tensor(pose.vertices),
                          Tensor(face_normals(pose))))
    history = []
    log_file = open(log_path, "w") if log_path else None
    last_good = None
    best = (np.inf, None)
    try:
        for epoch in range(config.epochs):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(len(pairs))
            sums = np.zeros(3)
            pending = 0
            for step, i in enumerate(order):
                source, bundle, pose, pos_t, nrm_t = pairs[i]
                try:
                    total, rec, nrm = _loss_t(source, pose, params, config.lambda_n,
                                              bundle, pos_t, nrm_t)
                except SolverError as exc:
                    raise TrainingDiverged(
                        f"solver failure at epoch {epoch}, step {step}: {exc}",
                        last_good=last_good, epoch=epoch) from exc
                if not np.isfinite(total.data):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, step {step}",
                        last_good=last_good, epoch=epoch)
                total.backward()
                pending += 1
                if pending >= config.grad_accum or step == len(order) - 1:
                    nn.adam_step(params.store, config.learning_rate)
                    pending = 0
                sums += (total.item(), rec.item(), nrm.item() if nrm is not None else 0.0)
            record = {
                "epoch": epoch,
                "rec": sums[1] / len(order),
                "normal": sums[2] / len(order),
                "total": sums[0] / len(order),
                "wall_time": time.perf_counter() - t0,
            }
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
            if progress:
                progress(record)
            last_good = params.clone()
            if record["total"] < best[0]:
                best = (record["total"], params.clone())
                if checkpoint_dir:
                    best[1].save(f"{checkpoint_dir}/best.pnds")
            if checkpoint_dir and config.checkpoint_every and \
                    (epoch + 1) % config.checkpoint_every == 0:
                params.save(f"{checkpoint_dir}/epoch_{epoch + 1:05d}.pnds")
    finally:
        if log_file:
            log_file.close()
    return params, history


def evaluate_mse(params, dataset, indices):
    """Mean reconstruction MSE of the model over the given pose indices."""
    scores = []
    for i in indices:
        pose = dataset.poses[i]
        pred = md.predict(dataset.neutral, pose, params)
        scores.append(reconstruction_loss(pose, pred))
    return float(np.mean(scores))


def identity_mse(dataset, indices):
    """Baseline: mean MSE of predicting the neutral for every pose."""
    return float(np.mean([
        reconstruction_loss(dataset.poses[i], dataset.neutral) for i in indices
    ]))
