"""Learned building blocks: affine layers, pointwise MLPs, spectral heat
diffusion, the Adam optimizer, and the binary weight container.

Weight container layout (all integers little-endian uint32, floats
little-endian float64): magic ``PNDS``, format version, a JSON config
record (byte length + payload), then a record count followed by one record
per tensor: name length, name bytes, rank, dims, data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor, add, exp, matmul, mul, neg, reshape, tanh

MAGIC = b"PNDS"
FORMAT_VERSION = 1


class OptimizerError(RuntimeError):
    """Raised when an optimizer step finds missing gradients."""


class ParamStore:
    """Ordered name -> Tensor map with per-parameter Adam state."""

    def __init__(self):
        self.params = {}
        self._m = {}
        self._v = {}
        self.step_count = 0

    def add(self, name, array):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params.keys())

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def state_arrays(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_arrays(self, arrays):
        for name, value in arrays.items():
            if name not in self.params:
                raise KeyError(f"unknown parameter {name!r}")
            if self.params[name].data.shape != value.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: "
                    f"{self.params[name].data.shape} vs {value.shape}"
                )
            self.params[name].data[...] = value

    def clone(self):
        other = ParamStore()
        for name, t in self.params.items():
            other.add(name, t.data.copy())
            other._m[name] = self._m[name].copy()
            other._v[name] = self._v[name].copy()
        other.step_count = self.step_count
        return other


def adam_step(store, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update over every parameter; gradients are
    cleared afterwards."""
    missing = [name for name, t in store.params.items() if t.grad is None]
    if missing:
        raise OptimizerError(f"missing gradient for {missing[0]!r} (did backward() run?)")
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = p.grad
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data -= lr * mhat / (np.sqrt(vhat) + eps)
    store.zero_grad()


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def affine(x, w, b):
    return add(matmul(x, w), b)


def mlp_forward(x, layers, activation=tanh):
    """Alternating affine + activation, final layer affine."""
    h = x
    for i, (w, b) in enumerate(layers):
        h = affine(h, w, b)
        if i + 1 < len(layers):
            h = activation(h)
    return h


class SpectralBundle:
    """Constant spectral operators of one mesh, wrapped as tensors.

    ``phi`` is the M-orthonormal eigenvector matrix, ``phi_tm`` its
    mass-weighted transpose, ``lam_col`` the (K, 1) eigenvalue column.
    """

    def __init__(self, basis, mass_diag):
        self.phi = Tensor(basis.orthonormal)
        self.phi_tm = Tensor((basis.orthonormal * mass_diag[:, None]).T)
        self.lam_col = Tensor(basis.values[:, None])
        self.count = basis.count


def heat_diffusion(field, bundle, times):
    """Spectral heat diffusion of an (n, c) field with one diffusion time
    per channel: project onto the eigenbasis, decay coefficient k of channel
    j by exp(-lambda_k t_j), expand back. Linear in the field; gradients
    flow to both the field and the times."""
    coeff = matmul(bundle.phi_tm, field)
    t_row = reshape(times, (1, -1))
    decay = exp(neg(mul(bundle.lam_col, t_row)))
    return matmul(bundle.phi, mul(decay, coeff))


def diffusion_layer(field, basis, mass_diag, times):
    """Convenience wrapper building the spectral bundle from an eigenbasis."""
    return heat_diffusion(field, SpectralBundle(basis, mass_diag), times)


def save_weights(path, store, config):
    """Write parameters plus a JSON config header to the binary container."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(cfg))
    blob += cfg
    names = store.names()
    blob += struct.pack("<I", len(names))
    for name in names:
        data = store.params[name].data
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", data.ndim)
        for dim in data.shape:
            blob += struct.pack("<I", dim)
        blob += data.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


class WeightFormatError(ValueError):
    """Raised for corrupt or unsupported weight containers."""


def load_weights(path):
    """Read a weight container; returns (config dict, name -> array)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {raw[:4]!r}")
    off = 4

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise WeightFormatError(f"{path}: truncated container")
        vals = struct.unpack_from(fmt, raw, off)
        off += size
        return vals[0] if len(vals) == 1 else vals

    version = take("<I")
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")
    cfg_len = take("<I")
    config = json.loads(raw[off : off + cfg_len].decode("utf-8"))
    off += cfg_len
    count = take("<I")
    arrays = {}
    for _ in range(count):
        name_len = take("<I")
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        rank = take("<I")
        dims = tuple(take("<I") for _ in range(rank)) if rank else ()
        n_items = int(np.prod(dims)) if dims else 1
        nbytes = 8 * n_items
        if off + nbytes > len(raw):
            raise WeightFormatError(f"{path}: truncated tensor data for {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n_items, offset=off).reshape(dims).copy()
        off += nbytes
    return config, arrays
