"""The deformation network: a neutral-pose feature extractor producing one
local feature vector per face, a deformation encoder that aggregates a
per-face field into a global code through area-weighted projections on the
lowest Laplacian eigenfunctions, and a generator that maps the combined
feature field to per-face Jacobians which a Poisson solve integrates into a
displacement field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .mesh import Mesh
from .operators import JacobianField, mesh_operators


class ConfigError(ValueError):
    """Raised for inconsistent model configuration or weight files."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes. ``local_dim``/``code_dim`` are the per-face local
    feature and global code widths, ``freq_count`` the number of spectral
    frequencies kept by the encoder aggregation, ``eigen_count`` the cached
    eigenpairs per mesh."""

    local_dim: int = 64
    code_dim: int = 64
    freq_count: int = 4
    eigen_count: int = 32
    blocks: int = 4
    width: int = 128
    enc_channels: int = 64
    gen_hidden: int = 128

    def validate(self):
        if self.freq_count > self.eigen_count:
            raise ConfigError("freq_count cannot exceed eigen_count")
        for name in ("local_dim", "code_dim", "freq_count", "eigen_count",
                     "blocks", "width", "enc_channels", "gen_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self):
        return {
            "local_dim": self.local_dim,
            "code_dim": self.code_dim,
            "freq_count": self.freq_count,
            "eigen_count": self.eigen_count,
            "blocks": self.blocks,
            "width": self.width,
            "enc_channels": self.enc_channels,
            "gen_hidden": self.gen_hidden,
        }

    @classmethod
    def from_dict(cls, d):
        fields = set(cls.__dataclass_fields__)
        unknown = set(d) - fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class FeatureField:
    """Per-face features: the local part always, the global deformation code
    once assembled. ``assembled`` rows are ``(local_t, mask_t * code)``."""

    mesh_id: str
    local: np.ndarray
    code: np.ndarray | None = None
    assembled: np.ndarray | None = None


@dataclass
class LatentCode:
    """Global deformation code."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite latent code")


class ModelParams:
    """All learnable weights plus their configuration.

    Weight container round trips are bit-exact; ``load`` rejects files whose
    config does not match the stored tensor shapes.
    """

    def __init__(self, config, store):
        self.config = config
        self.store = store

    @classmethod
    def initialize(cls, config, seed=0, diffusion_time_scale=1e-2):
        """Fresh weights. The generator's output layer starts at zero so the
        untrained model is exactly the identity deformation; diffusion times
        start near the squared mean edge length passed as
        ``diffusion_time_scale``."""
        config.validate()
        rng = np.random.default_rng(seed)
        store = nn.ParamStore()
        cls._init_diffnet(store, rng, "feat", 6, config.width, config.local_dim,
                          config.blocks, diffusion_time_scale)
        cls._init_diffnet(store, rng, "enc", 6, config.width, config.enc_channels,
                          config.blocks, diffusion_time_scale)
        store.add("enc.lin.w", nn.glorot_uniform(
            rng, config.freq_count * config.enc_channels, config.code_dim))
        store.add("enc.lin.b", np.zeros(config.code_dim))
        gen_in = config.local_dim + config.code_dim
        store.add("gen.hidden.w", nn.glorot_uniform(rng, gen_in, config.gen_hidden))
        store.add("gen.hidden.b", np.zeros(config.gen_hidden))
        store.add("gen.out.w", np.zeros((config.gen_hidden, 9)))
        store.add("gen.out.b", np.zeros(9))
        return cls(config, store)

    @staticmethod
    def _init_diffnet(store, rng, prefix, in_dim, width, out_dim, blocks, time_scale):
        store.add(f"{prefix}.embed.w", nn.glorot_uniform(rng, in_dim, width))
        store.add(f"{prefix}.embed.b", np.zeros(width))
        for b in range(blocks):
            store.add(f"{prefix}.block{b}.a.w", nn.glorot_uniform(rng, width, width))
            store.add(f"{prefix}.block{b}.a.b", np.zeros(width))
            store.add(f"{prefix}.block{b}.log_times", np.full(width, np.log(time_scale)))
            store.add(f"{prefix}.block{b}.b.w", nn.glorot_uniform(rng, width, width))
            store.add(f"{prefix}.block{b}.b.b", np.zeros(width))
        store.add(f"{prefix}.head.w", nn.glorot_uniform(rng, width, out_dim))
        store.add(f"{prefix}.head.b", np.zeros(out_dim))

    def clone(self):
        return ModelParams(self.config, self.store.clone())

    def save(self, path):
        nn.save_weights(path, self.store, self.config.to_dict())

    @classmethod
    def load(cls, path):
        raw_config, arrays = nn.load_weights(path)
        config = ModelConfig.from_dict(raw_config)
        params = cls.initialize(config, seed=0)
        expected = set(params.store.names())
        got = set(arrays)
        if expected != got:
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise ConfigError(f"weight file does not match config (missing={missing}, extra={extra})")
        try:
            params.store.load_state_arrays(arrays)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return params


class _MeshBundle:
    """Constant tensors of one mesh shared by every forward pass."""

    def __init__(self, mesh, config):
        ops = mesh_operators(mesh)
        self.ops = ops
        basis = ops.basis(config.eigen_count)
        self.spectral = nn.SpectralBundle(basis, ops.mass_diag)
        # positions are centered per mesh (area-weighted), making the learned
        # features invariant to the aligned data's residual translation
        centroid = ops.mass_diag @ mesh.vertices / ops.total_area
        self.inputs = Tensor(np.concatenate([mesh.vertices - centroid,
                                             ops.vertex_normals], axis=1))
        self.face_avg = (ops.face_average, ops.face_average.T.tocsr())
        s = config.freq_count
        w = (basis.face_vectors[:, :s] * ops.areas[:, None]).T / ops.total_area
        self.agg = Tensor(w)
        self.projectors = Tensor(ops.projectors)
        e1, e2 = ops.edge_vectors
        self.edge1 = Tensor(e1[:, :, None])
        self.edge2 = Tensor(e2[:, :, None])
        self.normals = Tensor(ops.normals)
        self.positions = Tensor(mesh.vertices)
        self.n_faces = mesh.n_faces

    @property
    def poisson(self):
        return self.ops.poisson


_BUNDLES = {}


def _bundle(mesh, config):
    key = (mesh.id, mesh.vertex_hash(), config.eigen_count, config.freq_count)
    if key not in _BUNDLES:
        _BUNDLES[key] = _MeshBundle(mesh, config)
    return _BUNDLES[key]


def _diffnet(store, prefix, bundle, config):
    h = nn.affine(bundle.inputs, store[f"{prefix}.embed.w"], store[f"{prefix}.embed.b"])
    for b in range(config.blocks):
        a = ad.tanh(nn.affine(h, store[f"{prefix}.block{b}.a.w"], store[f"{prefix}.block{b}.a.b"]))
        d = nn.heat_diffusion(a, bundle.spectral, ad.exp(store[f"{prefix}.block{b}.log_times"]))
        r = ad.tanh(nn.affine(d, store[f"{prefix}.block{b}.b.w"], store[f"{prefix}.block{b}.b.b"]))
        h = ad.add(h, r)
    return nn.affine(h, store[f"{prefix}.head.w"], store[f"{prefix}.head.b"])


def _extract_t(mesh, params):
    """Per-face local features as a tensor (m, local_dim)."""
    bundle = _bundle(mesh, params.config)
    per_vertex = _diffnet(params.store, "feat", bundle, params.config)
    return ad.spmm(bundle.face_avg[0], per_vertex, bundle.face_avg[1])


def _encode_one_t(mesh, params):
    """Global encoding of one mesh: per-face encoder features, spectral
    aggregation into the first ``freq_count`` frequencies, then one linear
    map down to the code width."""
    bundle = _bundle(mesh, params.config)
    per_vertex = _diffnet(params.store, "enc", bundle, params.config)
    per_face = ad.spmm(bundle.face_avg[0], per_vertex, bundle.face_avg[1])
    freqs = ad.matmul(bundle.agg, per_face)
    flat = ad.reshape(freqs, (1, -1))
    out = nn.affine(flat, params.store["enc.lin.w"], params.store["enc.lin.b"])
    return ad.reshape(out, (-1,))


def _encode_t(source, target, params):
    return ad.sub(_encode_one_t(target, params), _encode_one_t(source, params))


def _assemble_t(local_t, codes_t):
    """Concatenate local features (m, l) with per-face codes (m, r)."""
    return ad.concat([local_t, codes_t], axis=1)


def _tile_code_t(code_t, n_faces):
    ones = Tensor(np.ones((n_faces, 1)))
    return ad.matmul(ones, ad.reshape(code_t, (1, -1)))


def _generate_t(source, field_t, params):
    """Feature field -> (displacement tensor (n, 3), map Jacobians (m, 3, 3)).

    The per-face MLP predicts a raw 3x3 offset which is restricted to the
    face tangent plane; the restricted offset drives the Poisson solve while
    the identity's in-plane projector is added back for the returned map
    Jacobians. A zeroed output layer therefore yields exactly zero
    displacement.
    """
    bundle = _bundle(source, params.config)
    store = params.store
    h = ad.tanh(nn.affine(field_t, store["gen.hidden.w"], store["gen.hidden.b"]))
    raw = nn.affine(h, store["gen.out.w"], store["gen.out.b"])
    offsets = ad.reshape(raw, (bundle.n_faces, 3, 3))
    restricted = ad.matmul(offsets, bundle.projectors)
    displacement = ad.poisson_apply(bundle.poisson, restricted)
    jac = ad.add(bundle.projectors, restricted)
    return displacement, jac


def _forward_pair_t(source, target, params):
    local = _extract_t(source, params)
    z = _encode_t(source, target, params)
    field_t = _assemble_t(local, _tile_code_t(z, source.n_faces))
    return _generate_t(source, field_t, params)


# public API -----------------------------------------------------------------

def extract_features(mesh, params):
    """Local per-face feature field of a neutral mesh."""
    with ad.no_grad():
        local = _extract_t(mesh, params).data
    return FeatureField(mesh_id=mesh.id, local=local)


def aggregate_spectral(face_features, mesh, s):
    """Area-weighted projection of per-face features onto the first ``s``
    face-restricted eigenfunctions: ``p_k = sum_t Area(t) g_t e_t^k / Area``."""
    ops = mesh_operators(mesh)
    basis = ops.basis(s)
    g = np.asarray(face_features, dtype=np.float64)
    w = (basis.face_vectors[:, :s] * ops.areas[:, None]).T / ops.total_area
    return w @ g


def encode_deformation(source, target, params):
    """Global deformation code: encoder applied to the target minus encoder
    applied to the source; exactly zero when both are the same mesh."""
    with ad.no_grad():
        z = _encode_t(source, target, params).data
    return LatentCode(z)


def assemble(local, code, mask=None, alpha=1.0):
    """Combine local features with a (masked, scaled) global code into the
    full per-face feature field."""
    local_arr = local.local if isinstance(local, FeatureField) else np.asarray(local)
    z = code.z if isinstance(code, LatentCode) else np.asarray(code, dtype=np.float64)
    m = local_arr.shape[0]
    scaled = alpha * z
    codes = np.tile(scaled, (m, 1))
    if mask is not None:
        weights = np.asarray(mask, dtype=np.float64).reshape(-1)
        if weights.shape[0] != m:
            raise ValueError(f"mask length {weights.shape[0]} != face count {m}")
        codes = codes * weights[:, None]
    mesh_id = local.mesh_id if isinstance(local, FeatureField) else "field"
    return FeatureField(mesh_id=mesh_id, local=local_arr, code=scaled,
                        assembled=np.concatenate([local_arr, codes], axis=1))


def generate(source, field, params):
    """Decode an assembled feature field into a deformed mesh plus the
    restricted per-face map Jacobians."""
    if field.assembled is None:
        raise ValueError("feature field is not assembled (call assemble first)")
    with ad.no_grad():
        displacement, jac = _generate_t(source, Tensor(field.assembled), params)
    deformed = source.with_vertices(source.vertices + displacement.data,
                                    id=f"{source.id}@deformed")
    return deformed, JacobianField(jac.data)


def predict(source, target, params):
    """Morph ``source`` towards ``target``: extract, encode, assemble,
    generate."""
    with ad.no_grad():
        displacement, _ = _forward_pair_t(source, target, params)
    return source.with_vertices(source.vertices + displacement.data,
                                id=f"{source.id}@to@{target.id}")
