"""Surrogate model variants and their prediction/checkpoint machinery.

Four variants share a 50-dimensional latent space:

* ``linear``   - PCA latents + boundary condition through one linear layer.
* ``pca_dnn``  - PCA latents + BC through a dense tanh network.
* ``se``       - encoder/decoder network; BC concatenated at the bottleneck.
* ``sve``      - SE with a probabilistic bottleneck (mean/log-variance
  heads, reparameterized sampling); prediction uses the mean.

Global scope maps whole-domain bathymetry to a whole-domain velocity field
with a convolutional encoder/decoder; local scope maps fixed windows (plus
the window's distance from the inlet) with fully connected stacks and
batch normalization.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..grid import BoundaryCondition, RiverGrid, ScalarField, make_bend_grid
from ..seeding import make_rng
from .pca import PcaBasis, project, reconstruct
from ..nn import (
    Activation,
    BatchNorm,
    Conv2D,
    ConvTranspose2D,
    Dense,
    Flatten,
    ReparamGaussian,
    Reshape,
    Sequential,
)
from ..nn.kernels import same_padding

CHECKPOINT_MAGIC = "RFN1"

VARIANTS = ("linear", "pca_dnn", "se", "sve")
SCOPES = ("global", "local")
TARGETS = ("magnitude", "easting", "northing")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainSpec:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    decay: float = 0.001
    batch_size: int = 32
    l2_coeff: float = 1e-4
    epochs: int = 200
    seed: int = 0
    kl_weight: float = 1e-3  # sve only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class ArchSpec:
    """Network width configuration (everything the hyperparameter table
    leaves open)."""

    dnn_hidden: tuple = (128,)  # pca_dnn global hidden widths
    conv_channels: tuple = (8, 16, 32)  # global encoder stages, stride 2 each
    kernel_size: int = 3
    local_dnn_hidden: tuple = (96,) * 6  # pca_dnn local (6 hidden layers)
    local_enc_hidden: tuple = (256, 192, 128, 96, 64)  # se/sve local, 5 each side
    use_batchnorm: bool = False  # global default; local training flips it on


@dataclass
class Normalization:
    """Z-score statistics in network-facing spaces."""

    in_mean: np.ndarray
    in_std: np.ndarray
    bc_mean: np.ndarray
    bc_std: np.ndarray
    out_mean: np.ndarray
    out_std: np.ndarray

    @staticmethod
    def from_arrays(x_net: np.ndarray, bc: np.ndarray, y_net: np.ndarray) -> "Normalization":
        def stats(a, per_feature):
            if per_feature:
                m, s = a.mean(axis=0), a.std(axis=0)
            else:
                m, s = np.array([a.mean()]), np.array([a.std()])
            return m, np.where(s > 1e-12, s, 1.0)

        per_in = x_net.ndim == 2 and x_net.shape[1] <= 256
        per_out = y_net.ndim == 2 and y_net.shape[1] <= 256
        im, istd = stats(x_net, per_in)
        bm, bstd = stats(bc, True)
        om, ostd = stats(y_net, per_out)
        return Normalization(im, istd, bm, bstd, om, ostd)

    def norm_in(self, x):
        return (x - self.in_mean) / self.in_std

    def norm_bc(self, bc):
        return (bc - self.bc_mean) / self.bc_std

    def norm_out(self, y):
        return (y - self.out_mean) / self.out_std

    def denorm_out(self, y):
        return y * self.out_std + self.out_mean


def _activation_stack(widths, n_in, rng, use_bn, out_dim, hidden_act="tanh"):
    layers = []
    prev = n_in
    for w in widths:
        layers.append(Dense(prev, w, rng))
        if use_bn:
            layers.append(BatchNorm(w))
        layers.append(Activation(hidden_act))
        prev = w
    layers.append(Dense(prev, out_dim, rng))
    layers.append(Activation("linear"))
    return Sequential(layers)


def _conv_encoder(grid_hw, channels, k, rng, latent_in=1):
    layers = []
    c_prev = latent_in
    shapes = [tuple(grid_hw)]
    for c in channels:
        layers.append(Conv2D(c_prev, c, k, 2, rng))
        layers.append(Activation("tanh"))
        h = same_padding(shapes[-1][0], k, 2)[0]
        w = same_padding(shapes[-1][1], k, 2)[0]
        shapes.append((h, w))
        c_prev = c
    layers.append(Flatten())
    feat = channels[-1] * shapes[-1][0] * shapes[-1][1]
    return Sequential(layers), feat, shapes


def _conv_decoder(shapes, channels, k, rng, dec_in, out_channels=1):
    """Mirror of the encoder: dense to the coarsest map, then transposed
    convs walking the cached shape ladder back up."""
    feat_hw = shapes[-1]
    c_top = channels[-1]
    layers = [
        Dense(dec_in, c_top * feat_hw[0] * feat_hw[1], rng),
        Activation("tanh"),
        Reshape((c_top, feat_hw[0], feat_hw[1])),
    ]
    chain = list(channels[:-1][::-1]) + [out_channels]
    c_prev = c_top
    for step, c in enumerate(chain):
        out_hw = shapes[len(shapes) - 2 - step]
        layers.append(ConvTranspose2D(c_prev, c, k, 2, out_hw, rng))
        layers.append(Activation("tanh" if step < len(chain) - 1 else "linear"))
        c_prev = c
    return Sequential(layers)


@dataclass
class SurrogateModel:
    """Checkpointable predictor: PCA bases + network weights + statistics."""

    variant: str
    scope: str
    target: str
    latent_dim: int
    grid_shape: tuple  # (n_across, n_along)
    spacing_m: float
    window_span: int | None
    arch: ArchSpec
    spec: TrainSpec
    norm: Normalization
    bathy_basis: PcaBasis | None
    vel_basis: PcaBasis | None
    encoder: Sequential | None
    mu_head: Sequential | None
    logvar_head: Sequential | None
    decoder: Sequential | None
    dnn: Sequential | None
    sampler: ReparamGaussian | None = None
    history: list = field(default_factory=list)

    # ----------------------------------------------------------------- util

    @property
    def n_across(self):
        return self.grid_shape[0]

    @property
    def n_along(self):
        return self.grid_shape[1]

    @property
    def is_latent_variant(self) -> bool:
        return self.variant in ("linear", "pca_dnn")

    @property
    def bc_width(self) -> int:
        return 2 if self.scope == "global" else 3  # local adds distance d

    def modules(self) -> list[Sequential]:
        mods = []
        for m in (self.encoder, self.mu_head, self.logvar_head, self.decoder, self.dnn):
            if m is not None:
                mods.append(m)
        return mods

    def _window_hw(self) -> tuple:
        if self.scope == "global":
            return self.grid_shape[0], self.grid_shape[1]
        return self.grid_shape[0], self.window_span

    # ------------------------------------------------------------- encoding

    def encode_latent(self, x: np.ndarray) -> np.ndarray:
        """Latent coordinates of bathymetry vectors (n, M) -> (n, L).

        For PCA variants these are raw projection coefficients; for
        encoder variants the deterministic bottleneck output (the mean,
        for the probabilistic variant).
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.is_latent_variant:
            return project(self.bathy_basis, x)
        if self.scope == "local":
            feat = self.encoder.forward(self.norm.norm_in(x), train=False)
        else:
            ny, nx = self._window_hw()
            grids = self.norm.norm_in(x).reshape(-1, 1, nx, ny).transpose(0, 1, 3, 2)
            feat = self.encoder.forward(np.ascontiguousarray(grids), train=False)
        return self.mu_head.forward(feat, train=False)

    def decode_latent(self, z: np.ndarray, bc: np.ndarray) -> np.ndarray:
        """Map latents plus (already physical) BC rows to output vectors.

        ``bc`` rows carry (q, zf) for global scope and (q, zf, d) for local.
        """
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        bc = np.atleast_2d(np.asarray(bc, dtype=np.float64))
        bc_n = self.norm.norm_bc(bc)
        if self.is_latent_variant:
            z_n = self.norm.norm_in(z)
            out_n = self.dnn.forward(np.hstack([z_n, bc_n]), train=False)
            return reconstruct(self.vel_basis, self.norm.denorm_out(out_n))
        dec_in = np.hstack([z, bc_n])
        out = self.decoder.forward(dec_in, train=False)
        if self.scope == "global":
            out = out.reshape(out.shape[0], 1, *self._window_hw())
            vecs = out[:, 0].transpose(0, 2, 1).reshape(out.shape[0], -1)
        else:
            vecs = out
        return self.denorm_output_vectors(vecs)

    def denorm_output_vectors(self, vecs: np.ndarray) -> np.ndarray:
        return self.norm.denorm_out(vecs)

    # ------------------------------------------------------------ prediction

    def predict_vectors(self, x: np.ndarray, bc: np.ndarray) -> np.ndarray:
        """Batch prediction in canonical vector space (denormalized)."""
        z = self.encode_latent(x)
        return self.decode_latent(z, bc)

    def predict(self, bathy: ScalarField, bc: BoundaryCondition) -> ScalarField:
        if self.scope != "global":
            raise ValueError("predict() is for global models; see predict_segment")
        if (bathy.grid.n_across, bathy.grid.n_along) != self.grid_shape:
            raise ValueError("bathymetry grid does not match the trained model")
        vec = self.predict_vectors(bathy.to_vector()[None, :],
                                   np.array([[bc.discharge_q, bc.stage_zf]]))[0]
        return ScalarField.from_vector(bathy.grid, vec)

    def predict_windows(self, wins: np.ndarray, bc: BoundaryCondition,
                        dists: np.ndarray) -> np.ndarray:
        """Window vectors (n, ny*span) + distances -> predicted windows."""
        n = wins.shape[0]
        bc_rows = np.column_stack([
            np.full(n, bc.discharge_q), np.full(n, bc.stage_zf),
            np.asarray(dists, dtype=np.float64),
        ])
        return self.predict_vectors(wins, bc_rows)

    # ---------------------------------------------------------- persistence

    def layer_descriptor(self) -> dict:
        def describe(seq):
            if seq is None:
                return None
            out = []
            for layer in seq.layers:
                if isinstance(layer, Dense):
                    out.append({"kind": "dense", "n_in": layer.n_in, "n_out": layer.n_out})
                elif isinstance(layer, Conv2D):
                    out.append({"kind": "conv", "c_in": layer.c_in, "c_out": layer.c_out,
                                "k": layer.k, "stride": layer.stride})
                elif isinstance(layer, ConvTranspose2D):
                    out.append({"kind": "convT", "c_in": layer.c_in, "c_out": layer.c_out,
                                "k": layer.k, "stride": layer.stride,
                                "out_hw": list(layer.out_hw)})
                elif isinstance(layer, BatchNorm):
                    out.append({"kind": "batchnorm", "n": layer.n_features})
                elif isinstance(layer, Activation):
                    out.append({"kind": "activation", "fn": layer.kind})
                elif isinstance(layer, Flatten):
                    out.append({"kind": "flatten"})
                elif isinstance(layer, Reshape):
                    out.append({"kind": "reshape", "shape": list(layer.shape)})
                else:
                    raise TrainingError(f"unknown layer {type(layer).__name__}")
            return out
        return {name: describe(getattr(self, name))
                for name in ("encoder", "mu_head", "logvar_head", "decoder", "dnn")}


def build_sequential(desc: list, rng) -> Sequential:
    layers = []
    for cfg in desc:
        kind = cfg["kind"]
        if kind == "dense":
            layers.append(Dense(cfg["n_in"], cfg["n_out"], rng))
        elif kind == "conv":
            layers.append(Conv2D(cfg["c_in"], cfg["c_out"], cfg["k"], cfg["stride"], rng))
        elif kind == "convT":
            layers.append(ConvTranspose2D(cfg["c_in"], cfg["c_out"], cfg["k"],
                                          cfg["stride"], tuple(cfg["out_hw"]), rng))
        elif kind == "batchnorm":
            layers.append(BatchNorm(cfg["n"]))
        elif kind == "activation":
            layers.append(Activation(cfg["fn"]))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "reshape":
            layers.append(Reshape(tuple(cfg["shape"])))
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return Sequential(layers)


def _collect_arrays(model: SurrogateModel) -> dict[str, np.ndarray]:
    arrays = {}
    for mod_name in ("encoder", "mu_head", "logvar_head", "decoder", "dnn"):
        seq = getattr(model, mod_name)
        if seq is None:
            continue
        for i, layer in enumerate(seq.layers):
            for pname in sorted(layer.params):
                arrays[f"{mod_name}.{i}.{pname}"] = layer.params[pname]
            if isinstance(layer, BatchNorm):
                arrays[f"{mod_name}.{i}.running_mean"] = layer.running_mean
                arrays[f"{mod_name}.{i}.running_var"] = layer.running_var
    for basis_name in ("bathy_basis", "vel_basis"):
        basis = getattr(model, basis_name)
        if basis is not None:
            arrays[f"{basis_name}.components"] = basis.components
            arrays[f"{basis_name}.mean"] = basis.mean
            arrays[f"{basis_name}.singular_values"] = basis.singular_values
    for stat in ("in_mean", "in_std", "bc_mean", "bc_std", "out_mean", "out_std"):
        arrays[f"norm.{stat}"] = np.atleast_1d(getattr(model.norm, stat))
    return arrays


def save_model(model: SurrogateModel, path) -> None:
    """Text header (architecture, statistics, spec) + float64 payload."""
    arrays = _collect_arrays(model)
    manifest, offset = [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": 1,
        "variant": model.variant,
        "scope": model.scope,
        "target": model.target,
        "latent_dim": model.latent_dim,
        "grid_shape": list(model.grid_shape),
        "spacing_m": model.spacing_m,
        "window_span": model.window_span,
        "arch": {**asdict(model.arch),
                 "dnn_hidden": list(model.arch.dnn_hidden),
                 "conv_channels": list(model.arch.conv_channels),
                 "local_dnn_hidden": list(model.arch.local_dnn_hidden),
                 "local_enc_hidden": list(model.arch.local_enc_hidden)},
        "train_spec": asdict(model.spec),
        "layers": model.layer_descriptor(),
        "history": model.history,
        "arrays": manifest,
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(b"end_header\n")
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype=np.float64).tobytes())


def load_model(path) -> SurrogateModel:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        header = json.loads(fh.readline().decode("ascii"))
        tail = fh.readline().decode("ascii").strip()
        if tail != "end_header":
            raise ValueError("malformed checkpoint header")
        raw = np.frombuffer(fh.read(), dtype=np.float64)
    arrays = {}
    for entry in header["arrays"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = raw[entry["offset"]:entry["offset"] + size].reshape(
            entry["shape"]
        )
    rng = make_rng(0)
    seqs = {}
    for mod_name, desc in header["layers"].items():
        if desc is None:
            seqs[mod_name] = None
            continue
        seq = build_sequential(desc, rng)
        for i, layer in enumerate(seq.layers):
            for pname in sorted(layer.params):
                layer.params[pname] = arrays[f"{mod_name}.{i}.{pname}"].copy()
            layer.zero_grads()
            if isinstance(layer, BatchNorm):
                layer.running_mean = arrays[f"{mod_name}.{i}.running_mean"].copy()
                layer.running_var = arrays[f"{mod_name}.{i}.running_var"].copy()
        seqs[mod_name] = seq

    def basis_or_none(prefix):
        if f"{prefix}.components" not in arrays:
            return None
        return PcaBasis(arrays[f"{prefix}.components"], arrays[f"{prefix}.mean"],
                        arrays[f"{prefix}.singular_values"])

    norm = Normalization(*(arrays[f"norm.{k}"].copy() for k in
                           ("in_mean", "in_std", "bc_mean", "bc_std",
                            "out_mean", "out_std")))
    arch_kw = dict(header["arch"])
    for key in ("dnn_hidden", "conv_channels", "local_dnn_hidden", "local_enc_hidden"):
        arch_kw[key] = tuple(arch_kw[key])
    model = SurrogateModel(
        variant=header["variant"], scope=header["scope"], target=header["target"],
        latent_dim=header["latent_dim"], grid_shape=tuple(header["grid_shape"]),
        spacing_m=header["spacing_m"], window_span=header["window_span"],
        arch=ArchSpec(**arch_kw), spec=TrainSpec(**header["train_spec"]), norm=norm,
        bathy_basis=basis_or_none("bathy_basis"), vel_basis=basis_or_none("vel_basis"),
        encoder=seqs["encoder"], mu_head=seqs["mu_head"],
        logvar_head=seqs["logvar_head"], decoder=seqs["decoder"], dnn=seqs["dnn"],
        history=header.get("history", []),
    )
    if model.variant == "sve":
        model.sampler = ReparamGaussian(make_rng(model.spec.seed, "reparam"))
    return model


def default_grid_for(model: SurrogateModel) -> RiverGrid:
    return make_bend_grid(model.n_across, model.n_along, model.spacing_m)
