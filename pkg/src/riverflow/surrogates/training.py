"""Training orchestration for global and local surrogate variants.

All variants train against mean-squared error in the normalized network
output space, plus an L2 weight penalty; the probabilistic variant adds a
KL term at the bottleneck. Validation loss is evaluated every epoch in
eval mode and the returned model carries the parameters of the best
validation epoch.
"""

from __future__ import annotations

import numpy as np

from ..dataset import SampleSet
from ..nn import ReparamGaussian
from ..nn.losses import kl_standard_normal, l2_penalty, mse_loss
from ..nn.optim import make_optimizer
from ..seeding import make_rng
from .models import (
    ArchSpec,
    Normalization,
    SurrogateModel,
    TrainingError,
    TrainSpec,
    _activation_stack,
    _conv_decoder,
    _conv_encoder,
)
from .pca import fit_pca, incremental_fit_pca, project
from .windows import expand_to_windows
from ..nn.layers import Dense, Sequential

LOCAL_PCA_BLOCK = 4096


def _build_model(variant, scope, target, latent_dim, grid_shape, spacing_m,
                 window_span, arch, spec, norm, bathy_basis, vel_basis) -> SurrogateModel:
    rng = make_rng(spec.seed, "init", variant, scope, target)
    bc_width = 2 if scope == "global" else 3
    encoder = mu_head = logvar_head = decoder = dnn = None
    if variant in ("linear", "pca_dnn"):
        n_in = latent_dim + bc_width
        if variant == "linear":
            dnn = Sequential([Dense(n_in, latent_dim, rng)])
        elif scope == "global":
            dnn = _activation_stack(arch.dnn_hidden, n_in, rng,
                                    arch.use_batchnorm, latent_dim)
        else:
            dnn = _activation_stack(arch.local_dnn_hidden, n_in, rng,
                                    arch.use_batchnorm, latent_dim)
    else:
        if scope == "global":
            hw = grid_shape
            encoder, feat, shapes = _conv_encoder(hw, arch.conv_channels,
                                                  arch.kernel_size, rng)
            decoder = _conv_decoder(shapes, arch.conv_channels, arch.kernel_size,
                                    rng, latent_dim + bc_width)
        else:
            m = grid_shape[0] * window_span
            enc_layers = _activation_stack(arch.local_enc_hidden, m, rng,
                                           arch.use_batchnorm, arch.local_enc_hidden[-1])
            # drop the trailing linear projection; feature width is the last hidden
            encoder = Sequential(enc_layers.layers[:-2])
            feat = arch.local_enc_hidden[-1]
            decoder = _activation_stack(tuple(reversed(arch.local_enc_hidden)),
                                        latent_dim + bc_width, rng,
                                        arch.use_batchnorm, m)
        mu_head = Sequential([Dense(feat, latent_dim, rng)])
        if variant == "sve":
            logvar_head = Sequential([Dense(feat, latent_dim, rng)])
    model = SurrogateModel(
        variant=variant, scope=scope, target=target, latent_dim=latent_dim,
        grid_shape=tuple(grid_shape), spacing_m=spacing_m, window_span=window_span,
        arch=arch, spec=spec, norm=norm, bathy_basis=bathy_basis,
        vel_basis=vel_basis, encoder=encoder, mu_head=mu_head,
        logvar_head=logvar_head, decoder=decoder, dnn=dnn,
    )
    if variant == "sve":
        model.sampler = ReparamGaussian(make_rng(spec.seed, "reparam"))
    return model


class _Trainer:
    """Variant-agnostic mini-batch loop over prepared network-facing arrays."""

    def __init__(self, model: SurrogateModel, spec: TrainSpec):
        self.model = model
        self.spec = spec
        self.optimizer = make_optimizer(spec.optimizer, spec.learning_rate, spec.decay)

    # -- plumbing ----------------------------------------------------------

    def _params_and_grads(self):
        params, grads = [], []
        for mod in self.model.modules():
            for layer in mod.layers:
                layer.zero_grads()
                for name in sorted(layer.params):
                    params.append(layer.params[name])
                    grads.append(layer.grads[name])
        return params, grads

    def _snapshot(self):
        state = []
        for mod in self.model.modules():
            for layer in mod.layers:
                entry = {name: layer.params[name].copy() for name in layer.params}
                if hasattr(layer, "running_mean"):
                    entry["__rm"] = layer.running_mean.copy()
                    entry["__rv"] = layer.running_var.copy()
                state.append(entry)
        return state

    def _restore(self, state):
        i = 0
        for mod in self.model.modules():
            for layer in mod.layers:
                entry = state[i]
                for name in layer.params:
                    layer.params[name][...] = entry[name]
                if hasattr(layer, "running_mean"):
                    layer.running_mean[...] = entry["__rm"]
                    layer.running_var[...] = entry["__rv"]
                i += 1

    # -- forward/backward per variant ---------------------------------------

    def _forward(self, xb, bcb, train):
        model = self.model
        if model.is_latent_variant:
            return model.dnn.forward(np.hstack([xb, bcb]), train)
        feat = model.encoder.forward(xb, train)
        if model.variant == "sve":
            mu = model.mu_head.forward(feat, train)
            logvar = model.logvar_head.forward(feat, train)
            self._mu, self._logvar = mu, logvar
            z = model.sampler.forward(mu, logvar) if train else mu
        else:
            z = model.mu_head.forward(feat, train)
        out = model.decoder.forward(np.hstack([z, bcb]), train)
        if model.scope == "global":
            out = out.reshape(out.shape[0], -1)
        return out

    def _backward(self, dout, kl_weight):
        model = self.model
        if model.is_latent_variant:
            model.dnn.backward(dout)
            return
        ddec_in = model.decoder.backward(
            dout.reshape(-1, *self._dec_out_shape) if model.scope == "global" else dout
        )
        dz = ddec_in[:, :model.latent_dim]
        if model.variant == "sve":
            dmu, dlogvar = model.sampler.backward(dz)
            kl, dmu_kl, dlv_kl = kl_standard_normal(self._mu, self._logvar)
            dfeat = model.mu_head.backward(dmu + kl_weight * dmu_kl)
            dfeat = dfeat + model.logvar_head.backward(dlogvar + kl_weight * dlv_kl)
        else:
            dfeat = model.mu_head.backward(dz)
        model.encoder.backward(dfeat)

    def _batch_loss(self, xb, bcb, yb, train):
        pred = self._forward(xb, bcb, train)
        loss, dpred = mse_loss(pred, yb)
        if train:
            for mod in self.model.modules():
                mod.zero_grads()
            self._backward(dpred, self.spec.kl_weight)
            loss += l2_penalty(self.model.modules(), self.spec.l2_coeff)
            if self.model.variant == "sve":
                kl, _, _ = kl_standard_normal(self._mu, self._logvar)
                loss += self.spec.kl_weight * kl
        return loss

    # -- the loop ------------------------------------------------------------

    def fit(self, x_tr, bc_tr, y_tr, x_val, bc_val, y_val):
        spec = self.spec
        model = self.model
        if model.scope == "global" and not model.is_latent_variant:
            self._dec_out_shape = (1, model.n_across, model.n_along)
        n = x_tr.shape[0]
        shuffle_rng = make_rng(spec.seed, "shuffle", model.variant, model.scope,
                               model.target)
        params, grads = self._params_and_grads()
        best_val, best_state, step = np.inf, None, 0
        batch = n if spec.optimizer == "gd" else spec.batch_size
        for epoch in range(spec.epochs):
            order = shuffle_rng.permutation(n)
            train_losses = []
            for lo in range(0, n, batch):
                idx = order[lo:lo + batch]
                loss = self._batch_loss(x_tr[idx], bc_tr[idx], y_tr[idx], train=True)
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, step {step} "
                        f"(variant={model.variant}, scope={model.scope})"
                    )
                self.optimizer.step(params, grads, step)
                step += 1
                train_losses.append(loss)
            val_loss = self.evaluate(x_val, bc_val, y_val)
            model.history.append({
                "epoch": epoch,
                "train_loss": float(np.mean(train_losses)),
                "val_loss": float(val_loss),
            })
            if val_loss < best_val:
                best_val = val_loss
                best_state = self._snapshot()
        if best_state is not None:
            self._restore(best_state)
        return model

    def evaluate(self, x, bc, y, batch: int = 256) -> float:
        losses, weights = [], []
        for lo in range(0, x.shape[0], batch):
            pred = self._forward(x[lo:lo + batch], bc[lo:lo + batch], train=False)
            loss, _ = mse_loss(pred, y[lo:lo + batch])
            losses.append(loss)
            weights.append(x[lo:lo + batch].shape[0])
        return float(np.average(losses, weights=weights))


def _canonical_latent_order(model: SurrogateModel, x_train: np.ndarray):
    """Permute encoder-variant latent dimensions by decreasing activity.

    A pure relabeling: the latent head's output coordinates and the
    decoder's matching input rows are permuted together, which leaves
    every prediction unchanged but gives the latent space a stable,
    energy-ranked ordering like the PCA variants have.
    """
    if model.is_latent_variant:
        return
    z = model.encode_latent(x_train)
    order = np.argsort(-z.std(axis=0), kind="stable")
    heads = [model.mu_head]
    if model.logvar_head is not None:
        heads.append(model.logvar_head)
    for head in heads:
        dense = head.layers[-1]
        dense.params["w"] = np.ascontiguousarray(dense.params["w"][:, order])
        dense.params["b"] = np.ascontiguousarray(dense.params["b"][order])
        dense.zero_grads()
    first = model.decoder.layers[0]
    w = first.params["w"]
    w[:model.latent_dim] = w[:model.latent_dim][order]
    first.zero_grads()


def _prepare_global(samples: SampleSet, target: str, latent_dim: int, variant: str):
    x_tr, bc_tr, y_tr = samples.arrays("train", target)
    x_val, bc_val, y_val = samples.arrays("validation", target)
    grid = samples.grid
    if variant in ("linear", "pca_dnn"):
        bathy_basis = fit_pca(x_tr, latent_dim)
        vel_basis = fit_pca(y_tr, latent_dim)
        zx_tr, zy_tr = project(bathy_basis, x_tr), project(vel_basis, y_tr)
        norm = Normalization.from_arrays(zx_tr, bc_tr, zy_tr)
        net_x = (norm.norm_in(zx_tr), norm.norm_in(project(bathy_basis, x_val)))
        net_y = (norm.norm_out(zy_tr), norm.norm_out(project(vel_basis, y_val)))
    else:
        bathy_basis = vel_basis = None
        norm = Normalization.from_arrays(x_tr, bc_tr, y_tr)

        def to_grid(a):
            # canonical (across-fastest) vectors -> (n, 1, ny, nx) grids
            return np.ascontiguousarray(
                a.reshape(-1, 1, grid.n_along, grid.n_across).transpose(0, 1, 3, 2)
            )

        net_x = (to_grid(norm.norm_in(x_tr)), to_grid(norm.norm_in(x_val)))
        # targets flattened in the decoder's grid layout so MSE pairs nodes
        net_y = (to_grid(norm.norm_out(y_tr)).reshape(len(y_tr), -1),
                 to_grid(norm.norm_out(y_val)).reshape(len(y_val), -1))
    bc_n = (norm.norm_bc(bc_tr), norm.norm_bc(bc_val))
    return bathy_basis, vel_basis, norm, net_x, bc_n, net_y, x_tr


def train_global(samples: SampleSet, variant: str, spec: TrainSpec,
                 target: str = "magnitude", latent_dim: int = 50,
                 arch: ArchSpec | None = None) -> SurrogateModel:
    """Fit one global surrogate on the train split of a sample set."""
    arch = arch or ArchSpec()
    grid = samples.grid
    (bathy_basis, vel_basis, norm, (nx_tr, nx_val), (nbc_tr, nbc_val),
     (ny_tr, ny_val), x_tr_raw) = _prepare_global(samples, target, latent_dim, variant)
    model = _build_model(variant, "global", target, latent_dim,
                         (grid.n_across, grid.n_along), grid.spacing_m, None,
                         arch, spec, norm, bathy_basis, vel_basis)
    trainer = _Trainer(model, spec)
    trainer.fit(nx_tr, nbc_tr, ny_tr, nx_val, nbc_val, ny_val)
    _canonical_latent_order(model, x_tr_raw)
    return model


def train_local(samples: SampleSet, variant: str, spec: TrainSpec,
                target: str = "magnitude", latent_dim: int = 50,
                window_span: int = 16, arch: ArchSpec | None = None) -> SurrogateModel:
    """Fit one windowed local surrogate; the dataset expands to stride-1
    windows with the window distance appended to the BC inputs."""
    arch = arch or ArchSpec(use_batchnorm=True)
    grid = samples.grid
    x_tr, bc_tr, y_tr = samples.arrays("train", target)
    x_val, bc_val, y_val = samples.arrays("validation", target)

    def expand(x, bc, y):
        wx, d, idx = expand_to_windows(x, grid.n_across, grid.n_along, window_span)
        wy, _, _ = expand_to_windows(y, grid.n_across, grid.n_along, window_span)
        bc3 = np.column_stack([bc[idx], d])
        return wx, bc3, wy

    wx_tr, bc3_tr, wy_tr = expand(x_tr, bc_tr, y_tr)
    wx_val, bc3_val, wy_val = expand(x_val, bc_val, y_val)

    if variant in ("linear", "pca_dnn"):
        blocks = [wx_tr[i:i + LOCAL_PCA_BLOCK] for i in range(0, wx_tr.shape[0], LOCAL_PCA_BLOCK)]
        bathy_basis = incremental_fit_pca(blocks, latent_dim)
        vblocks = [wy_tr[i:i + LOCAL_PCA_BLOCK] for i in range(0, wy_tr.shape[0], LOCAL_PCA_BLOCK)]
        vel_basis = incremental_fit_pca(vblocks, latent_dim)
        zx_tr, zy_tr = project(bathy_basis, wx_tr), project(vel_basis, wy_tr)
        norm = Normalization.from_arrays(zx_tr, bc3_tr, zy_tr)
        nx_tr, ny_tr = norm.norm_in(zx_tr), norm.norm_out(zy_tr)
        nx_val = norm.norm_in(project(bathy_basis, wx_val))
        ny_val = norm.norm_out(project(vel_basis, wy_val))
    else:
        bathy_basis = vel_basis = None
        norm = Normalization.from_arrays(wx_tr, bc3_tr, wy_tr)
        nx_tr, ny_tr = norm.norm_in(wx_tr), norm.norm_out(wy_tr)
        nx_val, ny_val = norm.norm_in(wx_val), norm.norm_out(wy_val)
    nbc_tr, nbc_val = norm.norm_bc(bc3_tr), norm.norm_bc(bc3_val)

    model = _build_model(variant, "local", target, latent_dim,
                         (grid.n_across, grid.n_along), grid.spacing_m, window_span,
                         arch, spec, norm, bathy_basis, vel_basis)
    trainer = _Trainer(model, spec)
    trainer.fit(nx_tr, nbc_tr, ny_tr, nx_val, nbc_val, ny_val)
    _canonical_latent_order(model, wx_tr[:4096])
    return model
