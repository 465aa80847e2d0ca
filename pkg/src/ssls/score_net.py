"""Feed-forward score networks trained by denoising score matching.

The score of a particle ensemble's underlying density is estimated by
perturbing the (whitened) particles with Gaussian noise of level ``sigma``
and regressing the scaled noise:

    loss(s) = (1/m) * sum_i || sigma * s(z_i + sigma * eps_i) + eps_i ||^2

The minimizer of the population version of this objective is the score of
the Gaussian-smoothed ensemble density.  Everything here is plain NumPy with
hand-written backpropagation; networks are small (two hidden layers by
default) because the states of interest have at most a few dozen dimensions.

Ensembles are normalized to zero mean and unit per-dimension scale before
training.  The fitted network stores the affine transform and
:meth:`ScoreNetwork.forward` returns scores in the original coordinates, so
callers never deal with whitened quantities.  ``sigma`` is interpreted in
whitened units, keeping one smoothing level meaningful across problems of
different scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy.special import expit

Array = np.ndarray

ACTIVATIONS = ("sigmoid", "relu")

# Per-dimension scales below this are treated as degenerate and left at 1.
DEGENERATE_SCALE = 1e-8

_ACTIVATION_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


class TrainingDivergedError(RuntimeError):
    """Raised when score-matching training produces a non-finite loss."""


@dataclass
class TrainConfig:
    """Hyper-parameters for denoising score matching.

    Attributes
    ----------
    smoothing : float
        Noise level ``sigma`` of the Gaussian perturbation, in whitened
        units.
    epochs : int
        Number of passes over the ensemble.  Perturbation noise is resampled
        fresh at the start of every epoch.
    batch_size : int
        Minibatch size for Adam updates.
    learning_rate, adam_beta1, adam_beta2, adam_eps : float
        Adam optimizer settings.
    lr_schedule : {"cosine", "constant"}
        Per-epoch learning-rate schedule.  Cosine decay to zero removes the
        endpoint jitter of constant-rate Adam and is the default.
    warm_start : bool
        When a previously trained network is supplied to
        :func:`train_score`, reuse its weights instead of reinitializing.
    hidden : tuple of int
        Hidden-layer widths.  An empty tuple gives a single linear layer.
    activation : {"sigmoid", "relu"}
        Hidden-layer activation.
    """

    smoothing: float = 0.1
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_schedule: str = "cosine"
    warm_start: bool = True
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.smoothing <= 0:
            raise ValueError("smoothing level must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError("lr_schedule must be 'cosine' or 'constant'")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.hidden = tuple(int(w) for w in self.hidden)


@dataclass
class ScoreNetwork:
    """An MLP score estimator with its whitening transform.

    ``weights[l]`` has shape ``(out_l, in_l)`` and ``biases[l]`` shape
    ``(out_l,)``.  Input and output dimensions both equal the state
    dimension ``d``.  ``shift`` and ``scale`` are the per-dimension mean and
    standard deviation captured from the training ensemble.
    """

    weights: list[Array]
    biases: list[Array]
    activation: str
    shift: Array
    scale: Array

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.shift = np.asarray(self.shift, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.weights[0].shape[1] != self.dim or self.weights[-1].shape[0] != self.dim:
            raise ValueError("network input and output widths must equal the state dimension")

    @property
    def dim(self) -> int:
        """State dimension ``d``."""
        return self.shift.shape[0]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights) + (self.weights[-1].shape[0],)

    def _activate(self, t: Array) -> Array:
        if self.activation == "sigmoid":
            return expit(t)
        return np.maximum(t, 0.0)

    def raw(self, z: Array) -> Array:
        """Evaluate the network in whitened coordinates."""
        a = np.asarray(z, dtype=float)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = self._activate(a @ w.T + b)
        return a @ self.weights[-1].T + self.biases[-1]

    def forward(self, x: Array) -> Array:
        """Score estimate at ``x`` in original coordinates.

        With ``z = (x - shift) / scale`` the density change of variables
        under the diagonal affine map gives ``score(x) = raw(z) / scale``.
        Accepts shape ``(d,)`` or ``(n, d)``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {x.shape[-1]}")
        z = (x - self.shift) / self.scale
        return self.raw(z) / self.scale

    __call__ = forward

    def finite(self) -> bool:
        """True when every weight and bias is finite."""
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )

    def copy(self) -> "ScoreNetwork":
        return ScoreNetwork(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            shift=self.shift.copy(),
            scale=self.scale.copy(),
        )


def whiten(ensemble: Array) -> tuple[Array, Array, Array]:
    """Normalize an ensemble to zero mean and unit per-dimension scale.

    Uses the population convention (denominator ``n``) for the standard
    deviation.  Dimensions with scale below ``1e-8`` keep scale 1 so that
    constant coordinates pass through unchanged.

    Returns
    -------
    (whitened, shift, scale)
        The whitened ``(n, d)`` ensemble and the per-dimension mean and
        scale of the affine map ``z = (x - shift) / scale``.
    """
    ensemble = np.atleast_2d(np.asarray(ensemble, dtype=float))
    if ensemble.shape[0] < 2:
        raise ValueError("whitening needs at least 2 particles")
    shift = ensemble.mean(axis=0)
    scale = ensemble.std(axis=0)
    scale = np.where(scale < DEGENERATE_SCALE, 1.0, scale)
    return (ensemble - shift) / scale, shift, scale


def _forward_cached(net: ScoreNetwork, z: Array) -> tuple[Array, list[Array], list[Array]]:
    """Forward pass keeping pre-activations and activations for backprop."""
    acts = [np.asarray(z, dtype=float)]
    pres = []
    a = acts[0]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        pre = a @ w.T + b
        pres.append(pre)
        a = net._activate(pre)
        acts.append(a)
    out = a @ net.weights[-1].T + net.biases[-1]
    return out, pres, acts


def dsm_loss(net: ScoreNetwork, batch: Array, smoothing: float, noise: Array) -> float:
    """Empirical denoising score-matching loss on a whitened batch.

    ``(1/m) * sum_i || smoothing * net.raw(z_i + smoothing * eps_i) + eps_i ||^2``
    with one standard-normal draw per batch element.
    """
    if smoothing <= 0:
        raise ValueError("smoothing level must be positive")
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if noise.shape != batch.shape:
        raise ValueError("need exactly one noise draw per batch element")
    resid = smoothing * net.raw(batch + smoothing * noise) + noise
    return float(np.mean(np.sum(resid**2, axis=1)))


def dsm_loss_gradient(
    net: ScoreNetwork, batch: Array, smoothing: float, noise: Array
) -> tuple[float, list[Array], list[Array]]:
    """Loss and its exact gradient with respect to every weight and bias.

    Returns
    -------
    (loss, weight_grads, bias_grads)
        Gradient arrays match the shapes of ``net.weights`` / ``net.biases``.
    """
    if smoothing <= 0:
        raise ValueError("smoothing level must be positive")
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    if batch.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if noise.shape != batch.shape:
        raise ValueError("need exactly one noise draw per batch element")
    m = batch.shape[0]

    perturbed = batch + smoothing * noise
    out, pres, acts = _forward_cached(net, perturbed)
    resid = smoothing * out + noise
    loss = float(np.mean(np.sum(resid**2, axis=1)))

    n_layers = len(net.weights)
    weight_grads: list[Array] = [np.empty(0)] * n_layers
    bias_grads: list[Array] = [np.empty(0)] * n_layers

    # d loss / d out, then walk the layers backwards.
    delta = (2.0 * smoothing / m) * resid
    for l in range(n_layers - 1, -1, -1):
        weight_grads[l] = delta.T @ acts[l]
        bias_grads[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ net.weights[l]
            if net.activation == "sigmoid":
                a = acts[l]
                delta = delta * a * (1.0 - a)
            else:
                delta = delta * (pres[l - 1] > 0.0)
    return loss, weight_grads, bias_grads


def _init_layers(sizes: tuple[int, ...], rng: Generator) -> tuple[list[Array], list[Array]]:
    """Glorot-uniform weights, zero biases."""
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_score(
    ensemble: Array,
    config: TrainConfig,
    init: ScoreNetwork | None = None,
    rng: Generator | None = None,
) -> ScoreNetwork:
    """Fit a score network to an ensemble by denoising score matching.

    The ensemble is whitened and the affine transform is frozen into the
    returned network.  Training runs Adam over shuffled minibatches with
    perturbation noise redrawn every epoch.  When ``init`` is given and
    ``config.warm_start`` is set, optimization starts from ``init``'s
    weights (the whitening transform is still recomputed from the current
    ensemble); otherwise weights are freshly initialized.

    Raises
    ------
    TrainingDivergedError
        If the loss becomes non-finite at any minibatch.
    """
    if rng is None:
        rng = np.random.default_rng()
    ensemble = np.atleast_2d(np.asarray(ensemble, dtype=float))
    n, d = ensemble.shape
    if n < 2:
        raise ValueError("training needs at least 2 particles")

    whitened, shift, scale = whiten(ensemble)
    sizes = (d, *config.hidden, d)
    if init is not None and config.warm_start:
        if init.layer_sizes != sizes:
            raise ValueError(
                f"warm-start network has layer sizes {init.layer_sizes}, expected {sizes}"
            )
        weights = [w.copy() for w in init.weights]
        biases = [b.copy() for b in init.biases]
    else:
        weights, biases = _init_layers(sizes, rng)
    net = ScoreNetwork(
        weights=weights,
        biases=biases,
        activation=config.activation,
        shift=shift,
        scale=scale,
    )

    # Adam state, one slot per parameter array (weights first, then biases).
    params = net.weights + net.biases
    first_moment = [np.zeros_like(p) for p in params]
    second_moment = [np.zeros_like(p) for p in params]
    t = 0
    b1, b2 = config.adam_beta1, config.adam_beta2

    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            lr = config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * epoch / config.epochs))
        else:
            lr = config.learning_rate
        noise = rng.standard_normal((n, d))
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, w_grads, b_grads = dsm_loss_gradient(
                net, whitened[idx], config.smoothing, noise[idx]
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, batch offset {start}"
                )
            t += 1
            correction = np.sqrt(1.0 - b2**t) / (1.0 - b1**t)
            for p, g, m1, m2 in zip(params, w_grads + b_grads, first_moment, second_moment):
                m1 *= b1
                m1 += (1.0 - b1) * g
                m2 *= b2
                m2 += (1.0 - b2) * g**2
                p -= lr * correction * m1 / (np.sqrt(m2) + config.adam_eps)
    return net


def save_checkpoint(net: ScoreNetwork, path) -> None:
    """Dump a network to a flat little-endian binary file.

    Layout: an ``int64`` header ``[n_sizes, *layer_sizes, activation_code]``
    followed by ``float64`` payload ``shift, scale, W_0, b_0, W_1, b_1, ...``
    with weight matrices in row-major order.
    """
    sizes = net.layer_sizes
    header = np.array(
        [len(sizes), *sizes, _ACTIVATION_CODES[net.activation]], dtype="<i8"
    )
    payload = [net.shift, net.scale]
    for w, b in zip(net.weights, net.biases):
        payload.extend([w.ravel(), b])
    with open(path, "wb") as fh:
        header.tofile(fh)
        np.concatenate(payload).astype("<f8").tofile(fh)


def load_checkpoint(path) -> ScoreNetwork:
    """Inverse of :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        n_sizes = int(np.fromfile(fh, dtype="<i8", count=1)[0])
        sizes = tuple(int(s) for s in np.fromfile(fh, dtype="<i8", count=n_sizes))
        code = int(np.fromfile(fh, dtype="<i8", count=1)[0])
        flat = np.fromfile(fh, dtype="<f8")
    activation = ACTIVATIONS[code]
    d = sizes[0]
    pos = 0
    shift = flat[pos : pos + d]
    pos += d
    scale = flat[pos : pos + d]
    pos += d
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise ValueError(f"checkpoint has {flat.size - pos} unexpected trailing values")
    return ScoreNetwork(
        weights=weights,
        biases=biases,
        activation=activation,
        shift=shift.copy(),
        scale=scale.copy(),
    )
