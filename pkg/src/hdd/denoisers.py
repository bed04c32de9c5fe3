"""Denoiser implementations for the hierarchical sampler.

A denoiser predicts the per-pixel noise in a full-resolution field given
the noise level, the latent shape the field was lifted from, and a
coarse conditioning field.  Two concrete denoisers are provided: an
analytic posterior-mean oracle for isotropic Gaussian data (exact, used
as a correctness reference) and a small convolutional network with
hand-written gradients that is cheap enough to train on a single core.
"""

from __future__ import annotations

import abc
import json
import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import rng as _rng
from .grid import Grid, Shape

__all__ = [
    "Denoiser",
    "GaussianOracleDenoiser",
    "ToyDenoiser",
    "write_checkpoint",
    "read_checkpoint",
    "CheckpointError",
]

_CKPT_MAGIC = b"HDDM"
_CKPT_VERSION = 1


class Denoiser(abc.ABC):
    """Noise-estimate interface: predict eps from a lifted noisy field.

    Implementations must be deterministic functions of their inputs and
    return a grid with the same shape as ``x_tilde``.
    """

    #: number of channels in the predicted noise field
    channels: int

    @abc.abstractmethod
    def predict(self, x_tilde: Grid, sigma: float, shape: Shape, conditioning: Grid | None) -> Grid:
        """Estimate the standard-normal noise component of ``x_tilde``.

        ``x_tilde`` is at full resolution; ``shape`` is the latent
        resolution it was upsampled from; ``conditioning`` is the
        upsampled coarse input (ignored by unconditional denoisers).
        """


class GaussianOracleDenoiser(Denoiser):
    """Exact noise predictor for data drawn from N(mu, sigma_data^2 I).

    For Gaussian data the posterior mean under additive noise sigma is
    closed-form, ``D(x; sigma) = (sigma_data^2 x + sigma^2 mu) /
    (sigma_data^2 + sigma^2)``, and the implied noise estimate is
    ``(x - D) / sigma``.  Used as a correctness oracle for the samplers.
    """

    def __init__(self, mu: Grid, sigma_data: float):
        if sigma_data <= 0:
            raise ValueError("sigma_data must be positive")
        self.mu = mu
        self.sigma_data = float(sigma_data)
        self.channels = mu.channels

    def posterior_mean(self, x: np.ndarray, sigma: float) -> np.ndarray:
        sd2 = self.sigma_data**2
        return (sd2 * x + sigma**2 * self.mu.data) / (sd2 + sigma**2)

    def predict(self, x_tilde: Grid, sigma: float, shape: Shape, conditioning: Grid | None) -> Grid:
        if sigma <= 0:
            raise ValueError("oracle prediction requires sigma > 0")
        if x_tilde.data.shape != self.mu.data.shape:
            raise ValueError(
                f"oracle built for {self.mu.data.shape}, got field {x_tilde.data.shape}"
            )
        d = self.posterior_mean(x_tilde.data, sigma)
        return x_tilde.with_data((x_tilde.data - d) / sigma)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _im2col(x: np.ndarray) -> np.ndarray:
    """(c, h, w) -> (h*w, c*9) patch matrix for a 3x3 kernel, zero pad 1."""
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (c, h, w, 3, 3)
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * 9)


def _conv3x3(x: np.ndarray, weight: np.ndarray, bias) -> tuple[np.ndarray, np.ndarray]:
    """Same-size 3x3 cross-correlation; returns (output, patch matrix)."""
    co = weight.shape[0]
    h, w = x.shape[1:]
    cols = _im2col(x)
    y = cols @ weight.reshape(co, -1).T
    if bias is not None:
        y += bias
    return y.T.reshape(co, h, w), cols


def _conv3x3_input_grad(dout: np.ndarray, weight: np.ndarray) -> np.ndarray:
    # gradient through a same-size zero-padded correlation is the
    # correlation of dout with the spatially flipped, axis-swapped kernel
    wback = weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    dx, _ = _conv3x3(dout, np.ascontiguousarray(wback), None)
    return dx


class ToyDenoiser(Denoiser):
    """Three-layer 3x3 convnet noise predictor with explicit gradients.

    Input stack: the noisy field scaled by 1/sqrt(sigma^2 + sigma_data^2),
    the conditioning channels, and three constant channels carrying
    log(sigma)/4 and the latent shape fractions h_t/H, w_t/W.  Hidden
    activations are softplus; the output layer is linear.  Parameter
    count depends only on (channels, width).

    The network output F is combined with a fixed noise-level-dependent
    skip, ``eps_hat = sigma/(sigma^2+sd^2) * (x - c) - sd/sqrt(sigma^2 +
    sd^2) * F`` where c is the conditioning field (when its channel count
    matches the target's, else zero).  The implied clean-field estimate
    therefore defaults to the conditioning at high noise and to the noisy
    field itself at low noise, leaving F an O(1) residual target at every
    noise level.  The scalings hold no trainable parameters.
    """

    def __init__(self, target_channels: int, cond_channels: int, width: int = 32,
                 sigma_data: float = 0.5, seed: int = 0):
        if target_channels < 1 or cond_channels < 0 or width < 1:
            raise ValueError("invalid architecture sizes")
        if sigma_data <= 0:
            raise ValueError("sigma_data must be positive")
        self.channels = int(target_channels)
        self.cond_channels = int(cond_channels)
        self.width = int(width)
        self.sigma_data = float(sigma_data)
        cin = self.channels + self.cond_channels + 3
        g = _rng.generator(seed, "toy-denoiser-init")
        self.params = [
            g.standard_normal((width, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9)),
            np.zeros(width),
            g.standard_normal((width, width, 3, 3)) * np.sqrt(2.0 / (width * 9)),
            np.zeros(width),
            g.standard_normal((self.channels, width, 3, 3)) * np.sqrt(2.0 / (width * 9)) * 1e-2,
            np.zeros(self.channels),
        ]

    # -- parameter vector plumbing ------------------------------------

    @property
    def input_channels(self) -> int:
        return self.channels + self.cond_channels + 3

    def param_count(self) -> int:
        return sum(p.size for p in self.params)

    def params_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_params_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.param_count():
            raise ValueError(f"expected {self.param_count()} parameters, got {vec.size}")
        pos = 0
        for i, p in enumerate(self.params):
            self.params[i] = vec[pos : pos + p.size].reshape(p.shape).copy()
            pos += p.size

    # -- forward / backward -------------------------------------------

    def _stack(self, x: np.ndarray, sigma: float, shape: Shape, cond: np.ndarray | None) -> np.ndarray:
        _, h, w = x.shape
        scale = 1.0 / np.sqrt(sigma**2 + self.sigma_data**2)
        planes = [x * scale]
        if self.cond_channels:
            if cond is None or cond.shape[0] != self.cond_channels:
                raise ValueError(f"denoiser expects {self.cond_channels} conditioning channels")
            if cond.shape[1:] != (h, w):
                raise ValueError("conditioning must match the full field resolution")
            planes.append(cond)
        planes.append(np.full((3, h, w), 0.0))
        stacked = np.concatenate(planes, axis=0)
        stacked[-3] = np.log(sigma) / 4.0
        stacked[-2] = shape.h / h
        stacked[-1] = shape.w / w
        return stacked

    def _forward(self, x_in: np.ndarray):
        w1, b1, w2, b2, w3, b3 = self.params
        z1, cols1 = _conv3x3(x_in, w1, b1)
        a1 = _softplus(z1)
        z2, cols2 = _conv3x3(a1, w2, b2)
        a2 = _softplus(z2)
        out, cols3 = _conv3x3(a2, w3, b3)
        return out, (z1, cols1, z2, cols2, cols3)

    def _out_scales(self, sigma: float):
        sd2 = self.sigma_data**2
        skip = sigma / (sigma**2 + sd2)
        gain = self.sigma_data / np.sqrt(sigma**2 + sd2)
        return skip, gain

    def _skip_base(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        if cond is not None and cond.shape[0] == x.shape[0]:
            return x - cond
        return x

    def forward_array(self, x: np.ndarray, sigma: float, shape: Shape, cond: np.ndarray | None) -> np.ndarray:
        f_out, _ = self._forward(self._stack(x, sigma, shape, cond))
        skip, gain = self._out_scales(sigma)
        return skip * self._skip_base(x, cond) - gain * f_out

    def _backward(self, cache, dout: np.ndarray):
        w1, b1, w2, b2, w3, b3 = self.params
        z1, cols1, z2, cols2, cols3 = cache
        g3 = dout.reshape(dout.shape[0], -1)
        dw3 = (g3 @ cols3).reshape(w3.shape)
        db3 = g3.sum(axis=1)
        da2 = _conv3x3_input_grad(dout, w3)
        g2m = da2 * _sigmoid(z2)
        g2 = g2m.reshape(g2m.shape[0], -1)
        dw2 = (g2 @ cols2).reshape(w2.shape)
        db2 = g2.sum(axis=1)
        da1 = _conv3x3_input_grad(g2m, w2)
        g1m = da1 * _sigmoid(z1)
        g1 = g1m.reshape(g1m.shape[0], -1)
        dw1 = (g1 @ cols1).reshape(w1.shape)
        db1 = g1.sum(axis=1)
        return [dw1, db1, dw2, db2, dw3, db3]

    def loss_and_grad(self, x: np.ndarray, sigma: float, shape: Shape,
                      cond: np.ndarray | None, eps: np.ndarray, weight: float):
        """Weighted mean-squared noise-prediction loss and parameter grads."""
        f_out, cache = self._forward(self._stack(x, sigma, shape, cond))
        skip, gain = self._out_scales(sigma)
        resid = (skip * self._skip_base(x, cond) - gain * f_out) - eps
        n = resid.size
        loss = weight * float(np.mean(resid**2))
        grads = self._backward(cache, (-gain * 2.0 * weight / n) * resid)
        return loss, grads

    def predict(self, x_tilde: Grid, sigma: float, shape: Shape, conditioning: Grid | None) -> Grid:
        if sigma <= 0:
            raise ValueError("prediction requires sigma > 0")
        cond = conditioning.data if conditioning is not None else None
        if x_tilde.channels != self.channels:
            raise ValueError(f"denoiser predicts {self.channels} channels, got {x_tilde.channels}")
        out = self.forward_array(x_tilde.data, float(sigma), shape, cond)
        return x_tilde.with_data(out)


class CheckpointError(ValueError):
    """Raised for malformed or mismatched checkpoint files."""


def write_checkpoint(f: ToyDenoiser, destination, metadata: dict | None = None) -> None:
    """Serialize a toy denoiser (f32 parameters + JSON metadata)."""
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _CKPT_MAGIC
    blob += struct.pack("<H", _CKPT_VERSION)
    blob += struct.pack("<III", f.channels, f.cond_channels, f.width)
    blob += struct.pack("<d", f.sigma_data)
    blob += struct.pack("<Q", f.param_count())
    blob += f.params_vector().astype("<f4").tobytes()
    blob += meta
    if hasattr(destination, "write"):
        destination.write(bytes(blob))
    else:
        with open(destination, "wb") as fh:
            fh.write(bytes(blob))


def read_checkpoint(source) -> tuple[ToyDenoiser, dict]:
    """Load a toy denoiser checkpoint; returns (denoiser, metadata)."""
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    if blob[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tc, cc, width = struct.unpack_from("<III", blob, 6)
    (sigma_data,) = struct.unpack_from("<d", blob, 18)
    (count,) = struct.unpack_from("<Q", blob, 26)
    start = 34
    end = start + 4 * count
    if end > len(blob):
        raise CheckpointError("checkpoint truncated inside parameter block")
    f = ToyDenoiser(tc, cc, width=width, sigma_data=sigma_data)
    if count != f.param_count():
        raise CheckpointError(
            f"parameter count {count} does not match architecture ({f.param_count()})"
        )
    vec = np.frombuffer(blob[start:end], dtype="<f4").astype(np.float64)
    f.set_params_vector(vec)
    try:
        meta = json.loads(blob[end:].decode("utf-8")) if len(blob) > end else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint metadata: {exc}") from exc
    return f, meta
