"""Time-dependent data encoders producing x_t and its λ-derivative.

Three parameterizations:

    identity       x_t = x                                  (plain diffusion)
    nt             x_t = α_t² x                             (non-trainable)
    trainable      x_t = α_t² x + σ_t² y(x, λ_t)            (inner network y)

The trainable encoder's output layer is zero-initialized, so at initialization
it coincides with the non-trainable one bit-for-bit.  Exact λ-derivatives
(using dα²/dλ = α²σ²):

    d x_nt / dλ = α² σ² x
    d x_tr / dλ = α² σ² x + σ² dy/dλ − α² σ² y

dy/dλ is realized as a symmetric finite difference of the inner network with
step h = 1e-3 · |dλ/dt|, built from two ordinary forward passes so that
reverse-mode differentiation of any loss flows through the estimator without
second-order machinery.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError
from .nets import EncoderInnerNet
from .schedule import LogLinearSchedule, SchedulePoint

FD_REL_STEP = 1e-3

IDENTITY = "identity"
NON_TRAINABLE = "nt"
TRAINABLE = "trainable"
ENCODER_KINDS = (IDENTITY, NON_TRAINABLE, TRAINABLE)


class IdentityEncoder:
    """x_t = x for all t; the λ-derivative vanishes."""

    kind = IDENTITY
    trainable = False

    def __init__(self):
        self.calls = 0

    def encode(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        return np.asarray(x, dtype=np.float64).copy()

    def encode_dlambda(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def encode_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        return Tensor(self.encode(x, point))

    def encode_dlambda_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        return Tensor(self.encode_dlambda(x, point))


class NonTrainableEncoder:
    """x_t = α_t² x: damps the data towards zero as t -> 1."""

    kind = NON_TRAINABLE
    trainable = False

    def __init__(self):
        self.calls = 0

    def encode(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        return point.alpha_sq * np.asarray(x, dtype=np.float64)

    def encode_dlambda(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        return point.alpha_sq * point.sigma_sq * np.asarray(x, dtype=np.float64)

    def encode_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        return Tensor(self.encode(x, point))

    def encode_dlambda_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        return Tensor(self.encode_dlambda(x, point))


class TrainableEncoder:
    """x_t = α_t² x + σ_t² y(x, λ_t) with a learned inner network y."""

    kind = TRAINABLE
    trainable = True

    def __init__(self, inner_net: EncoderInnerNet):
        if inner_net is None:
            raise ConfigError("trainable encoder requires an inner network")
        self.inner = inner_net
        self.calls = 0

    def _fd_step(self, point: SchedulePoint) -> float:
        h = FD_REL_STEP * abs(point.lam_prime)
        return h if h > 0 else FD_REL_STEP

    # --- inner-network views -------------------------------------------

    def y_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        return self.inner.forward(np.atleast_2d(np.asarray(x, dtype=np.float64)), point.lam)

    def dy_dlambda_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        h = self._fd_step(point)
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y_plus = self.inner.forward(x2, point.lam + h)
        y_minus = self.inner.forward(x2, point.lam - h)
        return (y_plus - y_minus) * (0.5 / h)

    def y(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        out = self.y_t(x, point).data
        return out[0] if np.asarray(x).ndim == 1 else out

    def dy_dlambda(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        out = self.dy_dlambda_t(x, point).data
        return out[0] if np.asarray(x).ndim == 1 else out

    # --- encoder surface --------------------------------------------------

    def encode(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        x = np.asarray(x, dtype=np.float64)
        return point.alpha_sq * x + point.sigma_sq * self.y(x, point)

    def encode_dlambda(self, x: np.ndarray, point: SchedulePoint) -> np.ndarray:
        self.calls += 1
        x = np.asarray(x, dtype=np.float64)
        a2s2 = point.alpha_sq * point.sigma_sq
        return a2s2 * x + point.sigma_sq * self.dy_dlambda(x, point) - a2s2 * self.y(x, point)

    def encode_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        self.calls += 1
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = point.alpha_sq * Tensor(x2) + point.sigma_sq * self.y_t(x2, point)
        return out

    def encode_dlambda_t(self, x: np.ndarray, point: SchedulePoint) -> Tensor:
        self.calls += 1
        x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a2s2 = point.alpha_sq * point.sigma_sq
        return (a2s2 * Tensor(x2)
                + point.sigma_sq * self.dy_dlambda_t(x2, point)
                - a2s2 * self.y_t(x2, point))


Encoder = IdentityEncoder | NonTrainableEncoder | TrainableEncoder


def make_encoder(kind: str, inner_net: EncoderInnerNet | None = None) -> Encoder:
    if kind == IDENTITY:
        return IdentityEncoder()
    if kind == NON_TRAINABLE:
        return NonTrainableEncoder()
    if kind == TRAINABLE:
        if inner_net is None:
            raise ConfigError("encoder kind 'trainable' requires an inner network")
        return TrainableEncoder(inner_net)
    raise ConfigError(f"unknown encoder kind '{kind}'; expected one of {ENCODER_KINDS}")


def change_heatmap(
    encoder: Encoder,
    x: np.ndarray,
    schedule: LogLinearSchedule,
    s: float,
    t: float,
    channel_shape: tuple | None = None,
    sum_channels: bool = False,
) -> np.ndarray:
    """Finite-difference rate of change of the encoded data, (x_t − x_s)/(t − s).

    With sum_channels, the flat vector is reshaped to channel_shape (C, ...) and
    summed over the leading channel axis.
    """
    if not s < t:
        raise ValueError(f"change_heatmap requires s < t, got s={s}, t={t}")
    x_s = encoder.encode(x, schedule.at(s))
    x_t = encoder.encode(x, schedule.at(t))
    rate = (x_t - x_s) / (t - s)
    if sum_channels:
        if channel_shape is None:
            raise ValueError("sum_channels requires channel_shape=(C, ...)")
        rate = rate.reshape(channel_shape).sum(axis=0).reshape(-1)
    return rate
