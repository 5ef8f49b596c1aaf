"""Diffusion, latent and reconstruction losses, in discrete and continuous time.

Continuous-time losses use the v-parameterization: with z = α x_enc + σ ε,

    v      = α ε − σ x_enc           (target)
    x̂      = α z − σ v̂               (x-prediction recovered from v̂)
    loss   = −½ λ' α² ‖v − v̂ + σ·extra‖²,      −λ' > 0

where `extra` depends on the encoder:

    identity     0
    nt           x̂ − x_enc
    trainable    x̂ − x_enc + y − dy/dλ

The x-parameterized form −½ λ' e^λ ‖x̂ − x_enc + σ² x̂ − dx_enc/dλ‖² is
algebraically identical (for the identity encoder, −½ λ' e^λ ‖x̂ − x‖²); both
are implemented and tested against each other.

The discrete-T loss sums per-layer KL divergences between the reverse
posterior and the generative transition, with an optional unequal-variance
weighting: a variance ratio w = σ_Q²/σ_P² contributes (d/2)(w − 1 − log w) per
layer on top of the mean-gap term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .encoder import Encoder, FD_REL_STEP, IDENTITY, TRAINABLE
from .process import (
    GaussianParams,
    generative_mean,
    kl_isotropic,
    optimal_sigma_p,
    reverse_posterior,
    transition_coefficients,
    weighting_penalty,
)
from .schedule import LogLinearSchedule, SchedulePoint

LN2 = math.log(2.0)


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample-mean estimate with its standard error."""

    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


def mc_estimate(values: np.ndarray) -> MonteCarloEstimate:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MonteCarloEstimate(value=float(values.mean()), std_error=se, n_samples=n)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term loss decomposition in nats, plus the bits-per-dimension total."""

    diffusion: float
    latent: float
    reconstruction: float
    weighting_penalty: float
    total_nats: float
    bpd: float
    diffusion_stderr: float = 0.0

    @classmethod
    def from_components(cls, diffusion: float, latent: float, reconstruction: float,
                        weighting_penalty: float, d: int,
                        diffusion_stderr: float = 0.0) -> "LossBreakdown":
        total = diffusion + latent + reconstruction + weighting_penalty
        return cls(
            diffusion=diffusion,
            latent=latent,
            reconstruction=reconstruction,
            weighting_penalty=weighting_penalty,
            total_nats=total,
            bpd=total / (d * LN2),
            diffusion_stderr=diffusion_stderr,
        )


# ---------------------------------------------------------------------------
# Weighting policies for the discrete loss
# ---------------------------------------------------------------------------

class UnitWeight:
    """σ_P = σ_Q: the standard unweighted objective."""

    kind = "unit"


@dataclass(frozen=True)
class FixedWeight:
    """Constant variance ratio w = σ_Q²/σ_P² across layers."""

    w: float

    kind = "fixed"

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError(f"weight must be positive, got {self.w}")


@dataclass(frozen=True)
class OptimalWeight:
    """σ_P² = σ_Q² + gap/d per layer, with the mean-square gap supplied or exact.

    Without a supplied gap function the step's exact gap is used, which
    requires a prediction model whose output does not depend on z.
    """

    gap_fn: object = None  # callable (s_point, t_point) -> float, optional

    kind = "optimal"


# ---------------------------------------------------------------------------
# Continuous-time losses
# ---------------------------------------------------------------------------

def _model_vhat_graph(model, z: Tensor, lam: np.ndarray) -> Tensor:
    if hasattr(model, "forward"):
        return model.forward(z, lam)
    # analytic models take one scalar λ at a time and enter the graph as constants
    rows = [model.predict_v(z.data[i], float(lam_i)) for i, lam_i in enumerate(lam)]
    return Tensor(np.stack(rows))


def _vloss_per_item(
    x2: np.ndarray,
    model,
    encoder: Encoder,
    lam: np.ndarray,
    alpha: np.ndarray,
    sigma: np.ndarray,
    lam_prime: float,
    eps2: np.ndarray,
    alpha_sq: np.ndarray,
    sigma_sq: np.ndarray,
) -> Tensor:
    """Per-item diffusion integrand, shape (B, 1).  Column vectors broadcast row-wise."""
    if encoder.kind == TRAINABLE:
        y = encoder.inner.forward(x2, lam)
        h = FD_REL_STEP * abs(lam_prime)
        dy = (encoder.inner.forward(x2, lam + h) - encoder.inner.forward(x2, lam - h)) * (0.5 / h)
        x_enc = alpha_sq * Tensor(x2) + sigma_sq * y
    else:
        y = dy = None
        data = x2 if encoder.kind == IDENTITY else alpha_sq * x2
        x_enc = Tensor(data)
    z = alpha * x_enc + sigma * eps2
    v_hat = _model_vhat_graph(model, z, lam)
    v = alpha * eps2 - sigma * x_enc
    resid = v - v_hat
    if encoder.kind != IDENTITY:
        x_hat = alpha * z - sigma * v_hat
        extra = x_hat - x_enc
        if encoder.kind == TRAINABLE:
            extra = extra + y - dy
        resid = resid + sigma * extra
    weight = -0.5 * lam_prime * alpha_sq
    return resid.square().sum(axis=1, keepdims=True) * weight


def _col(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64)[:, None]


def batch_vloss_graph(
    x: np.ndarray,
    model,
    encoder: Encoder,
    ts: np.ndarray,
    eps: np.ndarray,
    schedule: LogLinearSchedule,
) -> Tensor:
    """Mean single-sample diffusion loss over a batch; differentiable. x is (B, d)."""
    points = [schedule.at(float(t)) for t in np.asarray(ts)]
    lam = np.array([p.lam for p in points])
    per_item = _vloss_per_item(
        np.asarray(x, dtype=np.float64),
        model,
        encoder,
        lam,
        _col([p.alpha for p in points]),
        _col([p.sigma for p in points]),
        schedule.lam_prime,
        np.asarray(eps, dtype=np.float64),
        _col([p.alpha_sq for p in points]),
        _col([p.sigma_sq for p in points]),
    )
    return per_item.mean()


def continuous_vloss(
    x: np.ndarray,
    model,
    encoder: Encoder,
    t: float,
    eps: np.ndarray,
    schedule: LogLinearSchedule,
) -> float:
    """Single-draw v-parameterized diffusion integrand at time t (nonnegative)."""
    p = schedule.at(t)
    per_item = _vloss_per_item(
        np.asarray(x, dtype=np.float64)[None, :],
        model,
        encoder,
        np.array([p.lam]),
        np.array([[p.alpha]]),
        np.array([[p.sigma]]),
        p.lam_prime,
        np.asarray(eps, dtype=np.float64)[None, :],
        np.array([[p.alpha_sq]]),
        np.array([[p.sigma_sq]]),
    )
    return float(per_item.data[0, 0])


def continuous_xloss(
    x: np.ndarray,
    model,
    encoder: Encoder,
    t: float,
    eps: np.ndarray,
    schedule: LogLinearSchedule,
) -> float:
    """x-parameterized twin of continuous_vloss, from the same v-prediction."""
    p = schedule.at(t)
    x = np.asarray(x, dtype=np.float64)
    x_enc = encoder.encode(x, p)
    z = p.alpha * x_enc + p.sigma * np.asarray(eps, dtype=np.float64)
    v_hat = model.predict_v(z, p.lam)
    x_hat = p.alpha * z - p.sigma * v_hat
    if encoder.kind == IDENTITY:
        resid = x_hat - x
    else:
        resid = x_hat - x_enc + p.sigma_sq * x_hat - encoder.encode_dlambda(x, p)
    return float(-0.5 * p.lam_prime * p.snr * np.sum(resid * resid))


# ---------------------------------------------------------------------------
# Discrete-T diffusion loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepTerm:
    """One layer of the discrete loss: KL split into gap and weighting parts."""

    s: float
    t: float
    kl: float
    penalty: float
    mean_sq_gap: float
    sigma2_q: float
    w: float


def _resolve_counterterm(encoder: Encoder, counterterm: bool | None) -> bool:
    return encoder.kind != IDENTITY if counterterm is None else counterterm


def discrete_step_terms(
    x: np.ndarray,
    T: int,
    model,
    encoder: Encoder,
    w_policy,
    schedule: LogLinearSchedule,
    rng: np.random.Generator | None = None,
    counterterm: bool | None = None,
    exact: bool = False,
) -> list[StepTerm]:
    """Per-layer KL terms of the discrete loss with s(i) = (i−1)/T, t(i) = i/T.

    With exact=True (requires a z-independent model) the z-expectation is
    closed-form and the result is deterministic; otherwise one z-draw per layer.
    """
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    counterterm = _resolve_counterterm(encoder, counterterm)
    z_free = getattr(model, "z_independent", False)
    if exact and not z_free:
        raise ValueError("exact discrete loss requires a z-independent prediction model")
    if not exact and rng is None:
        raise ValueError("stochastic discrete loss requires an rng")
    terms: list[StepTerm] = []
    for i in range(1, T + 1):
        sp = schedule.at((i - 1) / T)
        tp = schedule.at(i / T)
        x_s = encoder.encode(x, sp)
        x_t = encoder.encode(x, tp)
        mean_t = tp.alpha * x_t
        z_t = mean_t if exact else mean_t + tp.sigma * rng.standard_normal(d)
        x_hat = model.predict_x(z_t, tp.lam)
        q = reverse_posterior(z_t, x_t, x_s, sp, tp)
        mu_p = generative_mean(z_t, x_hat, sp, tp, counterterm=counterterm)
        gap = float(np.sum((mu_p - q.mean) ** 2))
        if isinstance(w_policy, UnitWeight) or w_policy is UnitWeight:
            sigma2_p = q.var
        elif isinstance(w_policy, FixedWeight):
            sigma2_p = q.var / w_policy.w
        elif isinstance(w_policy, OptimalWeight):
            if w_policy.gap_fn is not None:
                gap_est = float(w_policy.gap_fn(sp, tp))
            elif z_free:
                gap_est = gap
            else:
                raise ValueError("optimal weighting needs a gap estimate for z-dependent models")
            sigma2_p = optimal_sigma_p(q.var, gap_est, d)
        else:
            raise TypeError(f"unknown weighting policy {w_policy!r}")
        w = q.var / sigma2_p
        kl = kl_isotropic(q, GaussianParams(mean=mu_p, var=sigma2_p), d)
        terms.append(StepTerm(s=sp.t, t=tp.t, kl=kl, penalty=weighting_penalty(w, d),
                              mean_sq_gap=gap, sigma2_q=q.var, w=w))
    return terms


def discrete_diffusion_loss(
    x: np.ndarray,
    T: int,
    model,
    encoder: Encoder,
    w_policy,
    rng: np.random.Generator | None,
    schedule: LogLinearSchedule,
    counterterm: bool | None = None,
    n_passes: int = 1,
    exact: bool = False,
) -> MonteCarloEstimate:
    """Sum over layers of the per-layer KL, one z-draw per layer per pass."""
    totals = []
    for _ in range(n_passes):
        terms = discrete_step_terms(x, T, model, encoder, w_policy, schedule,
                                    rng=rng, counterterm=counterterm, exact=exact)
        totals.append(sum(term.kl for term in terms))
    if exact or n_passes == 1:
        return MonteCarloEstimate(value=float(totals[0]), std_error=0.0, n_samples=1)
    return mc_estimate(np.array(totals))


# ---------------------------------------------------------------------------
# Latent and reconstruction losses
# ---------------------------------------------------------------------------

def latent_loss(x: np.ndarray, encoder: Encoder, schedule: LogLinearSchedule) -> float:
    """KL(q(z_1|x) ‖ N(0, I)) in closed form, using the encoded data at t = 1."""
    p1 = schedule.at(1.0)
    x1 = encoder.encode(np.asarray(x, dtype=np.float64), p1)
    return latent_loss_from_point(x1, p1)


def latent_loss_from_point(x1: np.ndarray, p1: SchedulePoint) -> float:
    """½ Σ_i (α_1² x_{1,i}² + σ_1² − log σ_1² − 1) for an already-encoded x1."""
    d = x1.size
    const = p1.sigma_sq - p1.log_sigma_sq - 1.0
    return float(0.5 * (p1.alpha_sq * np.sum(x1 * x1) + d * const))


def batch_latent_graph(x: np.ndarray, encoder: Encoder,
                       schedule: LogLinearSchedule) -> Tensor:
    """Differentiable batch-mean latent term; trains the encoder's t=1 output.

    Constant for non-trainable encoders, so only the trainable path builds a
    graph through the inner network.
    """
    p1 = schedule.at(1.0)
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d = x2.shape[1]
    const = d * (p1.sigma_sq - p1.log_sigma_sq - 1.0)
    if encoder.kind == TRAINABLE:
        x1 = encoder.encode_t(x2, p1)
    else:
        x1 = Tensor(x2 if encoder.kind == IDENTITY else p1.alpha_sq * x2)
    sq = x1.square().sum(axis=1, keepdims=True)
    return (0.5 * p1.alpha_sq) * sq.mean() + 0.5 * const


def pixel_categorical_log_probs(z0: np.ndarray, alpha0: float, sigma2: float) -> np.ndarray:
    """Per-pixel 256-way categorical log-probs p(v | z_0) ∝ N(z_0; α_0·scale(v), σ_0²)."""
    from .data import scale_pixels

    levels = scale_pixels(np.arange(256))
    logits = -((np.asarray(z0, dtype=np.float64)[:, None] - alpha0 * levels[None, :]) ** 2) / (2.0 * sigma2)
    # log-sum-exp normalization per pixel
    m = logits.max(axis=1, keepdims=True)
    log_z = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
    return logits - log_z


def reconstruction_loss(x_pixels: np.ndarray, z0: np.ndarray, schedule: LogLinearSchedule) -> float:
    """Negative log-likelihood of integer pixels under the per-pixel categorical."""
    x_pixels = np.asarray(x_pixels)
    if not np.issubdtype(x_pixels.dtype, np.integer):
        raise ValueError("reconstruction loss requires integer pixel values")
    if x_pixels.min() < 0 or x_pixels.max() > 255:
        raise ValueError("pixel values must lie in {0..255}")
    p0 = schedule.at(0.0)
    log_probs = pixel_categorical_log_probs(np.asarray(z0, dtype=np.float64).ravel(),
                                            p0.alpha, p0.sigma_sq)
    picked = log_probs[np.arange(x_pixels.size), x_pixels.ravel()]
    return float(-picked.sum())


# ---------------------------------------------------------------------------
# Full ELBO evaluation
# ---------------------------------------------------------------------------

def elbo_bpd(
    x,
    model,
    encoder: Encoder,
    schedule: LogLinearSchedule,
    n_mc: int,
    rng: np.random.Generator,
    pixel_data: bool = True,
) -> LossBreakdown:
    """Loss decomposition for one datapoint, diffusion term by n_mc (t, ε) draws.

    For integer pixel data the reconstruction term uses a single z_0 draw; for
    real-valued data it is zero (no quantized likelihood is defined).
    """
    from .data import scale_pixels

    if n_mc < 1:
        raise ValueError(f"n_mc must be positive, got {n_mc}")
    if pixel_data:
        x_pixels = np.asarray(x)
        x_real = scale_pixels(x_pixels)
    else:
        x_pixels = None
        x_real = np.asarray(x, dtype=np.float64)
    d = x_real.size
    draws = np.empty(n_mc)
    for j in range(n_mc):
        t = float(rng.uniform())
        eps = rng.standard_normal(d)
        draws[j] = continuous_vloss(x_real, model, encoder, t, eps, schedule)
    diff = mc_estimate(draws)
    latent = latent_loss(x_real, encoder, schedule)
    if pixel_data:
        p0 = schedule.at(0.0)
        x0 = encoder.encode(x_real, p0)
        z0 = p0.alpha * x0 + p0.sigma * rng.standard_normal(d)
        recon = reconstruction_loss(x_pixels, z0, schedule)
    else:
        recon = 0.0
    return LossBreakdown.from_components(
        diffusion=diff.value,
        latent=latent,
        reconstruction=recon,
        weighting_penalty=0.0,
        d=d,
        diffusion_stderr=diff.std_error,
    )


def t_profile(
    x: np.ndarray,
    model,
    encoder: Encoder,
    schedule: LogLinearSchedule,
    t_grid: np.ndarray,
    n_eps: int,
    rng: np.random.Generator,
    pixel_data: bool = False,
) -> list[tuple[float, float, float, float]]:
    """Rows (t, λ, integrand mean, integrand stderr) of the diffusion integrand."""
    from .data import scale_pixels

    x_real = scale_pixels(np.asarray(x)) if pixel_data else np.asarray(x, dtype=np.float64)
    rows = []
    for t in t_grid:
        vals = np.array([
            continuous_vloss(x_real, model, encoder, float(t),
                             rng.standard_normal(x_real.size), schedule)
            for _ in range(n_eps)
        ])
        est = mc_estimate(vals)
        rows.append((float(t), schedule.at(float(t)).lam, est.value, est.std_error))
    return rows
