"""Mean-field variational inference for the weighted linear user model.

The factored posterior is q(phi) q(sigma2) prod_i q(w_i) with q(phi)
Gaussian, q(sigma2) inverse-gamma and q(w_i) gamma.  Coordinate ascent
visits the factors in a fixed order (phi, sigma2, then the weights);
each update is the exact conjugate optimum given the other factors:

  q(phi):    cov S = (E[1/sigma2] sum_i E[w_i] x_i x_i^T + I/lambda_phi)^-1
             mean m = S (E[1/sigma2] sum_i E[w_i] y_i x_i + mu_phi/lambda_phi)
  q(sigma2): shape alpha_s2 + N/2, scale beta_s2 + 0.5 sum_i E[w_i] r_i
  q(w_i):    shape alpha_w + 0.5, rate beta_w + 0.5 E[1/sigma2] r_i

with r_i = (y_i - x_i^T m)^2 + x_i^T S x_i.  Locked observations keep
E[w_i] = 1 and receive no q(w_i) factor.  The LG baseline is the same
model with every observation treated as locked.

Convergence is declared when the evidence lower bound changes by less
than the configured tolerance between cycles.  The initial state is
drawn from the prior: the free weights and sigma2 start at prior draws
(wrapped in prior-shaped factors so the bound is defined from the
start), and the first cycle begins with the q(phi) update.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import digamma, gammaln

from .errors import DimensionError, NumericError, SingularModelError, ValidationError
from .model import Hyperparameters, Observation, PosteriorState, WeightMode

_FLOOR = 1e-12
_HARD_ITER_CAP = 100_000
_LOG_2PI = math.log(2.0 * math.pi)


class ModelKind(enum.Enum):
    ARD = "ard"      # per-observation weights, learned
    LG = "lg"        # all weights fixed to 1.0


@dataclass(frozen=True)
class FitRequest:
    """Inputs of one inference run.

    ``dim`` is required when there are no observations (the prior needs a
    dimension); otherwise it is checked against the observations.
    Deleted observations are filtered out here.
    """

    observations: tuple[Observation, ...]
    hyper: Hyperparameters
    model_kind: ModelKind = ModelKind.ARD
    rng_seed: int = 0
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple(self.observations))

    def active_observations(self) -> list[Observation]:
        active = [o for o in self.observations if o.weight_mode is not WeightMode.DELETED]
        for o in active:
            if o.features is None:
                raise ValidationError(f"observation {o.id!r} has no feature vector")
        return active


def _kl_gamma(shape: float, rate: float, shape0: float, rate0: float) -> float:
    """KL( Gamma(shape, rate) || Gamma(shape0, rate0) ), shape/rate convention."""
    return (
        shape * math.log(rate) - shape0 * math.log(rate0)
        - gammaln(shape) + gammaln(shape0)
        + (shape - shape0) * (digamma(shape) - math.log(rate))
        - (rate - rate0) * shape / rate
    )


def _kl_inverse_gamma(shape: float, scale: float, shape0: float, scale0: float) -> float:
    """KL( InvGamma(shape, scale) || InvGamma(shape0, scale0) )."""
    return (
        shape * math.log(scale) - shape0 * math.log(scale0)
        - gammaln(shape) + gammaln(shape0)
        + (shape0 - shape) * (math.log(scale) - digamma(shape))
        - (scale - scale0) * shape / scale
    )


def _elbo_from_stats(
    hyper: Hyperparameters,
    n_obs: int,
    dim: int,
    m: np.ndarray,
    tr_S: float,
    logdet_S: float,
    r: np.ndarray,
    e_w: np.ndarray,
    sig_shape: float,
    sig_scale: float,
    w_shape: np.ndarray,
    w_rate: np.ndarray,
) -> float:
    e_log_s2 = math.log(sig_scale) - digamma(sig_shape)
    e_inv_s2 = sig_shape / sig_scale
    e_log_w_sum = float(np.sum(digamma(w_shape) - np.log(w_rate))) if w_shape.size else 0.0

    loglik = (
        0.5 * e_log_w_sum
        - 0.5 * n_obs * (e_log_s2 + _LOG_2PI)
        - 0.5 * e_inv_s2 * float(e_w @ r)
    )
    diff = m - hyper.mu_phi
    kl_phi = 0.5 * (
        tr_S / hyper.lambda_phi
        + float(diff @ diff) / hyper.lambda_phi
        - dim
        + dim * math.log(hyper.lambda_phi)
        - logdet_S
    )
    kl_sig = _kl_inverse_gamma(sig_shape, sig_scale, hyper.alpha_sigma2, hyper.beta_sigma2)
    kl_w = float(
        sum(
            _kl_gamma(float(a), float(b), hyper.alpha_w, hyper.beta_w)
            for a, b in zip(w_shape, w_rate)
        )
    )
    value = loglik - kl_phi - kl_sig - kl_w
    if not math.isfinite(value):
        raise NumericError("ELBO evaluated to a non-finite value")
    return value


def _prior_state(hyper: Hyperparameters, dim: int) -> PosteriorState:
    return PosteriorState(
        phi_mean=np.full(dim, hyper.mu_phi),
        phi_cov=hyper.lambda_phi * np.eye(dim),
        sigma2_shape=hyper.alpha_sigma2,
        sigma2_scale=hyper.beta_sigma2,
        weight_shape=np.empty(0),
        weight_rate=np.empty(0),
        free_ids=(),
        locked_ids=(),
        elbo=0.0,
        iterations_run=0,
        elbo_trace=(0.0,),
    )


def _design_matrices(request: FitRequest) -> tuple[list[Observation], np.ndarray, np.ndarray, int]:
    obs = request.active_observations()
    if obs:
        dims = {o.features.shape[0] for o in obs}
        if len(dims) != 1:
            raise DimensionError(f"observations mix feature dimensions: {sorted(dims)}")
        dim = dims.pop()
        if request.dim is not None and request.dim != dim:
            raise DimensionError(f"request dim {request.dim} != observation dim {dim}")
    else:
        if request.dim is None or request.dim < 1:
            raise DimensionError("dim must be given (>= 1) when fitting without observations")
        dim = request.dim
    X = np.array([o.features for o in obs], dtype=np.float64).reshape(len(obs), dim)
    y = np.array([o.value for o in obs], dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite values in fit inputs")
    return obs, X, y, dim


def fit(request: FitRequest) -> PosteriorState:
    """Run coordinate ascent to convergence and return the posterior.

    Deterministic for a fixed request (the prior-draw initialization is
    seeded by ``request.rng_seed``).  With zero observations the prior
    moments are returned exactly, without touching the linear algebra.
    """
    hyper = request.hyper
    obs, X, y, dim = _design_matrices(request)
    n_obs = len(obs)
    if n_obs == 0:
        return _prior_state(hyper, dim)

    locked_mask = np.array(
        [request.model_kind is ModelKind.LG or o.weight_mode is WeightMode.LOCKED for o in obs]
    )
    free_mask = ~locked_mask
    free_ids = tuple(o.id for o, f in zip(obs, free_mask) if f)
    locked_ids = tuple(o.id for o, f in zip(obs, free_mask) if not f)
    n_free = int(free_mask.sum())

    rng = np.random.default_rng(request.rng_seed)
    sigma2_draw = max(hyper.beta_sigma2 / max(rng.gamma(hyper.alpha_sigma2), _FLOOR), _FLOOR)
    w_draws = np.maximum(rng.gamma(hyper.alpha_w, size=n_free) / hyper.beta_w, _FLOOR)

    # Initialization: prior q(phi); sigma2 and weight factors keep the
    # prior shapes with rates/scales matched to the draws, so E[1/sigma2]
    # and E[w_i] start at the drawn values and the bound is well defined.
    m = np.full(dim, hyper.mu_phi)
    sig_shape, sig_scale = hyper.alpha_sigma2, hyper.alpha_sigma2 * sigma2_draw
    w_shape = np.full(n_free, hyper.alpha_w)
    w_rate = hyper.alpha_w / w_draws
    e_w = np.ones(n_obs)
    e_w[free_mask] = w_draws
    e_inv_s2 = sig_shape / sig_scale

    inv_lambda = 1.0 / hyper.lambda_phi
    row_norms_sq = np.einsum("nd,nd->n", X, X)
    r0 = (y - X @ m) ** 2 + hyper.lambda_phi * row_norms_sq
    trace = [
        _elbo_from_stats(
            hyper, n_obs, dim, m, dim * hyper.lambda_phi, dim * math.log(hyper.lambda_phi),
            r0, e_w, sig_shape, sig_scale, w_shape, w_rate,
        )
    ]

    max_iters = hyper.vi_max_iters if hyper.vi_max_iters is not None else _HARD_ITER_CAP
    eye = np.eye(dim)
    L = None
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        # q(phi)
        scaled = X * (e_inv_s2 * e_w)[:, None]
        A = X.T @ scaled
        A[np.diag_indices_from(A)] += inv_lambda
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError as exc:  # unreachable for lambda_phi > 0
            raise SingularModelError(f"posterior covariance solve failed: {exc}") from exc
        b = scaled.T @ y + inv_lambda * hyper.mu_phi
        m = cho_solve((L, True), b)
        L_inv = solve_triangular(L, eye, lower=True)
        tr_S = float(np.sum(L_inv * L_inv))
        logdet_S = -2.0 * float(np.sum(np.log(np.diag(L))))
        ZX = L_inv @ X.T
        quad = np.einsum("dn,dn->n", ZX, ZX)
        r = (y - X @ m) ** 2 + quad
        # q(sigma2)
        sig_shape = hyper.alpha_sigma2 + 0.5 * n_obs
        sig_scale = max(hyper.beta_sigma2 + 0.5 * float(e_w @ r), _FLOOR)
        e_inv_s2 = sig_shape / sig_scale
        # q(w_i), free observations only
        if n_free:
            w_shape = np.full(n_free, hyper.alpha_w + 0.5)
            w_rate = np.maximum(hyper.beta_w + 0.5 * e_inv_s2 * r[free_mask], _FLOOR)
            e_w[free_mask] = w_shape / w_rate

        trace.append(
            _elbo_from_stats(
                hyper, n_obs, dim, m, tr_S, logdet_S, r, e_w,
                sig_shape, sig_scale, w_shape, w_rate,
            )
        )
        if abs(trace[-1] - trace[-2]) < hyper.vi_tolerance:
            break
    else:
        if hyper.vi_max_iters is None:
            raise NumericError("variational fit failed to converge within the hard cap")

    S = L_inv.T @ L_inv
    return PosteriorState(
        phi_mean=m,
        phi_cov=S,
        sigma2_shape=float(sig_shape),
        sigma2_scale=float(sig_scale),
        weight_shape=w_shape,
        weight_rate=w_rate,
        free_ids=free_ids,
        locked_ids=locked_ids,
        elbo=trace[-1],
        iterations_run=iterations,
        elbo_trace=tuple(trace),
    )


def elbo(request: FitRequest, state: PosteriorState) -> float:
    """Evidence lower bound of ``state`` under the data in ``request``.

    Works for any valid factored state, not just fit() output; the fit
    trace and this function agree on converged states.
    """
    hyper = request.hyper
    obs, X, y, dim = _design_matrices(request)
    if state.phi_mean.shape[0] != dim:
        raise DimensionError(f"state dim {state.phi_mean.shape[0]} != request dim {dim}")
    n_obs = len(obs)

    if n_obs == 0:
        tr_S = float(np.trace(state.phi_cov))
        sign, logdet_S = np.linalg.slogdet(state.phi_cov)
        if sign <= 0:
            raise NumericError("phi covariance is not positive definite")
        return _elbo_from_stats(
            hyper, 0, dim, state.phi_mean, tr_S, float(logdet_S),
            np.empty(0), np.empty(0),
            state.sigma2_shape, state.sigma2_scale,
            np.asarray(state.weight_shape), np.asarray(state.weight_rate),
        )

    free_lookup = {oid: i for i, oid in enumerate(state.free_ids)}
    locked_set = set(state.locked_ids)
    w_shape, w_rate, e_w = [], [], np.ones(n_obs)
    for i, o in enumerate(obs):
        treat_locked = request.model_kind is ModelKind.LG or o.weight_mode is WeightMode.LOCKED
        if treat_locked:
            if o.id not in locked_set and o.id in free_lookup:
                raise ValidationError(f"observation {o.id!r} is locked but has a weight factor")
            continue
        if o.id not in free_lookup:
            raise ValidationError(f"observation {o.id!r} has no weight factor in the state")
        idx = free_lookup[o.id]
        w_shape.append(float(state.weight_shape[idx]))
        w_rate.append(float(state.weight_rate[idx]))
        e_w[i] = w_shape[-1] / w_rate[-1]
    w_shape = np.asarray(w_shape)
    w_rate = np.asarray(w_rate)

    quad = np.einsum("nd,de,ne->n", X, state.phi_cov, X)
    r = (y - X @ state.phi_mean) ** 2 + quad
    tr_S = float(np.trace(state.phi_cov))
    sign, logdet_S = np.linalg.slogdet(state.phi_cov)
    if sign <= 0:
        raise NumericError("phi covariance is not positive definite")
    return _elbo_from_stats(
        hyper, n_obs, dim, state.phi_mean, tr_S, float(logdet_S),
        r, e_w, state.sigma2_shape, state.sigma2_scale, w_shape, w_rate,
    )
