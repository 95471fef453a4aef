"""Core data types of the probabilistic user model.

The observation model is a linear regression with a per-observation
accuracy weight: feedback value y_i is Gaussian around x_i . phi with
variance sigma2 / w_i.  Priors: each coefficient phi_j is Gaussian
(mean mu_phi, variance lambda_phi), sigma2 is inverse-gamma
(shape alpha_sigma2, scale beta_sigma2), and each free weight w_i is
gamma (shape alpha_w, rate beta_w).  Feedback the user has locked as
accurate gets a point-mass weight of exactly 1.0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DimensionError, NotFoundError, NumericError, ValidationError


class WeightMode(enum.Enum):
    """How an observation's accuracy weight is treated during fitting."""

    FREE = "free"
    LOCKED = "locked"
    DELETED = "deleted"


def l2_normalize(values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale a nonnegative feature vector to unit L2 norm.

    Returns ``(vector, is_zero)``; an all-zero input comes back unchanged
    with ``is_zero=True`` so callers can reject it.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError("feature vector contains non-finite components")
    if np.any(values < 0):
        raise ValidationError("feature components must be >= 0 before normalization")
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        return values, True
    return values / norm, False


@dataclass(frozen=True)
class Observation:
    """One unit of relevance feedback."""

    id: str
    features: np.ndarray | None
    value: float
    weight_mode: WeightMode = WeightMode.FREE
    created_at: int = 0

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValidationError(f"feedback value {self.value} outside [0, 1]")
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 1:
                raise DimensionError("observation features must be a 1-D vector")
            if not np.all(np.isfinite(feats)):
                raise NumericError("observation features contain non-finite values")
            object.__setattr__(self, "features", feats)


_UNBOUNDED_TOKENS = {"unbounded", "none", "inf"}


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters plus variational-inference controls.

    ``lambda_phi`` is the prior *variance* of each coefficient (matching
    the Normal(mean, variance) convention of the observation model).
    The weight prior uses the shape/rate convention, so alpha_w = beta_w
    gives prior mean weight 1.0, the same value a locked observation is
    pinned to.  ``vi_max_iters=None`` means iterate until converged.
    """

    mu_phi: float = 0.0
    lambda_phi: float = 0.1
    alpha_sigma2: float = 2.5
    beta_sigma2: float = 0.5
    alpha_w: float = 0.7
    beta_w: float = 1.0
    vi_tolerance: float = 0.1
    vi_max_iters: int | None = None

    def __post_init__(self):
        positive = {
            "lambda_phi": self.lambda_phi,
            "alpha_sigma2": self.alpha_sigma2,
            "beta_sigma2": self.beta_sigma2,
            "alpha_w": self.alpha_w,
            "beta_w": self.beta_w,
            "vi_tolerance": self.vi_tolerance,
        }
        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {value}")
        if not math.isfinite(self.mu_phi):
            raise ValidationError("mu_phi must be finite")
        if self.vi_max_iters is not None and self.vi_max_iters < 1:
            raise ValidationError("vi_max_iters must be a positive integer or None")

    def to_config_text(self) -> str:
        """Serialize to a flat key = value file, one key per line."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "vi_max_iters":
                value = "unbounded" if value is None else value
            lines.append(f"{f.name} = {value!r}" if isinstance(value, str) else f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "Hyperparameters":
        """Parse the flat key = value format written by :meth:`to_config_text`."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno} is not 'key = value': {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip().strip("'\"")
            if key not in known:
                raise ValidationError(f"unknown hyperparameter {key!r} on line {lineno}")
            if key == "vi_max_iters":
                kwargs[key] = None if value.lower() in _UNBOUNDED_TOKENS else int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


# Presets from the published experiments: the simulation runs VI to
# convergence, the interactive system caps it at 10 iterations to keep
# per-feedback latency low.
SIMULATION = Hyperparameters(
    mu_phi=0.0, lambda_phi=0.1, alpha_sigma2=2.5, beta_sigma2=0.5,
    alpha_w=0.7, beta_w=1.0, vi_tolerance=0.1, vi_max_iters=None,
)
INTERACTIVE = Hyperparameters(
    mu_phi=0.0, lambda_phi=0.1, alpha_sigma2=2.0, beta_sigma2=0.1,
    alpha_w=1.0, beta_w=1.0, vi_tolerance=0.1, vi_max_iters=10,
)

PRESETS = {"simulation": SIMULATION, "interactive": INTERACTIVE}


@dataclass(frozen=True)
class PosteriorState:
    """Converged factored posterior q(phi) q(sigma2) prod_i q(w_i).

    ``weight_shape``/``weight_rate`` are aligned with ``free_ids``; locked
    observations carry no gamma factor and report expected weight 1.0.
    ``elbo_trace[0]`` is the bound at the initialization state; one entry
    follows per coordinate-ascent cycle.
    """

    phi_mean: np.ndarray
    phi_cov: np.ndarray
    sigma2_shape: float
    sigma2_scale: float
    weight_shape: np.ndarray
    weight_rate: np.ndarray
    free_ids: tuple[str, ...]
    locked_ids: tuple[str, ...]
    elbo: float
    iterations_run: int
    elbo_trace: tuple[float, ...] = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return self.phi_mean.shape[0]

    def expected_weights(self) -> dict[str, float]:
        """Expected accuracy weight for every observation in the last fit."""
        out = {oid: 1.0 for oid in self.locked_ids}
        if len(self.free_ids):
            means = self.weight_shape / self.weight_rate
            out.update(zip(self.free_ids, means.tolist()))
        return out


def expected_weight(state: PosteriorState, obs_id: str) -> float:
    """E[w_i] for one observation: shape/rate if free, exactly 1.0 if locked."""
    if obs_id in state.locked_ids:
        return 1.0
    try:
        idx = state.free_ids.index(obs_id)
    except ValueError:
        raise NotFoundError(f"observation {obs_id!r} was not part of the last fit") from None
    return float(state.weight_shape[idx] / state.weight_rate[idx])


def predict_relevance(state: PosteriorState, features: np.ndarray) -> float:
    """Posterior-mean relevance estimate, dot(phi_mean, features).

    The linear model may emit values outside [0, 1]; clamping is a
    display-boundary concern, never done here.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape != state.phi_mean.shape:
        raise DimensionError(
            f"features shape {features.shape} does not match model dim {state.phi_mean.shape}"
        )
    return float(state.phi_mean @ features)
