"""Exponentially-weighted recursive least squares for ARX models.

Maintains a multi-output predictor matrix theta and a shared covariance P,
consuming one (output, regressor) pair per step. Both output rows regress on
the same regressor with the same forgetting factor, so the Kalman gain and
covariance are shared and the theta update is a joint rank-1 correction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Gain denominators below this are treated as numerically singular.
MIN_GAIN_DENOMINATOR = 1e-12

# Covariance ceiling check cadence. Between checks P can overshoot the
# ceiling by at most 1/lambda**COV_CLAMP_INTERVAL (about 5% at
# lambda = 0.999), which is harmless.
COV_CLAMP_INTERVAL = 50


class ConfigError(ValueError):
    """Invalid estimator configuration."""


class SingularDataError(ValueError):
    """Regressor history does not determine a unique least-squares solution."""


class UpdateRejectedError(ValueError):
    """A recursive update was rejected; the estimator state is unchanged."""


@dataclass(frozen=True)
class ArxConfig:
    """Structure of the ARX model being estimated.

    order:      number of lags of both input and output in the regressor.
    input_dim:  dimension of the exogenous input u (2 for dq currents).
    output_dim: dimension of the output y (2 for dq voltages).
    forgetting: exponential forgetting factor, in (0, 1].
    p0_scale:   initial covariance magnitude P(0) = p0_scale * I.
    """

    order: int = 3
    input_dim: int = 2
    output_dim: int = 2
    forgetting: float = 0.999
    p0_scale: float = 1e4
    p_max: float | None = None  # covariance ceiling; None = max(1e5, p0_scale)

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError(f"order must be >= 1, got {self.order}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be >= 1")
        if not 0.0 < self.forgetting <= 1.0:
            raise ConfigError(
                f"forgetting factor must be in (0, 1], got {self.forgetting}"
            )
        if self.p0_scale <= 0.0:
            raise ConfigError(f"p0_scale must be positive, got {self.p0_scale}")
        if self.p_max is not None and self.p_max < self.p0_scale:
            raise ConfigError(
                f"p_max {self.p_max} must be >= p0_scale {self.p0_scale}"
            )

    @property
    def regressor_len(self) -> int:
        return (self.input_dim + self.output_dim) * self.order

    @property
    def burn_in(self) -> int:
        """Samples before the estimate is considered calibrated."""
        return 2 * self.regressor_len

    @property
    def covariance_ceiling(self) -> float:
        return self.p_max if self.p_max is not None else max(1e5, self.p0_scale)


@dataclass
class IdentifierState:
    """Full state of the recursive estimator at one step."""

    config: ArxConfig
    theta: np.ndarray  # (output_dim, regressor_len)
    P: np.ndarray  # (regressor_len, regressor_len), symmetric PD
    sample_count: int = 0

    @property
    def calibrated(self) -> bool:
        return self.sample_count >= self.config.burn_in


def init_identifier(config: ArxConfig) -> IdentifierState:
    """Zero predictor with a diffuse diagonal prior covariance."""
    n = config.regressor_len
    return IdentifierState(
        config=config,
        theta=np.zeros((config.output_dim, n)),
        P=config.p0_scale * np.eye(n),
        sample_count=0,
    )


def rls_update(state: IdentifierState, y, phi) -> IdentifierState:
    """One recursive step; returns the updated state, input state untouched.

    K    = P phi / (lambda + phi' P phi)
    P    <- (P - K phi' P) / lambda, re-symmetrized
    theta <- theta + (y - theta phi) K'
    """
    cfg = state.config
    y = np.asarray(y, dtype=float).reshape(-1)
    phi = np.asarray(phi, dtype=float).reshape(-1)
    if y.shape[0] != cfg.output_dim:
        raise UpdateRejectedError(
            f"output has dim {y.shape[0]}, expected {cfg.output_dim}"
        )
    if phi.shape[0] != cfg.regressor_len:
        raise UpdateRejectedError(
            f"regressor has length {phi.shape[0]}, expected {cfg.regressor_len}"
        )
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(phi))):
        raise UpdateRejectedError("non-finite value in update input")

    lam = cfg.forgetting
    P_phi = state.P @ phi
    denom = lam + phi @ P_phi
    if denom <= MIN_GAIN_DENOMINATOR:
        raise UpdateRejectedError(f"gain denominator {denom:.3e} is not positive")

    K = P_phi / denom
    innovation = y - state.theta @ phi
    theta = state.theta + np.outer(innovation, K)
    P = (state.P - np.outer(K, P_phi)) / lam
    P = (P + P.T) / 2.0

    count = state.sample_count + 1
    # Forgetting inflates P exponentially along directions the stream never
    # excites (covariance windup), which eventually destroys the update in
    # floating point. Clamp P's spectrum at the ceiling on a fixed cadence:
    # uncertainty stays bounded while weakly excited directions keep enough
    # gain to track.
    if count % COV_CLAMP_INTERVAL == 0:
        ceiling = cfg.covariance_ceiling
        eigvals, eigvecs = np.linalg.eigh(P)
        if eigvals[-1] > ceiling * (1.0 + 1e-9):
            P = (eigvecs * np.minimum(eigvals, ceiling)) @ eigvecs.T
            P = (P + P.T) / 2.0

    return replace(state, theta=theta, P=P, sample_count=count)


def batch_weighted_ls(history, forgetting: float) -> np.ndarray:
    """Exponentially-weighted batch least squares over a finite window.

    `history` is an ordered sequence of (y, phi) pairs, oldest first; the most
    recent pair carries weight 1 and the one i steps back carries lambda**i.
    Returns the minimizing theta with shape (output_dim, regressor_len).

    Serves as the independent check for the recursive path: solved via a
    square-root-weighted stacked system and lstsq, never through the
    recursion.
    """
    if not 0.0 < forgetting <= 1.0:
        raise ConfigError(f"forgetting factor must be in (0, 1], got {forgetting}")
    ys = np.array([np.asarray(y, dtype=float).reshape(-1) for y, _ in history])
    phis = np.array([np.asarray(p, dtype=float).reshape(-1) for _, p in history])
    n, nphi = phis.shape
    if n < nphi:
        raise SingularDataError(
            f"{n} samples cannot determine {nphi} parameters per output"
        )

    ages = np.arange(n - 1, -1, -1, dtype=float)
    sqrt_w = forgetting ** (ages / 2.0)
    A = phis * sqrt_w[:, None]
    b = ys * sqrt_w[:, None]

    theta_t, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < nphi:
        raise SingularDataError(
            f"weighted regressor matrix has rank {rank} < {nphi}; "
            "history is not persistently exciting"
        )
    return theta_t.T
