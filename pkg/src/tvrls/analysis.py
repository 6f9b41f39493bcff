"""Error-dynamics propagation, attractivity bounds, and excitation monitoring.

Everything here assumes the noise-free linear model y_k = phi_k theta when a
TrueModel is involved; the estimators themselves make no such assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, RankNotAttained
from .estimators import History, MeasurementTriple
from .linalg import chol_factor, chol_solve, lambda_extreme, symmetrize, sym_eigen
from .schedules import RegDelta

# Default rank-attainment threshold is scale-relative to the accumulated sum.
RANK_THRESHOLD_REL = 1e-8


@dataclass(frozen=True)
class TrueModel:
    """Ground-truth parameter vector generating noise-free measurements."""

    theta: np.ndarray


def propagate_error(
    prev_error: np.ndarray,
    p_k_inv: np.ndarray,
    p_k1: np.ndarray,
    reg_k: RegDelta,
    reg_km1: RegDelta,
    model: TrueModel,
) -> np.ndarray:
    """One step of the noise-free error dynamics.

    Returns P_{k+1} [P_k^-1 err_k + R_k(theta_reg,k - theta)
    - R_{k-1}(theta_reg,k-1 - theta)].
    """
    prev_error = np.asarray(prev_error, dtype=float)
    n = prev_error.shape[0]
    if p_k_inv.shape != (n, n) or p_k1.shape != (n, n) or model.theta.shape != (n,):
        raise DimensionMismatch("error-propagation operands have inconsistent shapes")
    vec = p_k_inv @ prev_error
    vec = vec + reg_k.r_current @ (reg_k.theta_reg - model.theta)
    vec = vec - reg_km1.r_current @ (reg_km1.theta_reg - model.theta)
    return p_k1 @ vec


def closed_form_error(history: History, reg: RegDelta, model: TrueModel) -> np.ndarray:
    """Batch expression of the error under noise-free data.

    Returns (R_k + sum phi_i^T Gamma_i phi_i)^-1 R_k (theta_reg,k - theta);
    zero regularization therefore means zero error once the sum is invertible.
    """
    s = np.array(reg.r_current, dtype=float)
    for m in history:
        s += m.phi.T @ (m.gamma @ m.phi)
    f = chol_factor(symmetrize(s))
    return chol_solve(f, reg.r_current @ (reg.theta_reg - model.theta))


def attractivity_bound(
    reg: RegDelta,
    s_krank: np.ndarray,
    theta_reg_norm: float,
    theta_norm: float,
) -> float:
    """Error-norm bound valid once the data sum is positive definite.

    lambda_max(R_k) / lambda_min(S_krank) * (|theta_reg| + |theta|).
    Raises RankNotAttained when S_krank is not positive definite.
    """
    lam_min = lambda_extreme(s_krank)[0]
    if lam_min <= 0.0:
        raise RankNotAttained("accumulated data sum is not positive definite")
    lam_max_r = lambda_extreme(reg.r_current)[1]
    return lam_max_r / lam_min * (theta_reg_norm + theta_norm)


@dataclass
class ExcitationMonitor:
    """Tracks S_k = sum phi_i^T Gamma_i phi_i and its smallest eigenvalue.

    ``observe`` accumulates every measurement; the O(n^3) eigensolve only runs
    when ``evaluate`` is set, so callers choose the monitoring cadence.  The
    first evaluated step whose lambda_min exceeds the threshold is recorded as
    the rank-attainment step.
    """

    n: int
    threshold: float | None = None
    s: np.ndarray = field(init=False)
    k_rank: int | None = field(init=False, default=None)
    lambda_min_at_krank: float = field(init=False, default=float("nan"))
    steps: list[int] = field(init=False, default_factory=list)
    lambda_min_history: list[float] = field(init=False, default_factory=list)

    def __post_init__(self):
        self.s = np.zeros((self.n, self.n))
        self._k = 0

    def observe(self, m: MeasurementTriple, evaluate: bool = True) -> float | None:
        """Accumulate one measurement; return lambda_min(S_k) when evaluated."""
        self.s += m.phi.T @ (m.gamma @ m.phi)
        k = self._k
        self._k += 1
        if not evaluate:
            return None
        pair = sym_eigen(symmetrize(self.s))
        lam_min = float(pair.values[-1])
        lam_max = float(pair.values[0])
        self.steps.append(k)
        self.lambda_min_history.append(lam_min)
        if self.k_rank is None:
            thr = self.threshold
            if thr is None:
                thr = RANK_THRESHOLD_REL * (1.0 + max(lam_max, 0.0))
            if lam_min > thr:
                self.k_rank = k
                self.lambda_min_at_krank = lam_min
        return lam_min


def detect_k_rank(history: History, threshold: float | None = None) -> int | None:
    """Smallest step k with lambda_min(sum_{i<=k} phi_i^T Gamma_i phi_i) above
    the threshold, or None when the data never attain full rank.

    The default threshold is scale-relative (see ExcitationMonitor, which also
    exposes the running lambda_min sequence for excitation inspection).
    """
    if not history:
        return None
    monitor = ExcitationMonitor(n=history[0].phi.shape[1], threshold=threshold)
    for m in history:
        monitor.observe(m, evaluate=True)
        if monitor.k_rank is not None:
            return monitor.k_rank
    return None
