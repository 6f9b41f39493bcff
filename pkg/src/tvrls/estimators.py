"""Recursive least-squares estimators with time-varying regularization.

Four estimator kinds share one update contract:

* ``classical``   — constant regularization, covariance-form MIL updates.
* ``tvr-general`` — the general recursion for arbitrary schedules, information
                    form, one Cholesky solve per step.
* ``fr``          — fading regularization; information form while the
                    regularization changes, switching to MIL updates once the
                    schedule goes quiet.
* ``r1fr``        — rank-1 fading regularization; covariance form throughout
                    via an augmented regressor row and an indefinite
                    block-diagonal weight.

All recursions compute, step for step, the exact minimizer of the cumulative
regularized least-squares cost; ``batch_solve`` is the direct (non-recursive)
reference implementation used as the test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionMismatch, NotPositiveDefinite
from .linalg import chol_factor, chol_solve, spd_inverse, symmetrize, _solve_small
from .schedules import (
    FULL,
    RANK1,
    ConstantSchedule,
    FadingParams,
    FadingSchedule,
    R1FRParams,
    Rank1FadingSchedule,
    RegDelta,
)

ESTIMATOR_KINDS = ("classical", "fr", "r1fr", "tvr-general")


@dataclass
class MeasurementTriple:
    """One step's data: regressor phi (p x n), measurement y (p,), weight gamma (p x p)."""

    phi: np.ndarray
    y: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        p = self.phi.shape[0]
        if self.y.shape != (p,) or self.gamma.shape != (p, p):
            raise DimensionMismatch(
                f"inconsistent measurement shapes: phi {self.phi.shape}, "
                f"y {self.y.shape}, gamma {self.gamma.shape}"
            )


History = list[MeasurementTriple]


@dataclass
class EstimatorState:
    """Estimate after k consumed measurements, plus whichever of P / P^-1 the
    estimator maintains and the last regularization step it saw."""

    theta: np.ndarray
    k: int
    prev_reg: RegDelta
    p_cov: np.ndarray | None = None
    p_info: np.ndarray | None = None


def batch_solve(history: History, reg: RegDelta) -> np.ndarray:
    """Direct minimizer of the cumulative regularized cost (the batch oracle).

    Returns (R_k + sum phi_i^T Gamma_i phi_i)^-1 (R_k theta_reg + sum phi_i^T Gamma_i y_i)
    by Cholesky solve.  Raises NotPositiveDefinite when the regularized data
    sum is not positive definite.
    """
    s = np.array(reg.r_current, dtype=float)
    t = reg.r_current @ reg.theta_reg
    for m in history:
        s += m.phi.T @ (m.gamma @ m.phi)
        t += m.phi.T @ (m.gamma @ m.y)
    f = chol_factor(symmetrize(s))
    return chol_solve(f, t)


def _gamma_inv(gamma: np.ndarray, step: int | None = None) -> np.ndarray:
    """Inverse of the (small) p x p weight, via Cholesky."""
    f = chol_factor(gamma, step=step)
    return chol_solve(f, np.eye(f.n))


def _data_residual(state_theta: np.ndarray, m: MeasurementTriple) -> np.ndarray:
    """phi^T Gamma (y - phi theta), the innovation pulled back to parameter space."""
    return m.phi.T @ (m.gamma @ (m.y - m.phi @ state_theta))


def _reg_correction(reg: RegDelta, prev: RegDelta, theta: np.ndarray) -> np.ndarray | None:
    """R_k (theta_reg,k - theta) - R_{k-1} (theta_reg,k-1 - theta).

    With an unchanged regularization target this telescopes to
    (R_k - R_{k-1}) (theta_reg - theta), which the structured delta evaluates
    in O(n) (rank-1) or O(n^2) (full) instead of two dense products.
    """
    same_target = reg.theta_reg is prev.theta_reg or np.array_equal(reg.theta_reg, prev.theta_reg)
    if same_target:
        if reg.is_zero:
            return None
        diff = reg.theta_reg - theta
        if reg.kind == RANK1:
            return (-reg.coeff * float(reg.direction @ diff)) * reg.direction
        return reg.delta @ diff
    return reg.r_current @ (reg.theta_reg - theta) - prev.r_current @ (prev.theta_reg - theta)


def _mil_cov_step(p_cov: np.ndarray, phi: np.ndarray, gamma_inv: np.ndarray) -> np.ndarray:
    """Covariance downdate P - P phi^T (Gamma^-1 + phi P phi^T)^-1 phi P.

    The matrix-inversion-lemma step specialized to symmetric P with the small
    weight inverse supplied directly; O(q n^2) for q regressor rows.
    """
    pu = p_cov @ phi.T
    inner = gamma_inv + phi @ pu
    x = _solve_small(inner, pu.T)
    return symmetrize(p_cov - pu @ x)


# ---------------------------------------------------------------------------
# information-form recursion (general time-varying regularization)
# ---------------------------------------------------------------------------


def tvr_init(reg0: RegDelta, m0: MeasurementTriple) -> EstimatorState:
    """First step of the general recursion.

    P_1^-1 = R_0 + phi_0^T Gamma_0 phi_0 and
    theta_1 = theta_reg,0 + P_1 phi_0^T Gamma_0 (y_0 - phi_0 theta_reg,0).
    """
    p_info = symmetrize(reg0.r_current + m0.phi.T @ (m0.gamma @ m0.phi))
    f = chol_factor(p_info, step=0, assume_symmetric=True)
    tr = reg0.theta_reg
    theta = tr + chol_solve(f, m0.phi.T @ (m0.gamma @ (m0.y - m0.phi @ tr)))
    return EstimatorState(theta=theta, k=1, prev_reg=reg0, p_info=p_info)


def tvr_update(state: EstimatorState, reg: RegDelta, m: MeasurementTriple) -> EstimatorState:
    """General information-form update, O(n^3) per step.

    P_{k+1}^-1 = P_k^-1 + phi^T Gamma phi + (R_k - R_{k-1}); the new estimate
    adds P_{k+1} [phi^T Gamma (y - phi theta) + R_k(theta_reg,k - theta)
    - R_{k-1}(theta_reg,k-1 - theta)], evaluated with one Cholesky solve.
    """
    if state.p_info is None:
        raise ConfigError("tvr_update requires an information-form state")
    p_info = state.p_info + m.phi.T @ (m.gamma @ m.phi)  # fresh array, safe to update in place
    if reg.kind == FULL:
        p_info += reg.delta
    elif not reg.is_zero:
        p_info += reg.delta_matrix()
    p_info = symmetrize(p_info)
    f = chol_factor(p_info, step=state.k, assume_symmetric=True)
    vec = _data_residual(state.theta, m)
    corr = _reg_correction(reg, state.prev_reg, state.theta)
    if corr is not None:
        vec = vec + corr
    theta = state.theta + chol_solve(f, vec)
    return EstimatorState(theta=theta, k=state.k + 1, prev_reg=reg, p_info=p_info)


# ---------------------------------------------------------------------------
# covariance-form recursion (classical RLS and rank-1 fading)
# ---------------------------------------------------------------------------


def mil_init(reg0: RegDelta, m0: MeasurementTriple, p0: np.ndarray) -> EstimatorState:
    """Covariance-form first step from P_0 = R_0^-1 (plain MIL, no augmentation)."""
    g_inv = _gamma_inv(m0.gamma, step=0)
    p_cov = _mil_cov_step(p0, m0.phi, g_inv)
    tr = reg0.theta_reg
    theta = tr + p_cov @ _data_residual(tr, m0)
    return EstimatorState(theta=theta, k=1, prev_reg=reg0, p_cov=p_cov)


def rls_mil_update(state: EstimatorState, m: MeasurementTriple) -> EstimatorState:
    """Classical RLS step: MIL covariance downdate plus the innovation update.

    Regularization deltas are zero here, so both correction terms cancel.
    """
    if state.p_cov is None:
        raise ConfigError("rls_mil_update requires a covariance-form state")
    g_inv = _gamma_inv(m.gamma, step=state.k)
    p_cov = _mil_cov_step(state.p_cov, m.phi, g_inv)
    theta = state.theta + p_cov @ _data_residual(state.theta, m)
    return EstimatorState(theta=theta, k=state.k + 1, prev_reg=state.prev_reg, p_cov=p_cov)


def r1fr_update(state: EstimatorState, reg: RegDelta, m: MeasurementTriple) -> EstimatorState:
    """Covariance-form update absorbing a rank-1 regularization change.

    Stacks the eigendirection under the regressor and gives it the (negative)
    weight -coeff, so one MIL step applies both the data update and the
    regularization downdate in O((p+1) n^2).  Zero deltas reduce to the
    classical step; a zero coefficient degenerates to it as well.
    """
    if state.p_cov is None:
        raise ConfigError("r1fr_update requires a covariance-form state")
    if reg.is_zero or reg.coeff == 0.0:
        out = rls_mil_update(state, m)
        out.prev_reg = reg
        return out
    if reg.kind != RANK1:
        raise ConfigError("r1fr_update handles rank-1 or zero regularization deltas only")
    p = m.phi.shape[0]
    g_inv = _gamma_inv(m.gamma, step=state.k)
    phibar = np.vstack((m.phi, reg.direction))
    gbar_inv = np.zeros((p + 1, p + 1))
    gbar_inv[:p, :p] = g_inv
    gbar_inv[p, p] = -1.0 / reg.coeff  # indefinite: this row removes information
    p_cov = _mil_cov_step(state.p_cov, phibar, gbar_inv)
    vec = _data_residual(state.theta, m)
    corr = _reg_correction(reg, state.prev_reg, state.theta)
    if corr is not None:
        vec = vec + corr
    theta = state.theta + p_cov @ vec
    return EstimatorState(theta=theta, k=state.k + 1, prev_reg=reg, p_cov=p_cov)


# ---------------------------------------------------------------------------
# estimator objects: schedule + state behind one contract
# ---------------------------------------------------------------------------


class _EstimatorBase:
    """Common contract: feed measurements in order, read the current estimate."""

    kind = "base"

    def __init__(self, schedule):
        self.schedule = schedule
        self.n = schedule.n
        self.state: EstimatorState | None = None

    @property
    def k(self) -> int:
        """Number of measurements consumed so far."""
        return 0 if self.state is None else self.state.k

    @property
    def last_reg(self) -> RegDelta | None:
        return None if self.state is None else self.state.prev_reg

    def update(self, m: MeasurementTriple) -> None:
        raise NotImplementedError

    def current_theta(self) -> np.ndarray:
        if self.state is None:
            raise ConfigError("estimator has not consumed any measurement yet")
        return np.array(self.state.theta)

    def current_P(self) -> np.ndarray:
        if self.state is None:
            raise ConfigError("estimator has not consumed any measurement yet")
        if self.state.p_cov is not None:
            return np.array(self.state.p_cov)
        return spd_inverse(self.state.p_info)

    def current_P_inv(self) -> np.ndarray:
        if self.state is None:
            raise ConfigError("estimator has not consumed any measurement yet")
        if self.state.p_info is not None:
            return np.array(self.state.p_info)
        return spd_inverse(self.state.p_cov)


class InfoFormEstimator(_EstimatorBase):
    """General recursion in information form; optionally hands over to MIL
    updates once the schedule stops changing (the fading-regularization path)."""

    def __init__(self, schedule, *, switch_to_mil: bool = False, kind: str = "tvr-general"):
        super().__init__(schedule)
        self.kind = kind
        self._switch_to_mil = switch_to_mil

    def update(self, m: MeasurementTriple) -> None:
        reg = self.schedule.step(self.k)
        if self.state is None:
            self.state = tvr_init(reg, m)
            return
        if self.state.p_cov is not None:
            # already in the MIL phase; the schedule is quiet from here on
            if not reg.is_zero:
                raise ConfigError("schedule changed again after the MIL handover")
            self.state = r1fr_update(self.state, reg, m)
            return
        if self._switch_to_mil and reg.is_zero:
            p_cov = spd_inverse(self.state.p_info)
            self.state = replace(self.state, p_cov=p_cov, p_info=None)
            self.state = r1fr_update(self.state, reg, m)
            return
        self.state = tvr_update(self.state, reg, m)


class CovFormEstimator(_EstimatorBase):
    """Covariance-form recursion from P_0 = R_0^-1; handles zero and rank-1
    regularization deltas (classical RLS and rank-1 fading)."""

    def __init__(self, schedule, *, kind: str = "classical"):
        super().__init__(schedule)
        self.kind = kind
        self._p0 = spd_inverse(schedule.r0)

    def update(self, m: MeasurementTriple) -> None:
        reg = self.schedule.step(self.k)
        if self.state is None:
            self.state = mil_init(reg, m, self._p0)
            return
        self.state = r1fr_update(self.state, reg, m)


def make_estimator(
    kind: str,
    *,
    r0: np.ndarray | None = None,
    theta_reg: np.ndarray | None = None,
    mu: float | None = None,
    k_cut: int | None = None,
    j_cut: int | None = None,
    schedule=None,
):
    """Build an estimator of the given kind behind the common update contract.

    classical    requires r0;
    fr           requires r0 and mu (k_cut optional, None = never cut);
    r1fr         requires r0 and mu (j_cut optional, None = never cut);
    tvr-general  takes an explicit schedule, or builds a fading schedule from
                 r0/mu/k_cut when given.
    """
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"unknown estimator kind {kind!r}; expected one of {ESTIMATOR_KINDS}")
    if kind == "tvr-general":
        if schedule is None:
            if r0 is None or mu is None:
                raise ConfigError("tvr-general needs a schedule, or r0 and mu for a fading one")
            schedule = FadingSchedule(FadingParams(r0=np.asarray(r0, dtype=float), mu=mu, k_cut=k_cut), theta_reg)
        return InfoFormEstimator(schedule, switch_to_mil=False, kind=kind)
    if schedule is not None:
        raise ConfigError(f"estimator kind {kind!r} builds its own schedule; pass parameters instead")
    if r0 is None:
        raise ConfigError(f"estimator kind {kind!r} requires r0")
    r0 = np.asarray(r0, dtype=float)
    if kind == "classical":
        return CovFormEstimator(ConstantSchedule(r0, theta_reg), kind=kind)
    if mu is None:
        raise ConfigError(f"estimator kind {kind!r} requires mu")
    if kind == "fr":
        sched = FadingSchedule(FadingParams(r0=r0, mu=mu, k_cut=k_cut), theta_reg)
        return InfoFormEstimator(sched, switch_to_mil=True, kind=kind)
    sched = Rank1FadingSchedule(R1FRParams(r0=r0, mu=mu, j_cut=j_cut), theta_reg)
    return CovFormEstimator(sched, kind="r1fr")
