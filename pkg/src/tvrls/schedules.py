"""Regularization schedules.

A schedule emits one :class:`RegDelta` per measurement step k: the current
regularization matrix R_k, the change R_k - R_{k-1} in structured form (zero,
rank-1, or a full matrix), and the regularization target theta_reg for that
step.  Step 0 carries the initial matrix and a Zero delta by convention; the
estimators consume only ``r_current`` and ``theta_reg`` at initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from .errors import ConfigError, DimensionMismatch, NotPositiveDefinite
from .linalg import EigenPair, chol_factor, symmetrize, sym_eigen

ZERO = "zero"
RANK1 = "rank1"
FULL = "full"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RegDelta:
    """Regularization output for one step.

    kind is one of {"zero", "rank1", "full"}.  For "rank1" the change is
    R_k = R_{k-1} - coeff * direction direction^T; for "full" the change is
    the stored ``delta`` matrix; for "zero" R_k = R_{k-1}.
    """

    kind: str
    r_current: np.ndarray
    theta_reg: np.ndarray
    delta: np.ndarray | None = None
    coeff: float | None = None
    direction: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO

    def delta_matrix(self) -> np.ndarray:
        """The change R_k - R_{k-1} as a dense matrix."""
        n = self.r_current.shape[0]
        if self.kind == ZERO:
            return np.zeros((n, n))
        if self.kind == RANK1:
            return -self.coeff * np.outer(self.direction, self.direction)
        return np.array(self.delta, dtype=float)


def _validate_r0_theta(r0: np.ndarray, theta_reg: np.ndarray | None):
    r0 = np.asarray(r0, dtype=float)
    if r0.ndim != 2 or r0.shape[0] != r0.shape[1]:
        raise DimensionMismatch(f"r0 must be square, got shape {r0.shape}")
    n = r0.shape[0]
    if theta_reg is None:
        theta_reg = np.zeros(n)
    theta_reg = np.asarray(theta_reg, dtype=float)
    if theta_reg.shape != (n,):
        raise DimensionMismatch(f"theta_reg must have shape ({n},), got {theta_reg.shape}")
    return _readonly(r0), _readonly(theta_reg)


class ConstantSchedule:
    """Classical RLS regularization: R_k = R_0 and theta_reg,k = theta_0 forever."""

    def __init__(self, r0: np.ndarray, theta_reg: np.ndarray | None = None):
        self.r0, self.theta_reg = _validate_r0_theta(r0, theta_reg)
        self.n = self.r0.shape[0]

    def step(self, k: int) -> RegDelta:
        if k < 0:
            raise ConfigError("step index must be nonnegative")
        return RegDelta(kind=ZERO, r_current=self.r0, theta_reg=self.theta_reg)


@dataclass(frozen=True)
class FadingParams:
    """Geometric fading: R_k = mu^k R_0 for k < k_cut, zero afterwards.

    k_cut=None means the regularization fades forever without being cut.
    """

    r0: np.ndarray
    mu: float
    k_cut: int | None = None

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if self.k_cut is not None and self.k_cut < 0:
            raise ConfigError(f"k_cut must be nonnegative or None, got {self.k_cut}")
        chol_factor(self.r0)  # r0 must be positive definite


class FadingSchedule:
    """Fading regularization with optional cutoff to exactly zero."""

    def __init__(self, params: FadingParams, theta_reg: np.ndarray | None = None):
        self.params = params
        self.r0, self.theta_reg = _validate_r0_theta(params.r0, theta_reg)
        self.n = self.r0.shape[0]
        self._zeros = _readonly(np.zeros((self.n, self.n)))

    def r_at(self, k: int) -> np.ndarray:
        mu, k_cut = self.params.mu, self.params.k_cut
        if k_cut is not None and k >= k_cut:
            return self._zeros
        return mu**k * self.r0

    def step(self, k: int) -> RegDelta:
        if k < 0:
            raise ConfigError("step index must be nonnegative")
        mu, k_cut = self.params.mu, self.params.k_cut
        if k == 0:
            return RegDelta(kind=ZERO, r_current=self.r_at(0), theta_reg=self.theta_reg)
        if k_cut is not None and k > k_cut:
            return RegDelta(kind=ZERO, r_current=self._zeros, theta_reg=self.theta_reg)
        if k_cut is not None and k == k_cut:
            # R_k drops from mu^(k-1) R_0 straight to zero.
            delta = -(mu ** (k - 1)) * self.r0
            return RegDelta(kind=FULL, r_current=self._zeros, theta_reg=self.theta_reg, delta=delta)
        delta = -(mu ** (k - 1)) * (1.0 - mu) * self.r0
        return RegDelta(kind=FULL, r_current=self.r_at(k), theta_reg=self.theta_reg, delta=delta)


@dataclass(frozen=True)
class R1FRParams:
    """Rank-1 fading along the eigenvectors of R_0.

    One cycle sweeps all n eigendirections; after cycle j_cut the matrix is
    exactly zero (step (j_cut+1)*n onwards).  j_cut=None fades forever.
    """

    r0: np.ndarray
    mu: float
    j_cut: int | None = None
    eigen: EigenPair = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0):
            raise ConfigError(f"mu must lie in (0, 1), got {self.mu}")
        if self.j_cut is not None and self.j_cut < 0:
            raise ConfigError(f"j_cut must be nonnegative or None, got {self.j_cut}")
        chol_factor(self.r0)
        pair = sym_eigen(np.asarray(self.r0, dtype=float))
        if pair.values[-1] <= 0.0:
            raise NotPositiveDefinite("r0 has a nonpositive eigenvalue")
        object.__setattr__(self, "eigen", pair)

    @property
    def cutoff_step(self) -> int | None:
        """Last step with a nonzero rank-1 reduction, (j_cut+1)*n."""
        if self.j_cut is None:
            return None
        return (self.j_cut + 1) * self.r0.shape[0]


class Rank1FadingSchedule:
    """Stateful rank-1 fading schedule; must be stepped sequentially from k=0.

    Eigendirections are swept in descending-eigenvalue order within each cycle
    (ties broken by eigensolver output order).  Cycle boundaries reproduce the
    plain fading matrices: R_{j n} = mu^(j n) R_0.
    """

    def __init__(self, params: R1FRParams, theta_reg: np.ndarray | None = None):
        self.params = params
        self.r0, self.theta_reg = _validate_r0_theta(params.r0, theta_reg)
        self.n = self.r0.shape[0]
        self._zeros = _readonly(np.zeros((self.n, self.n)))
        self._r = np.array(self.r0)
        self._next_k = 0

    def step(self, k: int) -> RegDelta:
        if k != self._next_k:
            raise ConfigError(
                f"rank-1 fading schedule must be stepped sequentially; expected {self._next_k}, got {k}"
            )
        self._next_k += 1
        n, mu, j_cut = self.n, self.params.mu, self.params.j_cut
        cutoff = self.params.cutoff_step
        if k == 0:
            return RegDelta(kind=ZERO, r_current=self.r0, theta_reg=self.theta_reg)
        if cutoff is not None and k > cutoff:
            return RegDelta(kind=ZERO, r_current=self._zeros, theta_reg=self.theta_reg)
        j, l = divmod(k - 1, n)
        d = float(self.params.eigen.values[l])
        v = self.params.eigen.vectors[:, l]
        if j_cut is None or j < j_cut:
            coeff = mu ** (j * n) * (1.0 - mu**n) * d
        else:  # final cycle: each direction is removed outright
            coeff = mu ** (j * n) * d
        if cutoff is not None and k == cutoff:
            # The last reduction empties the matrix; snap accumulated round-off.
            self._r = np.zeros((n, n))
        else:
            # fused rank-1 downdate; no n^2 temporaries on the estimator hot path
            self._r = dger(-coeff, v, v, a=self._r.copy().T, overwrite_a=1).T
        return RegDelta(
            kind=RANK1,
            r_current=self._r,
            theta_reg=self.theta_reg,
            coeff=coeff,
            direction=v,
        )


def r1fr_closed_form(params: R1FRParams, k: int) -> np.ndarray:
    """Closed-form R_k of the rank-1 fading schedule; test oracle only.

    Writing k = j*n + l with 0 <= l < n, the first l eigendirections of the
    current cycle have already been reduced by the per-cycle factor mu^n:

        R_k = mu^(j n) * (mu^n * sum_{i<=l} d_i v_i v_i^T + sum_{i>l} d_i v_i v_i^T)

    for cycles j < j_cut; the final cycle j = j_cut removes directions outright
    and R_k = 0 for j > j_cut.
    """
    if k < 0:
        raise ConfigError("step index must be nonnegative")
    n = params.r0.shape[0]
    mu, j_cut = params.mu, params.j_cut
    j, l = divmod(k, n)
    if j_cut is not None and j > j_cut:
        return np.zeros((n, n))
    values, vectors = params.eigen.values, params.eigen.vectors
    weights = mu ** (j * n) * np.array(values)
    if j_cut is None or j < j_cut:
        weights[:l] *= mu**n
    else:
        weights[:l] = 0.0
    return symmetrize((vectors * weights) @ vectors.T)
