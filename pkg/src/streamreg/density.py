"""Streaming orthogonal-series density estimation (OSDE).

The sketch keeps one running mean per basis slot,

    theta_j = (1/n_j) * sum_{i >= tau_j} psi_j(T_i),    n_j = n - tau_j + 1,

where slots beyond the initial q0 open at their scheduled pre-estimation
time tau_j.  The density estimate at time n uses the active slots only:
f_hat(t) = sum_{j<=p} theta_j psi_j(t).
"""

import numpy as np

from . import basis as basis_mod
from . import quadrature
from .errors import DegenerateDensityError, DomainError, StateError


class DensityState:
    """One-pass orthogonal-series sketch of the predictor density."""

    def __init__(self, basis, schedule):
        self.basis = basis
        self.schedule = schedule
        self.n = 0
        self.theta = np.zeros(0)
        self.start = np.zeros(0, dtype=np.int64)

    @property
    def active_count(self):
        """Number of slots currently contributing to the density estimate."""
        if self.n < 1:
            return 0
        return min(self.schedule.active_count(self.n), self.theta.size)

    def copy(self):
        dup = DensityState(self.basis, self.schedule)
        dup.n = self.n
        dup.theta = self.theta.copy()
        dup.start = self.start.copy()
        return dup

    def update(self, ts):
        """Fold one batch of predictor observations into the sketch.

        The batch is validated before any mutation, so a domain error leaves
        the state unchanged.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if ts.size == 0:
            raise ValueError("batch must be non-empty")
        if not self.basis.contains(ts):
            raise DomainError("batch contains t values outside the domain")

        n_old = self.n
        n_new = n_old + ts.size
        n_slots = self.schedule.slot_count(n_new)
        vals = basis_mod.eval_matrix(self.basis, n_slots, ts, check_domain=False)

        n_existing = self.theta.size
        if n_slots > n_existing:
            starts = np.array(
                [self.schedule.tau(j) for j in range(n_existing + 1, n_slots + 1)],
                dtype=np.int64,
            )
            self.theta = np.concatenate([self.theta, np.zeros(starts.size)])
            self.start = np.concatenate([self.start, starts])

        counts_old = np.maximum(n_old - self.start + 1, 0)
        counts_new = n_new - self.start + 1
        sums = vals.T @ np.ones(ts.size)
        # Slots opening mid-batch only see observations with index >= tau_j.
        for j in range(n_slots):
            if self.start[j] > n_old + 1:
                sums[j] = vals[self.start[j] - n_old - 1 :, j].sum()
        self.theta = (counts_old * self.theta + sums) / counts_new
        self.n = n_new

    def evaluate(self, t):
        """Raw series estimate f_hat(t) over the active slots."""
        p = self.active_count
        if p < 1:
            raise StateError("density sketch has no active slot yet")
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        V = basis_mod.eval_matrix(self.basis, p, t)
        out = V @ self.theta[:p]
        return float(out[0]) if scalar else out

    def _normalizer(self, n_nodes=None):
        p = max(self.active_count, 1)
        if n_nodes is None:
            # the clipping kink limits quadrature accuracy, so use a dense rule
            n_nodes = max(1 << 15, 8 * p)
        x, w = quadrature.rule(self.basis.lo, self.basis.hi, n_nodes)
        fx = np.maximum(self.evaluate(x), 0.0)
        z = float(np.dot(w, fx))
        if z <= 0.0:
            raise DegenerateDensityError(
                "clipped density estimate integrates to zero"
            )
        return z

    def evaluate_normalized(self, t, n_nodes=None):
        """Clipped-and-renormalized density: max(0, f_hat) / int max(0, f_hat)."""
        z = self._normalizer(n_nodes)
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        out = np.maximum(self.evaluate(np.atleast_1d(t)), 0.0) / z
        return float(out[0]) if scalar else out

    def gram(self, reg_basis, q, n_nodes=None):
        """Gram matrix H_q of the regression basis under the normalized density.

        Entries are int phi_j phi_l f_norm over the data domain by quadrature;
        using the clipped normalized density keeps the result PSD.
        """
        if q < 1:
            raise ValueError("q must be >= 1")
        p = self.active_count
        if n_nodes is None:
            n_nodes = quadrature.node_count(q, p)
        x, w = quadrature.rule(reg_basis.lo, reg_basis.hi, n_nodes)
        fx = np.maximum(self.evaluate(x), 0.0)
        z = float(np.dot(w, fx))
        if z <= 0.0:
            raise DegenerateDensityError(
                "clipped density estimate integrates to zero"
            )
        V = basis_mod.eval_matrix(reg_basis, q, x)
        H = V.T @ ((w * fx / z)[:, None] * V)
        return 0.5 * (H + H.T)
