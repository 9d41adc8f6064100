"""Basis-activation schedule with pre-estimation start times.

Basis function j is first used in the estimate at time S(j) = floor((C_q*j)^(1/h)),
but its summary slot starts accumulating earlier, at tau_j = floor(c_circ*S(j)),
so that by activation it has seen at least (1 - c_circ)*n observations.  The
first q0 slots are live from the first observation.
"""

import math
from dataclasses import dataclass

# Guards floor() against representation error in x**(1/h) for exact powers.
_FLOOR_EPS = 1e-9


def _floor(x):
    return int(math.floor(x + _FLOOR_EPS))


@dataclass(frozen=True)
class SchedulerConfig:
    """Activation schedule parameters and the memory cap."""

    h: float = 1.0 / 3.0
    C_q: float = 0.5
    c_circ: float = 0.5
    q0: int = 5
    mem_cap: int | None = None  # None means unconstrained
    fixed_q: int | None = None  # test hook: pin the slot count permanently

    def __post_init__(self):
        if not 0 < self.h < 1:
            raise ValueError("h must lie in (0, 1)")
        if self.C_q <= 0:
            raise ValueError("C_q must be positive")
        if not 0 < self.c_circ < 1:
            raise ValueError("c_circ must lie in (0, 1)")
        if self.q0 < 1:
            raise ValueError("q0 must be >= 1")
        if self.mem_cap is not None and self.mem_cap < 1:
            raise ValueError("mem_cap must be positive")
        if self.fixed_q is not None and self.fixed_q < 1:
            raise ValueError("fixed_q must be >= 1")

    @property
    def cap_q(self):
        """Largest slot index the memory cap allows (q = min(s/3, ...))."""
        if self.fixed_q is not None:
            return self.fixed_q
        if self.mem_cap is None:
            return None
        return max(1, self.mem_cap // 3)

    def S(self, j):
        """Activation time of basis function j."""
        if j < 1:
            raise ValueError("slot index must be >= 1")
        return _floor((self.C_q * j) ** (1.0 / self.h))

    def tau(self, j):
        """Pre-estimation start time of slot j (1 for the initial q0 slots)."""
        if j <= self.q0:
            return 1
        return max(1, _floor(self.c_circ * self.S(j)))

    def active_count(self, n):
        """Number of basis functions participating in the estimate at time n."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.fixed_q is not None:
            return self.fixed_q
        q = max(self.q0, _floor(n ** self.h / self.C_q))
        if self.cap_q is not None:
            q = min(q, self.cap_q)
        return max(1, q)

    def slot_count(self, n):
        """Number of slots (active plus pre-estimating) open at time n."""
        if self.fixed_q is not None:
            return self.fixed_q
        j = max(1, self.q0)
        while self.tau(j + 1) <= n:
            j += 1
        if self.cap_q is not None:
            j = min(j, self.cap_q)
        return j
