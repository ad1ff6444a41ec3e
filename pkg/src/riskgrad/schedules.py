"""Step-size schedules for the multi-timescale iterates.

Four polynomially decaying schedules plus the perturbation width used by the
two-sided quantile-gradient estimate. With the default exponents
``(1, 0.85, 0.7, 0.55)`` every schedule is non-summable and square-summable,
the ordering ``zeta1 = o(zeta2) = o(zeta3) = o(zeta4)`` holds, and
``sum_k (zeta2(k)/delta(k))^2`` is finite (2*(0.85 - 0.3) > 1).
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class StepSchedule:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c_delta: float = 1.0
    e1: float = 1.0
    e2: float = 0.85
    e3: float = 0.7
    e4: float = 0.55
    e_delta: float = 0.3

    def __post_init__(self):
        exps = (self.e1, self.e2, self.e3, self.e4)
        if any(not 0.5 < e <= 1.0 for e in exps):
            raise ValueError("each exponent must lie in (0.5, 1] "
                             "(non-summable, square-summable)")
        if not self.e1 > self.e2 > self.e3 > self.e4:
            raise ValueError("timescale exponents must satisfy e1 > e2 > e3 > e4")
        if self.e_delta <= 0.0 or 2.0 * (self.e2 - self.e_delta) <= 1.0:
            raise ValueError("perturbation exponent must satisfy "
                             "0 < e_delta and 2*(e2 - e_delta) > 1")
        if min(self.c1, self.c2, self.c3, self.c4, self.c_delta) <= 0.0:
            raise ValueError("coefficients must be positive")

    def zeta1(self, k: int) -> float:
        return self.c1 / k**self.e1

    def zeta2(self, k: int) -> float:
        return self.c2 / k**self.e2

    def zeta3(self, k: int) -> float:
        return self.c3 / k**self.e3

    def zeta4(self, k: int) -> float:
        return self.c4 / k**self.e4

    def delta(self, k: int) -> float:
        return self.c_delta / k**self.e_delta
