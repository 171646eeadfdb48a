"""Task-dynamic oscillator models of articulatory gestures.

A gesture is modeled as a critically-dampable point mass on a spring
(mass normalized to 1) driven toward a target position, optionally with
a cubic detuning of the restoring force or of the damping. Four model
forms are provided, each as a right-hand-side evaluator over the state
(x, v):

``linear``                 x'' = -b v - k (x - T)
``cubic``                  x'' = -b v - k (x - T) + d (x - T)^3
``cubic_velocity``         x'' = -b v^3 - k (x - T) + d (x - T)^3
``linear_reformulated``    x'' = -b v - k x + (k/2) (T + x0)

The reformulated variant is the linear model rewritten around the
virtual target (T + x0) / 2, which it approaches before the full
movement would complete. An activation schedule gates the entire force
bracket: x'' = -a(t) [b v + k (x - T) - d (x - T)^3], so the mass is
ballistic wherever a(t) = 0.
"""

import math
from dataclasses import dataclass

from .errors import InvalidStateError

__all__ = [
    "OscillatorParams",
    "ActivationSchedule",
    "activation",
    "eval_linear",
    "eval_cubic",
    "eval_cubic_velocity",
    "eval_linear_reformulated",
    "critical_damping",
    "virtual_target",
    "actual_target",
    "MODEL_FORMS",
    "MODEL_EVALS",
]


@dataclass(frozen=True)
class OscillatorParams:
    """Parameters of one gesture: stiffness k, damping b, cubic
    coefficient d, target T, and initial conditions (x0, v0).

    k must be positive and d nonnegative; b may be negative (negative
    damping produces overshoot and is occasionally useful for probing
    instability). All values must be finite.
    """

    k: float
    b: float
    d: float = 0.0
    T: float = 0.0
    x0: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        for name in ("k", "b", "d", "T", "x0", "v0"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.k <= 0:
            raise ValueError(f"stiffness k must be positive, got {self.k}")
        if self.d < 0:
            raise ValueError(f"cubic coefficient d must be nonnegative, got {self.d}")


@dataclass(frozen=True)
class ActivationSchedule:
    """Gating window for the oscillator force.

    ``step`` is 1 on the closed interval [ta, tb] and 0 elsewhere.
    ``ramped`` rises along a quarter sine on [ta, tb), holds 1 on
    [tb, tc), falls along a quarter sine on [tc, td), and is 0 outside.
    """

    kind: str
    ta: float
    tb: float
    tc: float = None
    td: float = None

    def __post_init__(self):
        if self.kind not in ("step", "ramped"):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if not (math.isfinite(self.ta) and math.isfinite(self.tb)):
            raise ValueError("activation times must be finite")
        if self.kind == "step":
            if not self.ta < self.tb:
                raise ValueError("step schedule requires ta < tb")
        else:
            if self.tc is None or self.td is None:
                raise ValueError("ramped schedule requires tc and td")
            if not (math.isfinite(self.tc) and math.isfinite(self.td)):
                raise ValueError("activation times must be finite")
            if not (self.ta < self.tb <= self.tc < self.td):
                raise ValueError("ramped schedule requires ta < tb <= tc < td")


def activation(schedule, t):
    """Activation level a(t) in [0, 1]; ``None`` means always on."""
    if schedule is None:
        return 1.0
    if schedule.kind == "step":
        return 1.0 if schedule.ta <= t <= schedule.tb else 0.0
    ta, tb, tc, td = schedule.ta, schedule.tb, schedule.tc, schedule.td
    if t < ta or t >= td:
        return 0.0
    if t < tb:
        return math.sin(2.0 * math.pi * (t - ta) / (4.0 * (tb - ta)))
    if t < tc:
        return 1.0
    return math.sin(2.0 * math.pi * (t - td) / (4.0 * (tc - td)))


def _check_state(state):
    x, v = state
    if not (math.isfinite(x) and math.isfinite(v)):
        raise InvalidStateError(f"non-finite state ({x!r}, {v!r})")
    return float(x), float(v)


def eval_linear(state, p):
    """(dx, dv) for the linear damped spring at full activation."""
    x, v = _check_state(state)
    return v, -p.b * v - p.k * (x - p.T)


def eval_cubic(state, p):
    """(dx, dv) with a cubic softening of the restoring force."""
    x, v = _check_state(state)
    u = x - p.T
    return v, -p.b * v - p.k * u + p.d * u**3


def eval_cubic_velocity(state, p):
    """(dx, dv) with cubic damping and cubic restoring detuning."""
    x, v = _check_state(state)
    u = x - p.T
    return v, -p.b * v**3 - p.k * u + p.d * u**3


def eval_linear_reformulated(state, p):
    """(dx, dv) for the linear model rewritten around the virtual target."""
    x, v = _check_state(state)
    return v, -p.b * v - p.k * x + 0.5 * p.k * (p.T + p.x0)


def critical_damping(k):
    """Damping that returns the unit mass to target fastest without overshoot."""
    if not (isinstance(k, (int, float)) and math.isfinite(k) and k > 0):
        raise ValueError(f"stiffness k must be positive and finite, got {k!r}")
    return 2.0 * math.sqrt(k)


def virtual_target(x0, T):
    """Halfway point x0 + (T - x0)/2 that a half-cycle movement reaches."""
    if not (math.isfinite(x0) and math.isfinite(T)):
        raise ValueError("x0 and T must be finite")
    return x0 + (T - x0) / 2.0

def actual_target(tv, x0):
    """Invert :func:`virtual_target`: the T whose halfway point is tv."""
    if not (math.isfinite(tv) and math.isfinite(x0)):
        raise ValueError("tv and x0 must be finite")
    return 2.0 * tv - x0


# stable integer codes shared with the integration kernels
MODEL_FORMS = {
    "linear": 0,
    "cubic": 1,
    "cubic_velocity": 2,
    "linear_reformulated": 3,
}

MODEL_EVALS = {
    "linear": eval_linear,
    "cubic": eval_cubic,
    "cubic_velocity": eval_cubic_velocity,
    "linear_reformulated": eval_linear_reformulated,
}
