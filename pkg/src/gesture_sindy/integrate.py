"""High-level integration built on the Dormand-Prince kernels.

Two interchangeable kernels exist: a Cython extension
(``gesture_sindy._dpcore``) and a pure-Python twin (``_dpcore_py``).
By default the compiled one is used when it imported cleanly; set
``GESTURE_SINDY_BACKEND=python`` or ``=compiled`` to force a choice,
or pass ``backend=`` per call. ``benchmarks/bench_integrate.py``
compares the two.
"""

import math
import os

import numpy as np

from .errors import IntegrationError
from .oscillators import MODEL_FORMS, ActivationSchedule, OscillatorParams
from .trajectory import Trajectory

__all__ = [
    "integrate",
    "integrate_terms",
    "available_backends",
    "default_backend",
    "get_kernel",
]

_ACT_KINDS = {None: 0, "step": 1, "ramped": 2}


def available_backends():
    """Names of kernels importable in this environment."""
    names = []
    try:
        from . import _dpcore  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def get_kernel(backend=None):
    """Resolve a kernel module by name (None -> env var -> auto)."""
    if backend is None:
        backend = os.environ.get("GESTURE_SINDY_BACKEND", "auto")
    if backend not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend in ("auto", "compiled"):
        try:
            from . import _dpcore
            return _dpcore
        except ImportError:
            if backend == "compiled":
                raise RuntimeError(
                    "compiled backend requested but the extension is not built"
                ) from None
    from . import _dpcore_py
    return _dpcore_py


def default_backend():
    """Name of the kernel ``integrate`` will use by default."""
    kernel = get_kernel()
    return "compiled" if kernel.__name__.endswith("_dpcore") else "python"


def _check_grid(tspan, dt):
    t0, t1 = float(tspan[0]), float(tspan[1])
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise ValueError(f"tspan must be finite with t1 > t0, got {tspan!r}")
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    return t0, t1


def integrate(model, params, tspan, dt, activation=None,
              rtol=1e-8, atol=1e-10, max_step=math.inf, backend=None):
    """Simulate a named oscillator model on a uniform output grid.

    model is one of the keys of ``MODEL_FORMS``; params an
    :class:`OscillatorParams`; activation an
    :class:`ActivationSchedule` or None for always-on. Returns a
    :class:`Trajectory` whose acceleration column is the model
    right-hand side evaluated at the sampled states.
    """
    if model not in MODEL_FORMS:
        raise ValueError(f"unknown model {model!r}")
    if not isinstance(params, OscillatorParams):
        raise TypeError("params must be an OscillatorParams")
    if activation is not None and not isinstance(activation, ActivationSchedule):
        raise TypeError("activation must be an ActivationSchedule or None")
    t0, t1 = _check_grid(tspan, dt)
    kind = _ACT_KINDS[None if activation is None else activation.kind]
    ta = tb = tc = td = 0.0
    if activation is not None:
        ta, tb = activation.ta, activation.tb
        if activation.kind == "ramped":
            tc, td = activation.tc, activation.td
    kernel = get_kernel(backend)
    Y, F = kernel.solve(
        MODEL_FORMS[model], params.k, params.b, params.d, params.T, params.x0,
        kind, ta, tb, tc, td, (params.x0, params.v0),
        t0, t1, dt, rtol, atol, max_step,
    )
    n = Y.shape[0]
    t = t0 + dt * np.arange(n)
    return Trajectory(t=t, x=Y[:, 0], v=Y[:, 1], a=F[:, 1])


def integrate_terms(coefficients, exponents, y0, tspan, dt,
                    rtol=1e-8, atol=1e-10, max_step=math.inf, backend=None):
    """Integrate an autonomous polynomial system dy_i/dt = sum c_ij prod y^e_j.

    coefficients has shape (n_state, n_terms) and exponents
    (n_terms, n_state). Returns (t, Y, F) where F holds the system
    right-hand side at each sample. Used to replay discovered models.
    """
    coeffs = np.ascontiguousarray(coefficients, dtype=float)
    exps = np.ascontiguousarray(exponents, dtype=np.int64)
    if coeffs.ndim != 2 or exps.ndim != 2:
        raise ValueError("coefficients and exponents must be 2-D")
    n_state = coeffs.shape[0]
    if exps.shape != (coeffs.shape[1], n_state):
        raise ValueError(
            f"exponents shape {exps.shape} does not match "
            f"coefficients shape {coeffs.shape}"
        )
    if np.any(exps < 0):
        raise ValueError("exponents must be nonnegative")
    y0 = [float(v) for v in y0]
    if len(y0) != n_state:
        raise ValueError(f"y0 length {len(y0)} != n_state {n_state}")
    if not all(math.isfinite(v) for v in y0):
        raise IntegrationError("non-finite initial state", last_time=tspan[0])
    t0, t1 = _check_grid(tspan, dt)
    kernel = get_kernel(backend)
    Y, F = kernel.solve(
        4, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0.0, 0.0, 0.0, 0.0, y0,
        t0, t1, dt, rtol, atol, max_step, coeffs, exps,
    )
    t = t0 + dt * np.arange(Y.shape[0])
    return t, Y, F
