"""Adaptive Dormand-Prince 5(4) integration of gesture models.

Pure-Python twin of the compiled kernel in ``_dpcore.pyx``. Both expose
``solve`` with identical semantics; :mod:`gesture_sindy.integrate`
picks whichever is available (or whichever the caller forces).

The stepper uses the classic DOPRI5 pair with Shampine's quartic
dense-output interpolant, an RMS error norm over
``atol + rtol * max(|y|, |y_new|)``, and a 0.9 safety factor with step
growth clamped to [0.2, 10]. Activation kinks are handled by splitting
the span at the schedule's breakpoints and resolving the activation
branch per segment, so stage evaluations at a discontinuity always see
the one-sided limit that is valid inside the segment being stepped.
"""

import math

import numpy as np

from .errors import IntegrationError

# model form codes shared with the compiled kernel
FORM_LINEAR = 0
FORM_CUBIC = 1
FORM_CUBIC_VELOCITY = 2
FORM_LINEAR_REFORMULATED = 3
FORM_POLYNOMIAL = 4

# activation kinds
ACT_NONE = 0
ACT_STEP = 1
ACT_RAMPED = 2

# Dormand-Prince 5(4) tableau
C2 = 1.0 / 5.0
C3 = 3.0 / 10.0
C4 = 4.0 / 5.0
C5 = 8.0 / 9.0
A21 = 1.0 / 5.0
A31 = 3.0 / 40.0
A32 = 9.0 / 40.0
A41 = 44.0 / 45.0
A42 = -56.0 / 15.0
A43 = 32.0 / 9.0
A51 = 19372.0 / 6561.0
A52 = -25360.0 / 2187.0
A53 = 64448.0 / 6561.0
A54 = -212.0 / 729.0
A61 = 9017.0 / 3168.0
A62 = -355.0 / 33.0
A63 = 46732.0 / 5247.0
A64 = 49.0 / 176.0
A65 = -5103.0 / 18656.0
B1 = 35.0 / 384.0
B3 = 500.0 / 1113.0
B4 = 125.0 / 192.0
B5 = -2187.0 / 6784.0
B6 = 11.0 / 84.0
E1 = 71.0 / 57600.0
E3 = -71.0 / 16695.0
E4 = 71.0 / 1920.0
E5 = -17253.0 / 339200.0
E6 = 22.0 / 525.0
E7 = -1.0 / 40.0

# dense-output quartic: weight of stage j is theta * horner(PJ...)
P11 = -8048581381.0 / 2820520608.0
P12 = 8663915743.0 / 2820520608.0
P13 = -12715105075.0 / 11282082432.0
P31 = 131558114200.0 / 32700410799.0
P32 = -68118460800.0 / 10900136933.0
P33 = 87487479700.0 / 32700410799.0
P41 = -1754552775.0 / 470086768.0
P42 = 14199869525.0 / 1410260304.0
P43 = -10690763975.0 / 1880347072.0
P51 = 127303824393.0 / 49829197408.0
P52 = -318862633887.0 / 49829197408.0
P53 = 701980252875.0 / 199316789632.0
P61 = -282668133.0 / 205662961.0
P62 = 2019193451.0 / 616988883.0
P63 = -1453857185.0 / 822651844.0
P71 = 40617522.0 / 29380423.0
P72 = -110615467.0 / 29380423.0
P73 = 69997945.0 / 29380423.0

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0

# activation branches resolved per segment
BRANCH_OFF = 0
BRANCH_ON = 1
BRANCH_RISE = 2
BRANCH_FALL = 3
BRANCH_FORMULA = 4

_HALF_PI = 0.5 * math.pi


def _classify(act_kind, ta, tb, tc, td, tm):
    """Activation branch active at time tm (tm away from breakpoints)."""
    if act_kind == ACT_NONE:
        return BRANCH_ON
    if act_kind == ACT_STEP:
        return BRANCH_ON if ta <= tm <= tb else BRANCH_OFF
    if tm < ta:
        return BRANCH_OFF
    if tm < tb:
        return BRANCH_RISE
    if tm < tc:
        return BRANCH_ON
    if tm < td:
        return BRANCH_FALL
    return BRANCH_OFF


def _make_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td, coeffs, exps):
    """Build rhs(branch, t, y, out) writing dy/dt into ``out``."""
    if form == FORM_POLYNOMIAL:
        poly = []
        for row in coeffs:
            terms = []
            for j, coef in enumerate(row):
                if coef != 0.0:
                    terms.append((float(coef), tuple(int(e) for e in exps[j])))
            poly.append(terms)

        def rhs(branch, t, y, out):
            for i, terms in enumerate(poly):
                acc = 0.0
                for coef, ex in terms:
                    val = coef
                    for j, e in enumerate(ex):
                        yj = y[j]
                        while e > 0:
                            val *= yj
                            e -= 1
                    acc += val
                out[i] = acc

        return rhs

    def rhs(branch, t, y, out):
        if branch == BRANCH_ON:
            a = 1.0
        elif branch == BRANCH_OFF:
            a = 0.0
        elif branch == BRANCH_RISE:
            a = math.sin(_HALF_PI * (t - ta) / (tb - ta))
        elif branch == BRANCH_FALL:
            a = math.sin(_HALF_PI * (t - td) / (tc - td))
        elif act_kind == ACT_NONE:
            a = 1.0
        elif act_kind == ACT_STEP:
            a = 1.0 if ta <= t <= tb else 0.0
        elif t < ta or t >= td:
            a = 0.0
        elif t < tb:
            a = math.sin(_HALF_PI * (t - ta) / (tb - ta))
        elif t < tc:
            a = 1.0
        else:
            a = math.sin(_HALF_PI * (t - td) / (tc - td))
        x = y[0]
        v = y[1]
        out[0] = v
        if form == FORM_LINEAR:
            out[1] = -a * (b * v + k * (x - T))
        elif form == FORM_CUBIC:
            u = x - T
            out[1] = -a * (b * v + k * u - d * u * u * u)
        elif form == FORM_CUBIC_VELOCITY:
            u = x - T
            out[1] = -a * (b * v * v * v + k * u - d * u * u * u)
        else:
            out[1] = -a * (b * v + k * x - 0.5 * k * (T + x0))

    return rhs


def _initial_step(rhs, branch, t, y, f, t_end, rtol, atol, max_step, n, ytmp, ftmp):
    """Hairer's starting step size heuristic."""
    span = t_end - t
    d0sq = 0.0
    d1sq = 0.0
    for j in range(n):
        sc = atol + rtol * abs(y[j])
        r0 = y[j] / sc
        r1 = f[j] / sc
        d0sq += r0 * r0
        d1sq += r1 * r1
    d0 = math.sqrt(d0sq / n)
    d1 = math.sqrt(d1sq / n)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    for j in range(n):
        ytmp[j] = y[j] + h0 * f[j]
    rhs(branch, t + h0, ytmp, ftmp)
    d2sq = 0.0
    for j in range(n):
        sc = atol + rtol * abs(y[j])
        r = (ftmp[j] - f[j]) / sc
        d2sq += r * r
    d2 = math.sqrt(d2sq / n) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    return min(100.0 * h0, h1, span, max_step)


def solve(form, k, b, d, T, x0, act_kind, ta, tb, tc, td, y0,
          t0, t1, dt, rtol, atol, max_step, coeffs=None, exps=None):
    """Integrate one gesture model and sample it on a uniform grid.

    Returns (Y, F): state and model derivative at t0 + i*dt for
    i = 0..floor((t1-t0)/dt (+slack)). Raises IntegrationError when the
    step size underflows or the state leaves the finite range.
    """
    n = len(y0)
    rhs = _make_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td, coeffs, exps)
    n_out = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    Y = np.empty((n_out, n))
    Fout = np.empty((n_out, n))

    if act_kind == ACT_STEP:
        cand = (ta, tb)
    elif act_kind == ACT_RAMPED:
        cand = (ta, tb, tc, td)
    else:
        cand = ()
    edges = [t0]
    for c in cand:
        if t0 < c < t1 and c - edges[-1] > 1e-15 * (abs(c) + 1.0):
            edges.append(c)
    edges.append(t1)

    y = [float(val) for val in y0]
    k1 = [0.0] * n
    k2 = [0.0] * n
    k3 = [0.0] * n
    k4 = [0.0] * n
    k5 = [0.0] * n
    k6 = [0.0] * n
    k7 = [0.0] * n
    y_new = [0.0] * n
    ytmp = [0.0] * n
    fs = [0.0] * n

    emit_tol = 1e-9
    i_out = 0
    rhs(BRANCH_FORMULA, t0, y, fs)
    for j in range(n):
        if not math.isfinite(fs[j]):
            raise IntegrationError("non-finite derivative at start", last_time=t0)
    while i_out < n_out and t0 + i_out * dt <= t0 + emit_tol:
        for j in range(n):
            Y[i_out, j] = y[j]
            Fout[i_out, j] = fs[j]
        i_out += 1

    for s in range(len(edges) - 1):
        ts = edges[s]
        te = edges[s + 1]
        if te - ts <= 1e-15 * (abs(te) + 1.0):
            continue
        branch = _classify(act_kind, ta, tb, tc, td, 0.5 * (ts + te))
        t = ts
        rhs(branch, t, y, k1)
        for j in range(n):
            if not math.isfinite(k1[j]):
                raise IntegrationError("non-finite derivative", last_time=t)
        h = _initial_step(rhs, branch, t, y, k1, te, rtol, atol, max_step, n, ytmp, k2)
        end_tol = 1e-15 * (abs(te) + 1.0)
        while te - t > end_tol:
            if h > te - t:
                h = te - t
            if h < 1e-14 * max(abs(t), 1.0):
                raise IntegrationError("step size underflow", last_time=t)
            for j in range(n):
                ytmp[j] = y[j] + h * (A21 * k1[j])
            rhs(branch, t + C2 * h, ytmp, k2)
            for j in range(n):
                ytmp[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
            rhs(branch, t + C3 * h, ytmp, k3)
            for j in range(n):
                ytmp[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
            rhs(branch, t + C4 * h, ytmp, k4)
            for j in range(n):
                ytmp[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
            rhs(branch, t + C5 * h, ytmp, k5)
            for j in range(n):
                ytmp[j] = y[j] + h * (
                    A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]
                )
            rhs(branch, t + h, ytmp, k6)
            for j in range(n):
                y_new[j] = y[j] + h * (
                    B1 * k1[j] + B3 * k3[j] + B4 * k4[j] + B5 * k5[j] + B6 * k6[j]
                )
            rhs(branch, t + h, y_new, k7)
            err_sq = 0.0
            finite = True
            for j in range(n):
                if not math.isfinite(y_new[j]):
                    finite = False
                    break
                e = h * (
                    E1 * k1[j] + E3 * k3[j] + E4 * k4[j]
                    + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]
                )
                if not math.isfinite(e):
                    finite = False
                    break
                sc = atol + rtol * max(abs(y[j]), abs(y_new[j]))
                r = e / sc
                err_sq += r * r
            norm = math.sqrt(err_sq / n) if finite else math.inf
            if norm <= 1.0:
                t_new = t + h
                while i_out < n_out:
                    t_out = t0 + i_out * dt
                    if t_out > t_new + emit_tol:
                        break
                    theta = (t_out - t) / h
                    q1 = theta * (1.0 + theta * (P11 + theta * (P12 + theta * P13)))
                    q3 = theta * (theta * (P31 + theta * (P32 + theta * P33)))
                    q4 = theta * (theta * (P41 + theta * (P42 + theta * P43)))
                    q5 = theta * (theta * (P51 + theta * (P52 + theta * P53)))
                    q6 = theta * (theta * (P61 + theta * (P62 + theta * P63)))
                    q7 = theta * (theta * (P71 + theta * (P72 + theta * P73)))
                    for j in range(n):
                        yj = y[j] + h * (
                            q1 * k1[j] + q3 * k3[j] + q4 * k4[j]
                            + q5 * k5[j] + q6 * k6[j] + q7 * k7[j]
                        )
                        ytmp[j] = yj
                        Y[i_out, j] = yj
                    rhs(BRANCH_FORMULA, t_out, ytmp, fs)
                    for j in range(n):
                        Fout[i_out, j] = fs[j]
                    i_out += 1
                t = t_new
                y, y_new = y_new, y
                k1, k7 = k7, k1
                if norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * norm ** -0.2)
                h = min(h * factor, max_step)
            else:
                if math.isfinite(norm):
                    h *= max(MIN_FACTOR, SAFETY * norm ** -0.2)
                else:
                    h *= MIN_FACTOR

    # any grid point not yet emitted sits within the emission slack of t1
    while i_out < n_out:
        for j in range(n):
            Y[i_out, j] = y[j]
        rhs(BRANCH_FORMULA, t0 + i_out * dt, y, fs)
        for j in range(n):
            Fout[i_out, j] = fs[j]
        i_out += 1
    return Y, Fout
