# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) kernel.

Twin of ``_dpcore_py``: same ``solve`` signature, same semantics, same
floating point operation order, so the two backends agree bit for bit
on the same inputs. Keep any behavior change synchronized with the
pure-Python module.
"""

import numpy as np

from libc.math cimport INFINITY, fabs, isfinite, pow, sin, sqrt

from .errors import IntegrationError

FORM_LINEAR = 0
FORM_CUBIC = 1
FORM_CUBIC_VELOCITY = 2
FORM_LINEAR_REFORMULATED = 3
FORM_POLYNOMIAL = 4

ACT_NONE = 0
ACT_STEP = 1
ACT_RAMPED = 2

cdef double C2 = 1.0 / 5.0
cdef double C3 = 3.0 / 10.0
cdef double C4 = 4.0 / 5.0
cdef double C5 = 8.0 / 9.0
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0
cdef double A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0
cdef double A42 = -56.0 / 15.0
cdef double A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0
cdef double A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0
cdef double A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0
cdef double A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0
cdef double A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0
cdef double B3 = 500.0 / 1113.0
cdef double B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0
cdef double B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0
cdef double E3 = -71.0 / 16695.0
cdef double E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0
cdef double E6 = 22.0 / 525.0
cdef double E7 = -1.0 / 40.0

cdef double P11 = -8048581381.0 / 2820520608.0
cdef double P12 = 8663915743.0 / 2820520608.0
cdef double P13 = -12715105075.0 / 11282082432.0
cdef double P31 = 131558114200.0 / 32700410799.0
cdef double P32 = -68118460800.0 / 10900136933.0
cdef double P33 = 87487479700.0 / 32700410799.0
cdef double P41 = -1754552775.0 / 470086768.0
cdef double P42 = 14199869525.0 / 1410260304.0
cdef double P43 = -10690763975.0 / 1880347072.0
cdef double P51 = 127303824393.0 / 49829197408.0
cdef double P52 = -318862633887.0 / 49829197408.0
cdef double P53 = 701980252875.0 / 199316789632.0
cdef double P61 = -282668133.0 / 205662961.0
cdef double P62 = 2019193451.0 / 616988883.0
cdef double P63 = -1453857185.0 / 822651844.0
cdef double P71 = 40617522.0 / 29380423.0
cdef double P72 = -110615467.0 / 29380423.0
cdef double P73 = 69997945.0 / 29380423.0

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0

BRANCH_OFF = 0
BRANCH_ON = 1
BRANCH_RISE = 2
BRANCH_FALL = 3
BRANCH_FORMULA = 4

cdef double HALF_PI = 1.5707963267948966


cdef int _classify(int act_kind, double ta, double tb, double tc, double td,
                   double tm):
    if act_kind == 0:
        return 1
    if act_kind == 1:
        return 1 if (ta <= tm <= tb) else 0
    if tm < ta:
        return 0
    if tm < tb:
        return 2
    if tm < tc:
        return 1
    if tm < td:
        return 3
    return 0


cdef double _act(int branch, int act_kind, double t, double ta, double tb,
                 double tc, double td):
    if branch == 1:
        return 1.0
    if branch == 0:
        return 0.0
    if branch == 2:
        return sin(HALF_PI * (t - ta) / (tb - ta))
    if branch == 3:
        return sin(HALF_PI * (t - td) / (tc - td))
    if act_kind == 0:
        return 1.0
    if act_kind == 1:
        return 1.0 if (ta <= t <= tb) else 0.0
    if t < ta or t >= td:
        return 0.0
    if t < tb:
        return sin(HALF_PI * (t - ta) / (tb - ta))
    if t < tc:
        return 1.0
    return sin(HALF_PI * (t - td) / (tc - td))


cdef void _eval_rhs(int form, double k, double b, double d, double T, double x0,
                    int act_kind, double ta, double tb, double tc, double td,
                    int branch, double t, double* y, double* out, int n,
                    double* pcoef, long long* pexp, long long* pstart):
    cdef double a, x, v, u, acc, val, yj
    cdef long long idx, e
    cdef int i, j
    if form == 4:
        for i in range(n):
            acc = 0.0
            for idx in range(pstart[i], pstart[i + 1]):
                val = pcoef[idx]
                for j in range(n):
                    e = pexp[idx * n + j]
                    yj = y[j]
                    while e > 0:
                        val *= yj
                        e -= 1
                acc += val
            out[i] = acc
        return
    a = _act(branch, act_kind, t, ta, tb, tc, td)
    x = y[0]
    v = y[1]
    out[0] = v
    if form == 0:
        out[1] = -a * (b * v + k * (x - T))
    elif form == 1:
        u = x - T
        out[1] = -a * (b * v + k * u - d * u * u * u)
    elif form == 2:
        u = x - T
        out[1] = -a * (b * v * v * v + k * u - d * u * u * u)
    else:
        out[1] = -a * (b * v + k * x - 0.5 * k * (T + x0))


def solve(int form, double k, double b, double d, double T, double x0,
          int act_kind, double ta, double tb, double tc, double td, y0,
          double t0, double t1, double dt, double rtol, double atol,
          double max_step, coeffs=None, exps=None):
    """Integrate one gesture model and sample it on a uniform grid.

    Returns (Y, F): state and model derivative at t0 + i*dt. Raises
    IntegrationError when the step size underflows or the state leaves
    the finite range.
    """
    cdef int n = len(y0)
    cdef Py_ssize_t n_out = <Py_ssize_t>((t1 - t0) / dt + 1e-9) + 1
    cdef double[:, ::1] Y = np.empty((n_out, n))
    cdef double[:, ::1] Fout = np.empty((n_out, n))

    # flatten the nonzero polynomial terms per equation
    cdef double[::1] pcoef_view
    cdef long long[::1] pexp_view
    cdef long long[::1] pstart_view
    if form == 4:
        C = np.ascontiguousarray(coeffs, dtype=np.float64)
        E = np.ascontiguousarray(exps, dtype=np.int64)
        coef_list = []
        exp_list = []
        starts = [0]
        for i_eq in range(C.shape[0]):
            for j_term in range(C.shape[1]):
                if C[i_eq, j_term] != 0.0:
                    coef_list.append(C[i_eq, j_term])
                    exp_list.extend(E[j_term])
            starts.append(len(coef_list))
        pcoef_view = np.ascontiguousarray(coef_list if coef_list else [0.0],
                                          dtype=np.float64)
        pexp_view = np.ascontiguousarray(exp_list if exp_list else [0],
                                         dtype=np.int64)
        pstart_view = np.ascontiguousarray(starts, dtype=np.int64)
    else:
        pcoef_view = np.zeros(1)
        pexp_view = np.zeros(1, dtype=np.int64)
        pstart_view = np.zeros(n + 1, dtype=np.int64)
    cdef double* pcoef = &pcoef_view[0]
    cdef long long* pexp = &pexp_view[0]
    cdef long long* pstart = &pstart_view[0]

    if act_kind == 1:
        cand = (ta, tb)
    elif act_kind == 2:
        cand = (ta, tb, tc, td)
    else:
        cand = ()
    edges = [t0]
    cdef double last_edge = t0
    for c in cand:
        if t0 < c < t1 and c - last_edge > 1e-15 * (abs(c) + 1.0):
            edges.append(c)
            last_edge = c
    edges.append(t1)

    cdef double[:, ::1] work = np.zeros((11, n))
    cdef double* k1 = &work[0, 0]
    cdef double* k2 = &work[1, 0]
    cdef double* k3 = &work[2, 0]
    cdef double* k4 = &work[3, 0]
    cdef double* k5 = &work[4, 0]
    cdef double* k6 = &work[5, 0]
    cdef double* k7 = &work[6, 0]
    cdef double* y = &work[7, 0]
    cdef double* y_new = &work[8, 0]
    cdef double* ytmp = &work[9, 0]
    cdef double* fs = &work[10, 0]
    cdef double* swap

    cdef int j
    for j in range(n):
        y[j] = float(y0[j])

    cdef double emit_tol = 1e-9
    cdef Py_ssize_t i_out = 0
    cdef int branch
    cdef double ts, te, t, h, end_tol, t_new, t_out
    cdef double err_sq, e_j, sc, r, norm, factor, theta
    cdef double q1, q3, q4, q5, q6, q7, yj, ay, ayn
    cdef double d0sq, d1sq, d2sq, r0, r1, d0, d1, d2, dm, h0, h1, span
    cdef bint finite
    cdef int s

    _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
              4, t0, y, fs, n, pcoef, pexp, pstart)
    for j in range(n):
        if not isfinite(fs[j]):
            raise IntegrationError("non-finite derivative at start", last_time=t0)
    while i_out < n_out and t0 + i_out * dt <= t0 + emit_tol:
        for j in range(n):
            Y[i_out, j] = y[j]
            Fout[i_out, j] = fs[j]
        i_out += 1

    for s in range(len(edges) - 1):
        ts = edges[s]
        te = edges[s + 1]
        if te - ts <= 1e-15 * (fabs(te) + 1.0):
            continue
        branch = _classify(act_kind, ta, tb, tc, td, 0.5 * (ts + te))
        t = ts
        _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                  branch, t, y, k1, n, pcoef, pexp, pstart)
        for j in range(n):
            if not isfinite(k1[j]):
                raise IntegrationError("non-finite derivative", last_time=t)

        # starting step heuristic
        span = te - t
        d0sq = 0.0
        d1sq = 0.0
        for j in range(n):
            sc = atol + rtol * fabs(y[j])
            r0 = y[j] / sc
            r1 = k1[j] / sc
            d0sq += r0 * r0
            d1sq += r1 * r1
        d0 = sqrt(d0sq / n)
        d1 = sqrt(d1sq / n)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, span)
        for j in range(n):
            ytmp[j] = y[j] + h0 * k1[j]
        _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                  branch, t + h0, ytmp, k2, n, pcoef, pexp, pstart)
        d2sq = 0.0
        for j in range(n):
            sc = atol + rtol * fabs(y[j])
            r = (k2[j] - k1[j]) / sc
            d2sq += r * r
        d2 = sqrt(d2sq / n) / h0
        dm = max(d1, d2)
        if dm <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = pow(0.01 / dm, 0.2)
        h = min(min(100.0 * h0, h1), min(span, max_step))

        end_tol = 1e-15 * (fabs(te) + 1.0)
        while te - t > end_tol:
            if h > te - t:
                h = te - t
            if h < 1e-14 * max(fabs(t), 1.0):
                raise IntegrationError("step size underflow", last_time=t)
            for j in range(n):
                ytmp[j] = y[j] + h * (A21 * k1[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + C2 * h, ytmp, k2, n, pcoef, pexp, pstart)
            for j in range(n):
                ytmp[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + C3 * h, ytmp, k3, n, pcoef, pexp, pstart)
            for j in range(n):
                ytmp[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + C4 * h, ytmp, k4, n, pcoef, pexp, pstart)
            for j in range(n):
                ytmp[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j]
                                      + A54 * k4[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + C5 * h, ytmp, k5, n, pcoef, pexp, pstart)
            for j in range(n):
                ytmp[j] = y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j]
                                      + A64 * k4[j] + A65 * k5[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + h, ytmp, k6, n, pcoef, pexp, pstart)
            for j in range(n):
                y_new[j] = y[j] + h * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j]
                                       + B5 * k5[j] + B6 * k6[j])
            _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                      branch, t + h, y_new, k7, n, pcoef, pexp, pstart)
            err_sq = 0.0
            finite = True
            for j in range(n):
                if not isfinite(y_new[j]):
                    finite = False
                    break
                e_j = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j]
                           + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
                if not isfinite(e_j):
                    finite = False
                    break
                ay = fabs(y[j])
                ayn = fabs(y_new[j])
                sc = atol + rtol * (ay if ay > ayn else ayn)
                r = e_j / sc
                err_sq += r * r
            norm = sqrt(err_sq / n) if finite else INFINITY
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
                        yj = y[j] + h * (q1 * k1[j] + q3 * k3[j] + q4 * k4[j]
                                         + q5 * k5[j] + q6 * k6[j] + q7 * k7[j])
                        ytmp[j] = yj
                        Y[i_out, j] = yj
                    _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                              4, t_out, ytmp, fs, n, pcoef, pexp, pstart)
                    for j in range(n):
                        Fout[i_out, j] = fs[j]
                    i_out += 1
                t = t_new
                swap = y
                y = y_new
                y_new = swap
                swap = k1
                k1 = k7
                k7 = swap
                if norm == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * pow(norm, -0.2))
                h = min(h * factor, max_step)
            else:
                if isfinite(norm):
                    h *= max(MIN_FACTOR, SAFETY * pow(norm, -0.2))
                else:
                    h *= MIN_FACTOR

    # any grid point not yet emitted sits within the emission slack of t1
    while i_out < n_out:
        for j in range(n):
            Y[i_out, j] = y[j]
        _eval_rhs(form, k, b, d, T, x0, act_kind, ta, tb, tc, td,
                  4, t0 + i_out * dt, y, fs, n, pcoef, pexp, pstart)
        for j in range(n):
            Fout[i_out, j] = fs[j]
        i_out += 1
    return np.asarray(Y), np.asarray(Fout)
