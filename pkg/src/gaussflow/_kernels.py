"""Compiled node-wise kernels.

Everything that runs once per node per time step lives here so that the
flow loop stays cheap.  The public modules wrap these into dataclasses; no
formula is duplicated elsewhere.

Array arguments are float64 and contiguous.  All reductions are sequential
left-to-right sums, so results do not depend on how callers batch work.
"""

import math

import numpy as np
from numba import njit

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)

# Row layout shared with flow.TRACE_COLUMNS.
ROW_T, ROW_DT, ROW_RHO_MIN, ROW_RHO_MAX, ROW_OSC = 0, 1, 2, 3, 4
ROW_VOL, ROW_AREA, ROW_ANM2, ROW_AF_GAP, ROW_Q = 5, 6, 7, 8, 9
ROW_K_MAX, ROW_KAPPA_MIN, ROW_GRAD, ROW_MINK0, ROW_MINKN1 = 10, 11, 12, 13, 14
ROW_LEN = 15


@njit(cache=True)
def binom(n, k):
    if k < 0 or k > n:
        return 0.0
    out = 1.0
    for i in range(1, k + 1):
        out = out * (n - k + i) / i
    return out


@njit(cache=True)
def sinh_power_integral_gl(rho, n):
    """32-point Gauss-Legendre value of the integral of sinh^n over [0, rho]."""
    half = 0.5 * rho
    acc = 0.0
    for i in range(_GL_X.size):
        acc += _GL_W[i] * math.sinh(half * (_GL_X[i] + 1.0)) ** n
    return half * acc


@njit(cache=True)
def sinh_cosh(r):
    # one exp is much cheaper than libm sinh + cosh; below 0.5 keep sinh
    # for its relative accuracy
    if r < 0.5:
        return math.sinh(r), math.cosh(r)
    e = math.exp(r)
    ei = 1.0 / e
    return 0.5 * (e - ei), 0.5 * (e + ei)


@njit(cache=True)
def sinh_power_from(rho, s, c, n):
    """Integral of sinh^n over [0, rho] given s = sinh(rho), c = cosh(rho).

    Uses the reduction formula, falling back to Gauss-Legendre below
    rho = 0.5 where the recursion cancels badly.
    """
    if rho < 0.5:
        return sinh_power_integral_gl(rho, n)
    if n % 2 == 0:
        acc = rho
        k = 2
    else:
        acc = c - 1.0
        k = 3
    sp = s ** (k - 2)
    while k <= n:
        sp *= s
        acc = sp * c / k - (k - 1) / k * acc
        sp *= s
        k += 2
    return acc


@njit(cache=True)
def sinh_power_integral_fast(rho, n):
    s, c = sinh_cosh(rho)
    return sinh_power_from(rho, s, c, n)


@njit(cache=True)
def quermass_recursion(n, volume, curv):
    """Quermassintegrals A_{-1}..A_{n-1} from the volume and curvature integrals.

    ``curv[j]`` is the integral of sigma_j over the boundary (``curv[0]`` is
    the area).  Entry ``k + 1`` of the result holds A_k.
    """
    out = np.empty(n + 1)
    out[0] = volume
    out[1] = curv[0]
    if n >= 2:
        out[2] = curv[1] - n * volume
    for k in range(2, n):
        out[k + 1] = curv[k] - (n - k + 1) / (k - 1) * out[k - 1]
    return out


@njit(cache=True)
def ball_curvature_integrals(n, r, omega):
    out = np.empty(n + 1)
    s = math.sinh(r)
    c = math.cosh(r)
    for j in range(n + 1):
        out[j] = binom(n, j) * omega * c ** j * s ** (n - j)
    return out


@njit(cache=True)
def xi_fast(n, k, r, omega):
    vol = omega * sinh_power_integral_fast(r, n)
    if k == -1:
        return vol
    return quermass_recursion(n, vol, ball_curvature_integrals(n, r, omega))[k + 1]


@njit(cache=True)
def xi_volume_inverse_fast(n, target, guess, omega, lo, hi):
    """Radius of the ball with the given volume (safeguarded Newton).

    Returns NaN when the target is outside the bracket values.
    """
    f_lo = omega * sinh_power_integral_fast(lo, n) - target
    f_hi = omega * sinh_power_integral_fast(hi, n) - target
    if f_lo > 0.0 or f_hi < 0.0:
        return np.nan
    r = guess
    if not (lo < r < hi):
        r = 0.5 * (lo + hi)
    for _ in range(200):
        f = omega * sinh_power_integral_fast(r, n) - target
        if f == 0.0:
            return r
        if f > 0.0:
            hi = r
        else:
            lo = r
        step = f / (omega * math.sinh(r) ** n)
        r_new = r - step
        if not (lo < r_new < hi):
            r_new = 0.5 * (lo + hi)
        if abs(r_new - r) <= 4e-16 * r:
            return r_new
        r = r_new
    return r


@njit(cache=True)
def derivatives(f, h):
    """Centered first and second differences with even reflection at both poles."""
    m = f.size
    d1 = np.empty(m)
    d2 = np.empty(m)
    for j in range(m):
        left = f[j - 1] if j > 0 else f[0]
        right = f[j + 1] if j < m - 1 else f[m - 1]
        d1[j] = (right - left) / (2.0 * h)
        d2[j] = (right - 2.0 * f[j] + left) / (h * h)
    return d1, d2


@njit(cache=True)
def node_curvatures(rho, p, s, q):
    """Warp values, v and the two principal curvatures at one node.

    p = rho', s = rho'', q = cot(psi) rho'.
    """
    phi, php = sinh_cosh(rho)
    phi2 = phi * phi
    v = math.sqrt(phi2 + p * p)
    ko = (phi2 * php - phi * q) / (phi2 * v)
    km = (1.0 - p * p / (v * v)) * (-phi * s + 2.0 * php * p * p + phi2 * php) / (phi2 * v)
    return phi, php, v, km, ko


@njit(cache=True)
def kth_root_gauss(km, ko, n):
    """K^{1/n} for K = km * ko^(n-1); NaN unless both curvatures are positive."""
    if not (km > 0.0 and ko > 0.0):
        return np.nan
    if n == 2:
        return math.sqrt(km * ko)
    if n == 4:
        return math.sqrt(math.sqrt(km * ko * ko * ko))
    kk = km
    for _ in range(n - 1):
        kk *= ko
    return kk ** (1.0 / n)


@njit(cache=True)
def geometry_arrays(rho, cot, h, n):
    m = rho.size
    d1, d2 = derivatives(rho, h)
    q = np.empty(m)
    phi = np.empty(m)
    php = np.empty(m)
    v = np.empty(m)
    km = np.empty(m)
    ko = np.empty(m)
    for j in range(m):
        q[j] = cot[j] * d1[j]
        phi[j], php[j], v[j], km[j], ko[j] = node_curvatures(rho[j], d1[j], d2[j], q[j])
    return d1, d2, q, phi, php, v, km, ko


@njit(cache=True)
def _stencil(rho, j, m, h):
    left = rho[j - 1] if j > 0 else rho[0]
    right = rho[j + 1] if j < m - 1 else rho[m - 1]
    return (right - left) / (2.0 * h), (right - 2.0 * rho[j] + left) / (h * h)


@njit(cache=True)
def rhs_into(rho, cot, h, n, out):
    """Write the graph speed into ``out``; return (d_max, ok).

    d_max is the largest diffusion coefficient phi^2 K^{1/n} / (n km v^3);
    ``ok`` is False when some node is not uniformly convex or not finite.
    """
    m = rho.size
    d_max = 0.0
    ok = True
    for j in range(m):
        p, s = _stencil(rho, j, m, h)
        phi, php, v, km, ko = node_curvatures(rho[j], p, s, cot[j] * p)
        if not (km > 0.0 and ko > 0.0):
            ok = False
            out[j] = np.nan
            continue
        root = kth_root_gauss(km, ko, n)
        out[j] = -phi * root + php * v / phi
        coeff = phi * phi * root / (n * km * v * v * v)
        if coeff > d_max:
            d_max = coeff
        if not math.isfinite(out[j]):
            ok = False
    return d_max, ok


@njit(cache=True)
def rhs(rho, cot, h, n):
    """Graph speed, largest diffusion coefficient and convexity status."""
    out = np.empty(rho.size)
    d_max, ok = rhs_into(rho, cot, h, n, out)
    return out, d_max, ok


@njit(cache=True)
def axisym_sigma(km, ko, n, k):
    if k == 0:
        return 1.0
    return binom(n - 1, k) * ko ** k + binom(n - 1, k - 1) * km * ko ** (k - 1)


HEAD = 9


@njit(cache=True)
def eval_state(rho, cot, w, h, n, speed, acc):
    """Speed and diagnostics integrals of one state in a single node pass.

    ``speed`` receives the graph speed (as rhs_into).  ``acc`` must have
    length HEAD + 3 (n + 1) and receives
      [rho_min, rho_max, vol, Q, K_max, kappa_min, grad_max, weighted_rho, n_bad]
    followed by three blocks of length n+1 holding, for j = 0..n, the
    integrals of sigma_j, phi' sigma_j and u sigma_j against d mu.
    Returns (d_max, ok).
    """
    m = rho.size
    acc[:] = 0.0
    rmin = rho[0]
    rmax = rho[0]
    k_max = -np.inf
    kap_min = np.inf
    grad = 0.0
    n_bad = 0
    d_max = 0.0
    ok = True
    # sigma_k = C(n-1, k) ko^k + C(n-1, k-1) km ko^(k-1)
    c_o = np.empty(n + 1)
    c_m = np.empty(n + 1)
    for k in range(n + 1):
        c_o[k] = binom(n - 1, k)
        c_m[k] = binom(n - 1, k - 1)
    ko_pow = np.empty(n)
    for j in range(m):
        r = rho[j]
        if r < rmin:
            rmin = r
        if r > rmax:
            rmax = r
        p, s = _stencil(rho, j, m, h)
        phi, php, v, km, ko = node_curvatures(r, p, s, cot[j] * p)
        kap = km if km < ko else ko
        if kap < kap_min:
            kap_min = kap
        root = kth_root_gauss(km, ko, n)
        if not kap > 0.0:
            n_bad += 1
            ok = False
            speed[j] = np.nan
        else:
            speed[j] = -phi * root + php * v / phi
            coeff = phi * phi * root / (n * km * v * v * v)
            if coeff > d_max:
                d_max = coeff
            if not math.isfinite(speed[j]):
                ok = False
        pp = 1.0
        for _ in range(n - 1):
            pp *= phi
        dmu = pp * v * w[j]
        u = phi * phi / v
        # ko^(k-1) for k = 1..n, built up in place
        kp = 1.0
        for k in range(1, n + 1):
            ko_pow[k - 1] = kp
            kp *= ko
        gk = km * ko_pow[n - 1]
        if gk > k_max:
            k_max = gk
        g = p / phi
        if g * g > grad:
            grad = g * g
        acc[2] += w[j] * sinh_power_from(r, phi, php, n)
        acc[3] += (php - u * root) * dmu
        acc[7] += r * dmu
        acc[HEAD] += dmu
        acc[HEAD + (n + 1)] += php * dmu
        acc[HEAD + 2 * (n + 1)] += u * dmu
        for k in range(1, n + 1):
            sk = (c_o[k] * ko + c_m[k] * km) * ko_pow[k - 1]
            acc[HEAD + k] += sk * dmu
            acc[HEAD + (n + 1) + k] += php * sk * dmu
            acc[HEAD + 2 * (n + 1) + k] += u * sk * dmu
    acc[0] = rmin
    acc[1] = rmax
    acc[4] = k_max
    acc[5] = kap_min
    acc[6] = grad
    acc[8] = n_bad
    return d_max, ok


@njit(cache=True)
def integrals(rho, cot, w, h, n):
    acc = np.empty(HEAD + 3 * (n + 1))
    eval_state(rho, cot, w, h, n, np.empty(rho.size), acc)
    return acc


@njit(cache=True)
def minkowski_relative(n, k, phi_sigma, u_sigma):
    lhs = (n - k) * phi_sigma[k]
    rhs_ = (k + 1) * u_sigma[k + 1]
    return (lhs - rhs_) / lhs


@njit(cache=True)
def row_from_integrals(acc, n, omega, t, dt, r_guess, lo, hi, row):
    """Fill a diagnostics row (ROW_* offsets); return (weighted mean rho, r_eq)."""
    curv = acc[HEAD:HEAD + n + 1]
    phi_sigma = acc[HEAD + n + 1:HEAD + 2 * (n + 1)]
    u_sigma = acc[HEAD + 2 * (n + 1):]
    vol = acc[2]
    quer = quermass_recursion(n, vol, curv)
    row[ROW_T] = t
    row[ROW_DT] = dt
    row[ROW_RHO_MIN] = acc[0]
    row[ROW_RHO_MAX] = acc[1]
    row[ROW_OSC] = acc[1] - acc[0]
    row[ROW_VOL] = vol
    row[ROW_AREA] = curv[0]
    row[ROW_ANM2] = quer[n - 1]
    r_eq = xi_volume_inverse_fast(n, vol, r_guess, omega, lo, hi)
    row[ROW_AF_GAP] = quer[n - 1] - xi_fast(n, n - 2, r_eq, omega)
    row[ROW_Q] = acc[3]
    row[ROW_K_MAX] = acc[4]
    row[ROW_KAPPA_MIN] = acc[5]
    row[ROW_GRAD] = acc[6]
    row[ROW_MINK0] = minkowski_relative(n, 0, phi_sigma, u_sigma)
    row[ROW_MINKN1] = minkowski_relative(n, n - 1, phi_sigma, u_sigma)
    return acc[7] / curv[0], r_eq


@njit(cache=True)
def monitor_row(rho, cot, w, h, n, omega, t, dt, r_guess, lo, hi):
    """One diagnostics row plus the weighted mean radius and r_eq."""
    acc = integrals(rho, cot, w, h, n)
    row = np.empty(ROW_LEN)
    rho_mean, r_eq = row_from_integrals(acc, n, omega, t, dt, r_guess, lo, hi, row)
    return row, rho_mean, r_eq


# Flag codes, in the order of flow.FLAG_NAMES.
FLAG_RHO_MAX, FLAG_RHO_MIN, FLAG_VOL, FLAG_ANM2, FLAG_KAPPA, FLAG_Q = 0, 1, 2, 3, 4, 5
N_FLAGS = 6

# evolve status codes
RUNNING, CONVERGED, REACHED_TMAX, DEGENERATE, CFL_COLLAPSE = 0, 1, 2, 3, 4


@njit(cache=True)
def check_row(prev, row, slack_abs, q_slack, codes_out, amounts_out):
    """Compare a row with its predecessor; return the number of flags written."""
    nf = 0
    slack = slack_abs * (1.0 + abs(row[ROW_DT]))
    if row[ROW_KAPPA_MIN] <= 0.0:
        codes_out[nf] = FLAG_KAPPA
        amounts_out[nf] = row[ROW_KAPPA_MIN]
        nf += 1
    if row[ROW_Q] < -q_slack * row[ROW_AREA]:
        codes_out[nf] = FLAG_Q
        amounts_out[nf] = row[ROW_Q]
        nf += 1
    if prev.size:
        diff = row[ROW_RHO_MAX] - prev[ROW_RHO_MAX]
        if diff > slack:
            codes_out[nf] = FLAG_RHO_MAX
            amounts_out[nf] = diff
            nf += 1
        diff = prev[ROW_RHO_MIN] - row[ROW_RHO_MIN]
        if diff > slack:
            codes_out[nf] = FLAG_RHO_MIN
            amounts_out[nf] = diff
            nf += 1
        diff = prev[ROW_VOL] - row[ROW_VOL]
        if diff > slack:
            codes_out[nf] = FLAG_VOL
            amounts_out[nf] = diff
            nf += 1
        diff = row[ROW_ANM2] - prev[ROW_ANM2]
        if diff > slack:
            codes_out[nf] = FLAG_ANM2
            amounts_out[nf] = diff
            nf += 1
    return nf


@njit(cache=True)
def heun_try(rho, k1, cot, h, n, dt, stage, k2, new):
    """One Heun update of ``rho`` (slope ``k1``) into ``new``; False on failure."""
    m = rho.size
    for j in range(m):
        stage[j] = rho[j] + dt * k1[j]
    _, ok = rhs_into(stage, cot, h, n, k2)
    if not ok:
        return False
    for j in range(m):
        new[j] = rho[j] + 0.5 * dt * (k1[j] + k2[j])
        if not (new[j] > 0.0 and math.isfinite(new[j])):
            return False
    return True


@njit(cache=True)
def evolve(rho, k1, d_max, prev_row, cot, w, h, n, omega, t, t_max, cfl, dt_min, dt_max,
           osc_tol, max_steps, step0, trace_every, r_eq, lo, hi, slack, q_slack, max_retries,
           rows, flag_step, flag_t, flag_code, flag_amount, flag_counts):
    """Advance up to ``max_steps`` Heun steps with diagnostics after each.

    ``rho`` and ``k1`` (its slope) are updated in place; ``prev_row`` holds
    the diagnostics of the current state and is overwritten with the latest
    row.  Rows whose global step index is a multiple of ``trace_every`` go
    to ``rows``; flags are stored until their buffers fill, while
    ``flag_counts`` keeps counting per code.

    Returns (status, steps, t, d_max, r_eq, rho_mean, n_rows, n_flags).
    ``status`` is RUNNING when the step budget ran out first.
    """
    m = rho.size
    new = np.empty(m)
    stage = np.empty(m)
    k2 = np.empty(m)
    k_next = np.empty(m)
    acc = np.empty(HEAD + 3 * (n + 1))
    row = np.empty(ROW_LEN)
    codes = np.empty(N_FLAGS, dtype=np.int64)
    amounts = np.empty(N_FLAGS)
    cap = flag_step.size
    n_rows = 0
    n_flags = 0
    rho_mean = np.nan
    status = RUNNING
    steps = 0
    while steps < max_steps:
        if prev_row[ROW_OSC] < osc_tol:
            status = CONVERGED
            break
        if t >= t_max:
            status = REACHED_TMAX
            break
        dt = cfl * h * h / d_max
        if dt < dt_min:
            status = CFL_COLLAPSE
            break
        if dt > dt_max:
            dt = dt_max
        remaining = t_max - t
        last = dt >= remaining * (1.0 - 1e-12)
        if last:
            dt = remaining
        used = -1.0
        tries = dt
        for _ in range(max_retries + 1):
            if heun_try(rho, k1, cot, h, n, tries, stage, k2, new):
                d_new, ok = eval_state(new, cot, w, h, n, k_next, acc)
                if ok:
                    used = tries
                    break
            tries *= 0.5
        if used < 0.0:
            status = DEGENERATE
            break
        steps += 1
        if last and used == dt:
            t = t_max
        else:
            t = t + used
        rho[:] = new
        k1[:] = k_next
        d_max = d_new
        rho_mean, r_eq = row_from_integrals(acc, n, omega, t, used, r_eq, lo, hi, row)
        nf = check_row(prev_row, row, slack, q_slack, codes, amounts)
        for i in range(nf):
            flag_counts[codes[i]] += 1
            if n_flags < cap:
                flag_step[n_flags] = step0 + steps
                flag_t[n_flags] = t
                flag_code[n_flags] = codes[i]
                flag_amount[n_flags] = amounts[i]
                n_flags += 1
        prev_row[:] = row
        if (step0 + steps) % trace_every == 0 and n_rows < rows.shape[0]:
            rows[n_rows] = row
            n_rows += 1
    if status == RUNNING:
        if prev_row[ROW_OSC] < osc_tol:
            status = CONVERGED
        elif t >= t_max:
            status = REACHED_TMAX
    return status, steps, t, d_max, r_eq, rho_mean, n_rows, n_flags


@njit(cache=True)
def heun_to(rho, cot, h, n, t, t_end, cfl, dt_max, max_retries):
    """Heun-integrate ``rho`` in place from t to t_end without diagnostics.

    Returns (status, steps) with status 0 on success.
    """
    m = rho.size
    k1 = np.empty(m)
    k2 = np.empty(m)
    new = np.empty(m)
    stage = np.empty(m)
    d_max, ok = rhs_into(rho, cot, h, n, k1)
    if not ok:
        return DEGENERATE, 0
    steps = 0
    while t < t_end:
        dt = cfl * h * h / d_max
        if dt > dt_max:
            dt = dt_max
        last = t + dt >= t_end * (1.0 - 1e-14)
        if last:
            dt = t_end - t
        used = -1.0
        tries = dt
        for _ in range(max_retries + 1):
            if heun_try(rho, k1, cot, h, n, tries, stage, k2, new):
                d_new, ok = rhs_into(new, cot, h, n, k2)
                if ok:
                    used = tries
                    break
            tries *= 0.5
        if used < 0.0:
            return DEGENERATE, steps
        rho[:] = new
        k1[:] = k2
        d_max = d_new
        t = t_end if (last and used == dt) else t + used
        steps += 1
    return 0, steps
