"""Independent brute-force reference implementations used by the tests.

Everything here is deliberately written as plain scalar loops (or
closed-form math) and stays independent of the library code paths it
checks.
"""

import math

import numpy as np


def bilinear_reference(plane, th, tw):
    """Scalar-loop cell-center bilinear resampling of a 2-D array."""
    h, w = plane.shape
    out = np.empty((th, tw))
    for i in range(th):
        u = (i + 0.5) * h / th - 0.5
        u = min(max(u, 0.0), h - 1.0)
        r0 = int(math.floor(u))
        r1 = min(r0 + 1, h - 1)
        fr = u - r0
        for j in range(tw):
            v = (j + 0.5) * w / tw - 0.5
            v = min(max(v, 0.0), w - 1.0)
            c0 = int(math.floor(v))
            c1 = min(c0 + 1, w - 1)
            fc = v - c0
            top = plane[r0, c0] * (1 - fc) + plane[r0, c1] * fc
            bot = plane[r1, c0] * (1 - fc) + plane[r1, c1] * fc
            out[i, j] = top * (1 - fr) + bot * fr
    return out


def rmse_reference(a, b):
    total = 0.0
    n = 0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
        n += 1
    return math.sqrt(total / n)


def crps_reference(members, obs):
    """Naive O(m^2) energy-form CRPS, uniform weights, per-cell then mean."""
    m = len(members)
    cells = obs.size
    acc = 0.0
    flat = [mem.ravel() for mem in members]
    o = obs.ravel()
    for c in range(cells):
        skill = sum(abs(f[c] - o[c]) for f in flat) / m
        spread = 0.0
        for i in range(m):
            for j in range(m):
                spread += abs(flat[i][c] - flat[j][c])
        acc += skill - 0.5 * spread / (m * m)
    return acc / cells


def mape_reference(p, o, w):
    num = 0.0
    wsum = 0.0
    for pi, oi, wi in zip(p.ravel(), o.ravel(), np.broadcast_to(w, p.shape).ravel()):
        num += wi * abs((pi - oi) / oi)
        wsum += wi
    return num / wsum


def scor_reference(p, o, w):
    p = p.ravel()
    o = o.ravel()
    w = np.broadcast_to(w, (len(p),)).ravel() if np.ndim(w) else np.full(len(p), w)
    wsum = float(sum(w))
    pm = sum(wi * pi for wi, pi in zip(w, p)) / wsum
    om = sum(wi * oi for wi, oi in zip(w, o)) / wsum
    cov = sum(wi * (pi - pm) * (oi - om) for wi, pi, oi in zip(w, p, o))
    vp = sum(wi * (pi - pm) ** 2 for wi, pi in zip(w, p))
    vo = sum(wi * (oi - om) ** 2 for wi, oi in zip(w, o))
    return cov / math.sqrt(vp * vo)


def amplitude_phase_reference(monthly):
    """(amplitude, phase) per cell from a [12][h][w] array, ties -> earliest."""
    _, h, w = monthly.shape
    amp = np.empty((h, w))
    phase = np.empty((h, w), dtype=int)
    for r in range(h):
        for c in range(w):
            series = [monthly[m, r, c] for m in range(12)]
            best = max(series)
            amp[r, c] = best - sum(series) / 12.0
            phase[r, c] = series.index(best) + 1
    return amp, phase


def nrmse_reference(pred_monthly, obs_monthly, w):
    ap, _ = amplitude_phase_reference(pred_monthly)
    ao, _ = amplitude_phase_reference(obs_monthly)
    wb = np.broadcast_to(w, ap.shape)
    wsum = float(wb.sum())
    num = math.sqrt(sum(wi * (x - y) ** 2 for wi, x, y in
                        zip(wb.ravel(), ap.ravel(), ao.ravel())) / wsum)
    den = sum(wi * y * y for wi, y in zip(wb.ravel(), ao.ravel())) / wsum
    return num / den


def mad_reference(pred_monthly, obs_monthly, w):
    _, mp = amplitude_phase_reference(pred_monthly)
    _, mo = amplitude_phase_reference(obs_monthly)
    wb = np.broadcast_to(w, mp.shape)
    acc = 0.0
    for wi, a, b in zip(wb.ravel(), mp.ravel(), mo.ravel()):
        d = abs(int(a) - int(b))
        acc += wi * min(d, 12 - d)
    return acc / float(wb.sum())


def kl_reference(q, p):
    """High-precision discrete KL via fsum on scalar terms."""
    terms = []
    for qi, pi in zip(q, p):
        if qi > 0:
            if pi == 0:
                return math.inf
            terms.append(qi * math.log(qi / pi))
    return math.fsum(terms)


def chain_rule_sides_reference(q, p, assignment, coarse_size):
    """(fine KL, coarse KL + expected conditional KL) by direct enumeration."""
    fine = kl_reference(q, p)
    cq = [0.0] * coarse_size
    cp = [0.0] * coarse_size
    for i, y in enumerate(assignment):
        cq[y] += q[i]
        cp[y] += p[i]
    coarse = kl_reference(cq, cp)
    cond = 0.0
    for y in range(coarse_size):
        if cq[y] == 0:
            continue
        qy = [q[i] / cq[y] for i, a in enumerate(assignment) if a == y]
        py = [p[i] / cp[y] for i, a in enumerate(assignment) if a == y]
        cond += cq[y] * kl_reference(qy, py)
    return fine, coarse + cond


def gaussian_crps_closed_form(sigma):
    """CRPS of N(0, sigma^2) against observation 0."""
    return sigma * (math.sqrt(2.0) - 1.0) / math.sqrt(math.pi)


def karras_sigma_reference(sigma_min, sigma_max, rho, T, i):
    """Scalar evaluation of the rho-warped schedule at index i."""
    hi = sigma_max ** (1.0 / rho)
    lo = sigma_min ** (1.0 / rho)
    return (hi + (i / (T - 1)) * (lo - hi)) ** rho
