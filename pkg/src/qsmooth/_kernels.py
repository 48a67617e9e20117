"""Compiled inner loops.

All kernels work on small dense complex matrices with explicit loops; they
are reference-checked against the plain numpy operations in the test suite.
Kernels never raise: failures are reported as the index of the offending
step (``-1`` when everything went through).
"""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


def channel_index(counts):
    """Map a (steps, n_n) 0/1 count array to the jumping channel per step, -1 for none."""
    counts = np.asarray(counts)
    idx = np.full(len(counts), -1, dtype=np.int64)
    if counts.shape[1]:
        hit = counts.sum(axis=1) > 0
        idx[hit] = np.argmax(counts[hit], axis=1)
    return idx


@njit(**_OPTS)
def _sandwich(A, X, out):
    # out = A X A^dagger
    d = A.shape[0]
    tmp = np.empty((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            s = 0j
            for k in range(d):
                s += A[i, k] * X[k, j]
            tmp[i, j] = s
    for i in range(d):
        for j in range(d):
            s = 0j
            for k in range(d):
                s += tmp[i, k] * np.conj(A[j, k])
            out[i, j] = s


@njit(**_OPTS)
def _adjoint_sandwich(A, X, out):
    # out = A^dagger X A
    d = A.shape[0]
    tmp = np.empty((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            s = 0j
            for k in range(d):
                s += np.conj(A[k, i]) * X[k, j]
            tmp[i, j] = s
    for i in range(d):
        for j in range(d):
            s = 0j
            for k in range(d):
                s += tmp[i, k] * A[k, j]
            out[i, j] = s


@njit(**_OPTS)
def _hermitize_normalize(X):
    d = X.shape[0]
    tr = 0.0
    for i in range(d):
        tr += X[i, i].real
    if not tr > 0.0:
        return tr
    for i in range(d):
        X[i, i] = X[i, i].real / tr
        for j in range(i + 1, d):
            v = 0.5 * (X[i, j] + np.conj(X[j, i])) / tr
            X[i, j] = v
            X[j, i] = np.conj(v)
    return tr


@njit(**_OPTS)
def filter_density(K0s, Cs, rho0):
    steps, d = K0s.shape[0], K0s.shape[1]
    states = np.empty((steps + 1, d, d), dtype=np.complex128)
    logw = np.zeros(steps + 1)
    states[0] = rho0
    new = np.empty((d, d), dtype=np.complex128)
    term = np.empty((d, d), dtype=np.complex128)
    for t in range(steps):
        _sandwich(K0s[t], states[t], new)
        for j in range(Cs.shape[0]):
            _sandwich(Cs[j], states[t], term)
            new += term
        tr = _hermitize_normalize(new)
        if not tr > 0.0:
            return states, logw, t
        states[t + 1] = new
        logw[t + 1] = logw[t] + np.log(tr)
    return states, logw, -1


@njit(**_OPTS)
def filter_joint(K0s, Cs, chan, p_ost, rho0):
    """Doubly conditioned filter; ``p_ost`` rows of NaN mean no reweighting."""
    steps, d = K0s.shape[0], K0s.shape[1]
    states = np.empty((steps + 1, d, d), dtype=np.complex128)
    logw = np.zeros(steps + 1)
    states[0] = rho0
    new = np.empty((d, d), dtype=np.complex128)
    for t in range(steps):
        j = chan[t]
        if j < 0:
            _sandwich(K0s[t], states[t], new)
            scale = 1.0
            if p_ost.shape[1] > 0 and not np.isnan(p_ost[t, 0]):
                scale = 1.0 - p_ost[t].sum()
        else:
            _sandwich(Cs[j], states[t], new)
            scale = 1.0
            if not np.isnan(p_ost[t, 0]):
                scale = p_ost[t, j]
        if not scale > 0.0:
            return states, logw, t
        tr = _hermitize_normalize(new)
        if not tr > 0.0:
            return states, logw, t
        states[t + 1] = new
        logw[t + 1] = logw[t] + np.log(tr / scale)
    return states, logw, -1


@njit(**_OPTS)
def retrofilter(K0s, Cs):
    steps, d = K0s.shape[0], K0s.shape[1]
    effects = np.zeros((steps + 1, d, d), dtype=np.complex128)
    logs = np.zeros(steps + 1)
    for i in range(d):
        effects[steps, i, i] = 1.0
    # effects are stored with unit trace; logs carry log(Tr) relative to Tr[I] = d
    logs[steps] = np.log(d)
    for i in range(d):
        effects[steps, i, i] = 1.0 / d
    new = np.empty((d, d), dtype=np.complex128)
    term = np.empty((d, d), dtype=np.complex128)
    for t in range(steps - 1, -1, -1):
        _adjoint_sandwich(K0s[t], effects[t + 1], new)
        for j in range(Cs.shape[0]):
            _adjoint_sandwich(Cs[j], effects[t + 1], term)
            new += term
        tr = _hermitize_normalize(new)
        if not tr > 0.0:
            return effects, logs, t
        effects[t] = new
        logs[t] = logs[t + 1] + np.log(tr)
    return effects, logs, -1


@njit(**_OPTS)
def _apply(A, psi, out):
    d = A.shape[0]
    nrm = 0.0
    for i in range(d):
        s = 0j
        for k in range(d):
            s += A[i, k] * psi[k]
        out[i] = s
        nrm += s.real * s.real + s.imag * s.imag
    return nrm


@njit(**_OPTS)
def true_trajectory(base, meas, quads, Cs, psi0, u, xi, dt):
    steps, d = u.shape[0], psi0.shape[0]
    n_y, n_c = meas.shape[0], Cs.shape[0]
    psis = np.empty((steps + 1, d), dtype=np.complex128)
    y = np.empty((steps, n_y))
    jumps = np.full(steps, -1, dtype=np.int64)
    psis[0] = psi0
    K = np.empty((d, d), dtype=np.complex128)
    out = np.empty(d, dtype=np.complex128)
    tmp = np.empty(d, dtype=np.complex128)
    sqdt = np.sqrt(dt)
    for t in range(steps):
        psi = psis[t]
        # jump channel from cumulative probabilities
        acc = 0.0
        jump = -1
        for j in range(n_c):
            acc += _apply(Cs[j], psi, tmp)
            if jump < 0 and u[t] < acc:
                jump = j
        for m in range(n_y):
            _apply(quads[m], psi, tmp)
            mean = 0.0
            for i in range(d):
                mean += (np.conj(psi[i]) * tmp[i]).real
            y[t, m] = mean + xi[t, m] / sqdt
        if jump >= 0:
            nrm = _apply(Cs[jump], psi, out)
            jumps[t] = jump
        else:
            for i in range(d):
                for k in range(d):
                    K[i, k] = base[i, k]
            for m in range(n_y):
                for i in range(d):
                    for k in range(d):
                        K[i, k] += y[t, m] * dt * meas[m, i, k]
            nrm = _apply(K, psi, out)
        inv = 1.0 / np.sqrt(nrm)
        for i in range(d):
            psis[t + 1, i] = out[i] * inv
    return psis, y, jumps


@njit(**_OPTS)
def _pick(pt, u):
    acc = 0.0
    for j in range(pt.shape[0]):
        acc += pt[j]
        if u < acc:
            return j
    return -1


@njit(**_OPTS)
def _advance(K0, Cs, pt, logF, u, psi, new):
    """One ostensible step of a pure sample; returns (log ratio increment, channel)."""
    j = _pick(pt, u)
    if j >= 0:
        nrm = _apply(Cs[j], psi, new)
        p = pt[j]
    else:
        nrm = _apply(K0, psi, new)
        p = 1.0 - pt.sum()
    if not nrm > 0.0:
        return -np.inf, j
    inv = 1.0 / np.sqrt(nrm)
    for i in range(psi.shape[0]):
        psi[i] = new[i] * inv
    return np.log(nrm / p) - logF, j


@njit(**_OPTS)
def _expect(E, psi):
    d = psi.shape[0]
    s = 0.0
    for i in range(d):
        acc = 0j
        for k in range(d):
            acc += E[i, k] * psi[k]
        s += (np.conj(psi[i]) * acc).real
    return s


@njit(**_OPTS)
def ensemble_paths(K0s, Cs, p_ost, logF, psi0, U):
    """Propagate M ostensible samples, keeping every state.

    Returns state vectors (M, steps+1, d), log trace ratios (M, steps+1) and
    the jump channel per step (M, steps).
    """
    M, steps = U.shape
    d = psi0.shape[0]
    psis = np.empty((M, steps + 1, d), dtype=np.complex128)
    logL = np.zeros((M, steps + 1))
    chans = np.full((M, steps), -1, dtype=np.int64)
    new = np.empty(d, dtype=np.complex128)
    psi = np.empty(d, dtype=np.complex128)
    for k in range(M):
        psi[:] = psi0
        psis[k, 0] = psi0
        for t in range(steps):
            if np.isinf(logL[k, t]):
                logL[k, t + 1] = -np.inf
                psis[k, t + 1] = psi
                continue
            inc, j = _advance(K0s[t], Cs, p_ost[t], logF[t], U[k, t], psi, new)
            chans[k, t] = j
            logL[k, t + 1] = logL[k, t] + inc
            psis[k, t + 1] = psi
    return psis, logL, chans


@njit(**_OPTS)
def smooth_stream(K0s, Cs, p_ost, logF, effects, psi0, U):
    """Weighted ensemble average at every grid time without storing paths.

    ``U`` has shape (steps, M).  Weight of sample k at time t is
    ``exp(logL_k(t)) <psi_k(t)| E(t) |psi_k(t)>``.

    Returns the weighted mean state, per-entry variances of the real and
    imaginary parts of that mean, the effective sample size, and the index
    of the first grid time with no positive weight (-1 if none).
    """
    steps, M = U.shape
    d = psi0.shape[0]
    psis = np.empty((M, d), dtype=np.complex128)
    for k in range(M):
        psis[k] = psi0
    logL = np.zeros(M)
    lw = np.empty(M)
    mean = np.zeros((steps + 1, d, d), dtype=np.complex128)
    var_re = np.zeros((steps + 1, d, d))
    var_im = np.zeros((steps + 1, d, d))
    ess = np.zeros(steps + 1)
    new = np.empty(d, dtype=np.complex128)
    s2 = np.empty((d, d), dtype=np.complex128)
    q_re = np.empty((d, d))
    q_im = np.empty((d, d))
    bad = -1
    for t in range(steps + 1):
        E = effects[t]
        top = -np.inf
        for k in range(M):
            if np.isinf(logL[k]):
                lw[k] = -np.inf
                continue
            e = _expect(E, psis[k])
            lw[k] = logL[k] + np.log(e) if e > 0.0 else -np.inf
            if lw[k] > top:
                top = lw[k]
        if np.isinf(top):
            if bad < 0:
                bad = t
        else:
            sw = 0.0
            sww = 0.0
            acc = np.zeros((d, d), dtype=np.complex128)
            s2[:] = 0.0
            q_re[:] = 0.0
            q_im[:] = 0.0
            for k in range(M):
                if np.isinf(lw[k]):
                    continue
                w = np.exp(lw[k] - top)
                sw += w
                ww = w * w
                sww += ww
                psi = psis[k]
                for i in range(d):
                    for j in range(d):
                        x = psi[i] * np.conj(psi[j])
                        acc[i, j] += w * x
                        s2[i, j] += ww * x
                        q_re[i, j] += ww * x.real * x.real
                        q_im[i, j] += ww * x.imag * x.imag
            m = acc / sw
            mean[t] = m
            ess[t] = sw * sw / sww
            for i in range(d):
                for j in range(d):
                    mr = m[i, j].real
                    mi = m[i, j].imag
                    vr = q_re[i, j] - 2 * mr * s2[i, j].real + mr * mr * sww
                    vi = q_im[i, j] - 2 * mi * s2[i, j].imag + mi * mi * sww
                    var_re[t, i, j] = max(vr, 0.0) / (sw * sw)
                    var_im[t, i, j] = max(vi, 0.0) / (sw * sw)
        if t == steps:
            break
        for k in range(M):
            if np.isinf(logL[k]):
                continue
            inc, j = _advance(K0s[t], Cs, p_ost[t], logF[t], U[t, k], psis[k], new)
            logL[k] += inc
    return mean, var_re, var_im, ess, bad


@njit(**_OPTS)
def smooth_stream_qubit(K0s, Cs, p_ost, logF, effects, psi0, U):
    """Specialisation of :func:`smooth_stream` for d = 2 (same outputs)."""
    steps, M = U.shape
    n_c = Cs.shape[0]
    a = np.empty(M, dtype=np.complex128)
    b = np.empty(M, dtype=np.complex128)
    a[:] = psi0[0]
    b[:] = psi0[1]
    logL = np.zeros(M)
    lw = np.empty(M)
    mean = np.zeros((steps + 1, 2, 2), dtype=np.complex128)
    var_re = np.zeros((steps + 1, 2, 2))
    var_im = np.zeros((steps + 1, 2, 2))
    ess = np.zeros(steps + 1)
    bad = -1
    for t in range(steps + 1):
        E = effects[t]
        e00 = E[0, 0].real
        e11 = E[1, 1].real
        e01 = E[0, 1]
        top = -np.inf
        for k in range(M):
            lk = logL[k]
            if lk == -np.inf:
                lw[k] = lk
                continue
            ak = a[k]
            bk = b[k]
            cross = np.conj(ak) * bk
            e = (
                e00 * (ak.real * ak.real + ak.imag * ak.imag)
                + e11 * (bk.real * bk.real + bk.imag * bk.imag)
                + 2.0 * (e01 * cross).real
            )
            v = lk + np.log(e) if e > 0.0 else -np.inf
            lw[k] = v
            if v > top:
                top = v
        if top == -np.inf:
            if bad < 0:
                bad = t
        else:
            sw = 0.0
            sww = 0.0
            s00 = 0.0
            s01 = 0j
            t00 = 0.0
            t01 = 0j
            q00 = 0.0
            q01r = 0.0
            q01i = 0.0
            for k in range(M):
                if lw[k] == -np.inf:
                    continue
                w = np.exp(lw[k] - top)
                ww = w * w
                sw += w
                sww += ww
                ak = a[k]
                bk = b[k]
                x00 = ak.real * ak.real + ak.imag * ak.imag
                x01 = ak * np.conj(bk)
                s00 += w * x00
                s01 += w * x01
                t00 += ww * x00
                t01 += ww * x01
                q00 += ww * x00 * x00
                q01r += ww * x01.real * x01.real
                q01i += ww * x01.imag * x01.imag
            m00 = s00 / sw
            m01 = s01 / sw
            mean[t, 0, 0] = m00
            mean[t, 1, 1] = 1.0 - m00
            mean[t, 0, 1] = m01
            mean[t, 1, 0] = np.conj(m01)
            ess[t] = sw * sw / sww
            norm = sw * sw
            v00 = max(q00 - 2 * m00 * t00 + m00 * m00 * sww, 0.0) / norm
            vr = max(q01r - 2 * m01.real * t01.real + m01.real ** 2 * sww, 0.0) / norm
            vi = max(q01i - 2 * m01.imag * t01.imag + m01.imag ** 2 * sww, 0.0) / norm
            var_re[t, 0, 0] = v00
            var_re[t, 1, 1] = v00
            var_re[t, 0, 1] = vr
            var_re[t, 1, 0] = vr
            var_im[t, 0, 1] = vi
            var_im[t, 1, 0] = vi
        if t == steps:
            break
        K = K0s[t]
        k00 = K[0, 0]
        k01 = K[0, 1]
        k10 = K[1, 0]
        k11 = K[1, 1]
        pt = p_ost[t]
        p_none = 1.0
        for j in range(n_c):
            p_none -= pt[j]
        lf = logF[t]
        for k in range(M):
            if logL[k] == -np.inf:
                continue
            ak = a[k]
            bk = b[k]
            u = U[t, k]
            acc = 0.0
            j = -1
            for c in range(n_c):
                acc += pt[c]
                if u < acc:
                    j = c
                    break
            if j >= 0:
                C = Cs[j]
                na = C[0, 0] * ak + C[0, 1] * bk
                nb = C[1, 0] * ak + C[1, 1] * bk
                p = pt[j]
            else:
                na = k00 * ak + k01 * bk
                nb = k10 * ak + k11 * bk
                p = p_none
            nrm = na.real * na.real + na.imag * na.imag + nb.real * nb.real + nb.imag * nb.imag
            if not nrm > 0.0:
                logL[k] = -np.inf
                continue
            inv = 1.0 / np.sqrt(nrm)
            a[k] = na * inv
            b[k] = nb * inv
            logL[k] += np.log(nrm / p) - lf
    return mean, var_re, var_im, ess, bad
