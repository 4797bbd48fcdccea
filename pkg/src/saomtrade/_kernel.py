"""Compiled micro-step loop.

Effect codes follow ``effects.KIND_CODES``; parametrization codes follow
``effects.PARAM_CODES`` (0 evaluation, 1 creation, 2 endowment).
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _f(v, use_sqrt):
    return math.sqrt(v) if use_sqrt else v


@njit(cache=True)
def choice_utilities(x, frozen, codes, ptypes, betas, covmats, i, outdeg, util):
    """Fill ``util[j]`` with the objective gain of toggling ``i -> j``.

    ``util[i]`` is the no-change alternative (0).  Frozen dyads get -inf.
    """
    n = x.shape[0]
    K = codes.shape[0]
    di = outdeg[i]
    s_lin = 0.0
    s_sqrt = 0.0
    ins = np.empty(n, dtype=np.int64)
    outs = np.empty(n, dtype=np.int64)
    n_in = 0
    n_out = 0
    for j in range(n):
        if x[i, j]:
            s_lin += outdeg[j]
            s_sqrt += math.sqrt(outdeg[j])
            outs[n_out] = j
            n_out += 1
        if x[j, i]:
            ins[n_in] = j
            n_in += 1
    for j in range(n):
        if j == i:
            util[j] = 0.0
            continue
        if frozen[i, j]:
            util[j] = -np.inf
            continue
        sigma = 1.0 - 2.0 * x[i, j]
        u = 0.0
        for k in range(K):
            pt = ptypes[k]
            if pt == 1 and sigma < 0:
                continue
            if pt == 2 and sigma > 0:
                continue
            c = codes[k]
            if c == 0:
                d = sigma
            elif c == 1:
                d = sigma * x[j, i]
            elif c == 2:
                acc = 0
                for q in range(n_in):
                    acc += x[ins[q], j]
                d = sigma * acc
            elif c == 3:
                acc = 0
                for q in range(n_out):
                    acc += x[outs[q], j] + x[j, outs[q]]
                d = sigma * acc
            elif c == 4:
                acc = 0
                for q in range(n_in):
                    acc += x[j, ins[q]]
                d = sigma * acc
            elif c == 5 or c == 6:
                sq = c == 6
                s = s_sqrt if sq else s_lin
                d = _f(di + sigma, sq) * (s + sigma * _f(outdeg[j], sq)) - _f(di, sq) * s
            elif c == 7:
                d = (di + sigma) ** 2 - di * di
            else:
                d = sigma * covmats[k, i, j]
            u += betas[k] * d
        util[j] = u


@njit(cache=True)
def run_ministeps(x, frozen, codes, ptypes, betas, covmats, uniforms):
    """Apply ``len(uniforms)`` micro-steps to ``x`` in place.

    ``uniforms[s, 0]`` picks the actor, ``uniforms[s, 1]`` the alternative.
    Returns the number of steps that toggled a dyad.
    """
    n = x.shape[0]
    outdeg = np.zeros(n, dtype=np.float64)
    for a in range(n):
        for b in range(n):
            outdeg[a] += x[a, b]
    util = np.empty(n)
    toggles = 0
    for s in range(uniforms.shape[0]):
        i = int(uniforms[s, 0] * n)
        if i >= n:
            i = n - 1
        choice_utilities(x, frozen, codes, ptypes, betas, covmats, i, outdeg, util)
        top = 0.0
        for j in range(n):
            if util[j] > top:
                top = util[j]
        total = 0.0
        for j in range(n):
            util[j] = math.exp(util[j] - top)
            total += util[j]
        target = uniforms[s, 1] * total
        cum = 0.0
        pick = i
        for j in range(n):
            if util[j] > 0.0:
                cum += util[j]
                pick = j
                if cum > target:
                    break
        if pick != i:
            if x[i, pick]:
                x[i, pick] = 0
                outdeg[i] -= 1
            else:
                x[i, pick] = 1
                outdeg[i] += 1
            toggles += 1
    return toggles


@njit(cache=True)
def contributions(x, code, covmat):
    """Compiled twin of ``effects.contribution_matrix`` for one effect code."""
    n = x.shape[0]
    c = np.zeros((n, n))
    deg = np.zeros(n)
    for a in range(n):
        for b in range(n):
            deg[a] += x[a, b]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if code == 0:
                v = 1.0
            elif code == 1:
                v = float(x[j, i])
            elif code == 2 or code == 3 or code == 4:
                acc = 0
                for h in range(n):
                    if code == 2:
                        acc += x[h, i] * x[h, j]
                    elif code == 3:
                        acc += x[i, h] * x[h, j]
                    else:
                        acc += x[j, h] * x[h, i]
                v = float(acc)
            elif code == 5:
                v = deg[i] * deg[j]
            elif code == 6:
                v = math.sqrt(deg[i]) * math.sqrt(deg[j])
            elif code == 7:
                v = deg[i]
            else:
                v = covmat[i, j]
            c[i, j] = v
    return c


@njit(cache=True)
def period_statistics(x0, x1, codes, ptypes, covmats):
    """Compiled twin of ``effects.period_change_statistics``."""
    K = codes.shape[0]
    n = x0.shape[0]
    out = np.zeros(K)
    for k in range(K):
        c0 = contributions(x0, codes[k], covmats[k])
        c1 = contributions(x1, codes[k], covmats[k])
        s = 0.0
        for i in range(n):
            for j in range(n):
                if ptypes[k] == 0:
                    s += x1[i, j] * c1[i, j] - x0[i, j] * c0[i, j]
                elif ptypes[k] == 1:
                    s += (1 - x0[i, j]) * x1[i, j] * c1[i, j]
                else:
                    s += x0[i, j] * (x1[i, j] * c1[i, j] - c0[i, j])
        out[k] = s
    return out
