"""Numba-jitted twins of the kernels in ``numpy_impl``.

Explicit loops, nopython mode, no fastmath (so float semantics track the
numpy fallback closely). All randomness comes in as pre-drawn uniforms.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _backup_into(rew, ker, v, out):
    n_z, n_s = rew.shape
    for s in range(n_s):
        best = -np.inf
        for z in range(n_z):
            acc = rew[z, s]
            for sp in range(n_s):
                acc += ker[z, s, sp] * v[sp]
            if acc > best:
                best = acc
        out[s] = best


@njit(cache=True)
def vi_backup(rew, ker, v):
    out = np.empty(rew.shape[1])
    _backup_into(rew, ker, v, out)
    return out


@njit(cache=True)
def vi_solve(rew, ker, tol, max_iter):
    n_s = rew.shape[1]
    v = np.zeros(n_s)
    w = np.empty(n_s)
    residuals = np.empty(max_iter)
    for n in range(max_iter):
        _backup_into(rew, ker, v, w)
        r = 0.0
        for s in range(n_s):
            d = abs(w[s] - v[s])
            if d > r:
                r = d
            v[s] = w[s]
        residuals[n] = r
        if r <= tol:
            return v, residuals[: n + 1].copy(), True
    return v, residuals, False


@njit(cache=True)
def _softmax_row(row, inv_temp, out):
    k = row.shape[0]
    m = -np.inf
    for j in range(k):
        x = row[j] * inv_temp
        out[j] = x
        if x > m:
            m = x
    tot = 0.0
    for j in range(k):
        e = np.exp(out[j] - m)
        out[j] = e
        tot += e
    for j in range(k):
        out[j] /= tot


@njit(cache=True)
def _draw(p, u):
    k = p.shape[0]
    acc = 0.0
    for j in range(k):
        acc += p[j]
        if u < acc:
            return j
    return k - 1


@njit(cache=True)
def sample_latent_paths(post_logits, ctx, lens, u, inv_temp):
    n_rec, t_max = ctx.shape
    k_lat = post_logits.shape[1]
    latents = np.zeros((n_rec, t_max), dtype=np.int64)
    p = np.empty(k_lat)
    for n in range(n_rec):
        z_prev = 0
        for t in range(lens[n]):
            _softmax_row(post_logits[ctx[n, t], z_prev], inv_temp, p)
            z = _draw(p, u[n, t])
            latents[n, t] = z
            z_prev = z
    return latents


@njit(cache=True)
def estep_accumulate(post_logits, dec_logp, ctx, tok, lens, step_pen, fmt_ok,
                     think_len, u, window, inv_temp, entropy_coef):
    n_rec, n_group, t_max = u.shape
    n_ctx, k_lat, _ = post_logits.shape
    grad = np.zeros((n_ctx, k_lat, k_lat))

    latents = np.empty((n_group, t_max), dtype=np.int64)
    prevs = np.empty((n_group, t_max), dtype=np.int64)
    probs = np.empty((n_group, t_max, k_lat))
    rewards = np.empty((n_group, t_max))
    tails = np.empty((n_group, t_max))

    reward_sum = 0.0
    n_steps = 0.0
    n_think = 0.0
    n_malformed = 0.0
    think_len_sum = 0.0
    ent_scale = entropy_coef * inv_temp / n_group

    for n in range(n_rec):
        t_len = lens[n]
        for g in range(n_group):
            z_prev = 0
            for t in range(t_len):
                c = ctx[n, t]
                _softmax_row(post_logits[c, z_prev], inv_temp, probs[g, t])
                z = _draw(probs[g, t], u[n, g, t])
                latents[g, t] = z
                prevs[g, t] = z_prev
                if fmt_ok[z] > 0:
                    rewards[g, t] = dec_logp[c, z, tok[n, t]] - step_pen[z]
                else:
                    rewards[g, t] = 0.0
                    n_malformed += 1.0
                reward_sum += rewards[g, t]
                n_steps += 1.0
                if z != 0:
                    n_think += 1.0
                    think_len_sum += think_len[z]
                z_prev = z

        # W-truncated tail returns per rollout.
        for g in range(n_group):
            acc = 0.0
            for t in range(t_len - 1, -1, -1):
                acc += rewards[g, t]
                if t + window < t_len:
                    acc -= rewards[g, t + window]
                tails[g, t] = acc

        for g in range(n_group):
            for t in range(t_len):
                b = 0.0
                for h in range(n_group):
                    b += tails[h, t]
                adv = tails[g, t] - b / n_group
                coef = adv * (inv_temp / (n_group - 1))
                c = ctx[n, t]
                zp = prevs[g, t]
                z = latents[g, t]
                ent = 0.0
                for j in range(k_lat):
                    pj = probs[g, t, j]
                    if pj > 0.0:
                        ent -= pj * np.log(pj)
                for j in range(k_lat):
                    pj = probs[g, t, j]
                    gj = -coef * pj
                    if j == z:
                        gj += coef
                    if ent_scale != 0.0 and pj > 0.0:
                        gj += ent_scale * (-pj * (np.log(pj) + ent))
                    grad[c, zp, j] += gj

    stats = np.array([reward_sum, n_steps, n_think, n_malformed, think_len_sum])
    return grad, stats


@njit(cache=True)
def sample_token_seqs(logits, ctx0, horizon, u, base, order):
    n_batch = ctx0.shape[0]
    n_tok = logits.shape[1]
    toks = np.zeros((n_batch, horizon), dtype=np.int64)
    ctxs = np.zeros((n_batch, horizon), dtype=np.int64)
    p = np.empty(n_tok)
    mod = 1
    if order >= 1:
        mod = base ** (order - 1)
    for b in range(n_batch):
        ctx = ctx0[b]
        for t in range(horizon):
            ctxs[b, t] = ctx
            _softmax_row(logits[ctx], 1.0, p)
            a = _draw(p, u[b, t])
            toks[b, t] = a
            if order >= 1:
                ctx = (ctx % mod) * base + (a + 1)
    return toks, ctxs
