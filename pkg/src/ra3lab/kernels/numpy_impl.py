"""Pure-numpy implementations of the hot kernels.

Same contracts as the numba twins in ``numba_impl``; selected with
``RA3LAB_BACKEND=numpy``. Vectorized over batch dimensions, sequential over
time steps (the recursions are inherently sequential). All samplers consume
pre-drawn uniforms so both backends see identical random draws.
"""

import numpy as np


def vi_backup(rew, ker, v):
    """One semi-MDP Bellman backup: max_z [ rew[z] + ker[z] @ v ]."""
    return np.max(rew + ker @ v, axis=0)


def vi_solve(rew, ker, tol, max_iter):
    """Value-iterate from V=0 until sup-norm residual <= tol.

    Returns (v, residuals, converged); residuals[n] = ||V_{n+1} - V_n||_inf.
    """
    v = np.zeros(rew.shape[1])
    residuals = np.empty(max_iter)
    for n in range(max_iter):
        w = np.max(rew + ker @ v, axis=0)
        r = np.max(np.abs(w - v))
        residuals[n] = r
        v = w
        if r <= tol:
            return v, residuals[: n + 1], True
    return v, residuals, False


def _rowwise_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def _sample_rows(p, u):
    """Inverse-CDF draw per row: first index with running sum > u."""
    cum = np.cumsum(p, axis=-1)
    z = (cum <= u[..., None]).sum(axis=-1)
    return np.minimum(z, p.shape[-1] - 1)


def sample_latent_paths(post_logits, ctx, lens, u, inv_temp):
    """Sample one latent path per record from the tempered posterior.

    post_logits: (C, K, K) table indexed [context, z_prev, z]; ctx/u: (N, T);
    z_prev starts at the reserved <act> id 0. Returns (N, T) int64 latents
    (padding steps t >= lens[n] stay 0).
    """
    n_rec, t_max = ctx.shape
    latents = np.zeros((n_rec, t_max), dtype=np.int64)
    z_prev = np.zeros(n_rec, dtype=np.int64)
    for t in range(t_max):
        active = t < lens
        rows = post_logits[ctx[:, t], z_prev] * inv_temp
        p = _rowwise_softmax(rows)
        z = _sample_rows(p, u[:, t])
        z = np.where(active, z, 0)
        latents[:, t] = z
        z_prev = np.where(active, z, z_prev)
    return latents


def estep_accumulate(post_logits, dec_logp, ctx, tok, lens, step_pen, fmt_ok,
                     think_len, u, window, inv_temp, entropy_coef):
    """One policy-gradient accumulation pass over a batch of expert records.

    For each record: sample G latent rollouts from the tempered posterior,
    score each step with the format-gated, penalty-shaped log-likelihood
    reward, form W-truncated tail returns with the matching group-mean
    baseline, and accumulate leave-one-out-debiased score-function gradients
    (plus the entropy bonus) into a dense (C, K, K) logit gradient.

    Shapes: dec_logp (C, K, A) frozen decoder log-probs; ctx/tok (N, T);
    u (N, G, T) pre-drawn uniforms; step_pen (K,) per-latent penalty;
    fmt_ok (K,) 0/1 format flags; think_len (K,) surface lengths.

    Returns (grad, stats) with stats = [reward_sum, n_steps, n_think,
    n_malformed, think_len_sum] where n_steps counts sampled (g, t) steps.
    """
    n_rec, n_group, t_max = u.shape
    n_ctx, k_lat, _ = post_logits.shape
    grad = np.zeros_like(post_logits)

    latents = np.zeros((n_rec, n_group, t_max), dtype=np.int64)
    prevs = np.zeros((n_rec, n_group, t_max), dtype=np.int64)
    probs = np.zeros((n_rec, n_group, t_max, k_lat))
    rewards = np.zeros((n_rec, n_group, t_max))
    active = np.zeros((n_rec, n_group, t_max), dtype=bool)

    z_prev = np.zeros((n_rec, n_group), dtype=np.int64)
    for t in range(t_max):
        act_t = (t < lens)[:, None] & np.ones((1, n_group), dtype=bool)
        rows = post_logits[ctx[:, t][:, None], z_prev] * inv_temp
        p = _rowwise_softmax(rows)
        z = _sample_rows(p, u[:, :, t])
        z = np.where(act_t, z, 0)
        r = np.where(fmt_ok[z] > 0,
                     dec_logp[ctx[:, t][:, None], z, tok[:, t][:, None]] - step_pen[z],
                     0.0)
        latents[:, :, t] = z
        prevs[:, :, t] = z_prev
        probs[:, :, t] = p
        rewards[:, :, t] = np.where(act_t, r, 0.0)
        active[:, :, t] = act_t
        z_prev = np.where(act_t, z, z_prev)

    # W-truncated tail returns: C_t = S_t - S_{t+W} on the suffix cumsum.
    suf = np.zeros((n_rec, n_group, t_max + 1))
    suf[:, :, :-1] = np.cumsum(rewards[:, :, ::-1], axis=2)[:, :, ::-1]
    idx = np.minimum(np.arange(t_max) + window, t_max)
    tails = suf[:, :, :t_max] - suf[:, :, idx]
    baseline = tails.mean(axis=1, keepdims=True)
    adv = tails - baseline

    # Score-function term, debiased by 1/(G-1) to undo the self-inclusive
    # group baseline; entropy bonus averaged over the group.
    coef = np.where(active, adv * (inv_temp / (n_group - 1)), 0.0)
    logp = np.log(probs, out=np.full_like(probs, -np.inf), where=probs > 0)
    ent = -np.sum(np.where(probs > 0, probs * logp, 0.0), axis=-1)
    ent_grad = np.where((probs > 0) & active[..., None],
                        -probs * (logp + ent[..., None]), 0.0)

    row_grad = -coef[..., None] * probs
    flat = row_grad.reshape(-1, k_lat)
    flat[np.arange(flat.shape[0]), latents.reshape(-1)] += \
        np.where(active, coef, 0.0).reshape(-1)
    row_grad += (entropy_coef * inv_temp / n_group) * ent_grad

    ctx_steps = np.broadcast_to(ctx[:, None, :], (n_rec, n_group, t_max))
    np.add.at(grad, (ctx_steps.reshape(-1), prevs.reshape(-1)),
              row_grad.reshape(-1, k_lat))

    z_act = latents[active]
    is_think = z_act != 0
    malformed = fmt_ok[z_act] == 0
    stats = np.array([
        rewards[active].sum(),
        float(z_act.size),
        float(is_think.sum()),
        float(malformed.sum()),
        float(think_len[z_act].sum()),
    ])
    return grad, stats


def sample_token_seqs(logits, ctx0, horizon, u, base, order):
    """Autoregressively sample token sequences from a (C, A) tabular policy.

    ctx0: (B,) start contexts; u: (B, horizon). Contexts roll as order-k
    suffixes in base (n_tokens + 1). Returns (tokens, ctxs), both (B, horizon);
    ctxs[b, t] is the context the t-th token was sampled from.
    """
    n_batch = ctx0.shape[0]
    toks = np.zeros((n_batch, horizon), dtype=np.int64)
    ctxs = np.zeros((n_batch, horizon), dtype=np.int64)
    ctx = ctx0.astype(np.int64).copy()
    mod = base ** (order - 1) if order >= 1 else 1
    for t in range(horizon):
        ctxs[:, t] = ctx
        p = _rowwise_softmax(logits[ctx])
        a = _sample_rows(p, u[:, t])
        toks[:, t] = a
        if order >= 1:
            ctx = (ctx % mod) * base + (a + 1)
    return toks, ctxs
