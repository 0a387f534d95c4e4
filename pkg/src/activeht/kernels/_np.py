"""Pure-numpy kernels with the same signatures as the numba ones.

Episode simulation is vectorized across episodes instead of looping; the
network kernels are batched matrix products.
"""

import math

import numpy as np

from ._common import (
    LOGIT_MAX,
    POLICY_DQN,
    POLICY_EJS,
    POLICY_HEU,
    POLICY_OPE,
    POLICY_RANDOM,
    TIE_TOL,
)


def log_excluding(lr, skip):
    """Row-wise log-sum-exp of ``lr`` (E, H) over columns != skip."""
    cols = [j for j in range(lr.shape[1]) if j != skip]
    m = lr[:, cols].max(axis=1)
    finite = m > -np.inf
    m_safe = np.where(finite, m, 0.0)
    s = np.zeros(lr.shape[0])
    with np.errstate(invalid="ignore"):
        for j in cols:
            s += np.exp(lr[:, j] - m_safe)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(s)
    return np.where(finite, out, -np.inf)


def logit(lr, i):
    a = lr[:, i]
    b = log_excluding(lr, i)
    with np.errstate(invalid="ignore"):
        v = np.clip(a - b, -LOGIT_MAX, LOGIT_MAX)
    v = np.where(b == -np.inf, LOGIT_MAX, v)
    return np.where(a == -np.inf, -LOGIT_MAX, v)


def abllr(lr):
    i = leader(lr)
    lc = _leader_complement(lr, i)
    s = np.zeros(lr.shape[0])
    for j in range(lr.shape[1]):
        rho = np.exp(lr[:, j])
        with np.errstate(invalid="ignore", divide="ignore"):
            v = np.where(i == j, np.where(lc == -np.inf, LOGIT_MAX, lr[:, j] - lc),
                         lr[:, j] - np.log1p(-rho))
        v = np.clip(v, -LOGIT_MAX, LOGIT_MAX)
        s += np.where(lr[:, j] > -np.inf, rho * v, 0.0)
    return s


def bayes_update(lr, lcol):
    """Posterior rows and log marginals for (E, H) log-beliefs and (E, H) log-likelihoods."""
    out = lr + lcol
    lm = log_excluding(out, -1)
    ok = lm > -np.inf
    out = np.where(ok[:, None], out - np.where(ok, lm, 0.0)[:, None], out)
    return out, lm


def leader(lr):
    return np.argmax(lr, axis=1)


def _leader_complement(lr, i):
    lc = np.empty(lr.shape[0])
    for k in range(lr.shape[1]):
        sel = i == k
        if sel.any():
            lc[sel] = log_excluding(lr[sel], k)
    return lc


def argmax_tol(scores):
    best = np.zeros(scores.shape[0], dtype=np.int64)
    rows = np.arange(scores.shape[0])
    for u in range(1, scores.shape[1]):
        cur = scores[rows, best]
        better = scores[:, u] > cur + TIE_TOL * (1.0 + np.abs(cur))
        best = np.where(better, u, best)
    return best


def inverse_cdf(cdf_rows, draws):
    """Vectorized first index with draw < cdf; last index if none."""
    k = cdf_rows.shape[-1]
    idx = np.sum(cdf_rows <= draws[:, None], axis=1)
    return np.minimum(idx, k - 1)


def augment(lr):
    e, hn = lr.shape
    i = leader(lr)
    lc = _leader_complement(lr, i)
    x = np.zeros((e, 2 * hn))
    x[:, :hn] = np.exp(lr)
    ok = lc > -np.inf
    with np.errstate(invalid="ignore"):
        alt = np.exp(lr - np.where(ok, lc, 0.0)[:, None])
    alt[np.arange(e), i] = 0.0
    x[:, hn:] = np.where(ok[:, None], alt, 0.0)
    return x


def ejs_scores(lr, logp_t):
    """EJS scores (E, U); ``logp_t`` is the (U, Y, H) transposed log table."""
    c0 = abllr(lr)
    n_u, n_y, _ = logp_t.shape
    out = np.zeros((lr.shape[0], n_u))
    for u in range(n_u):
        s = np.zeros(lr.shape[0])
        for y in range(n_y):
            post, lm = bayes_update(lr, logp_t[u, y][None, :])
            ok = lm > -np.inf
            s = np.where(ok, s + np.exp(lm) * (abllr(post) - c0), s)
        out[:, u] = s
    return out


def heu_scores(lr, kl):
    e, hn = lr.shape
    i = leader(lr)
    out = np.zeros((e, kl.shape[1]))
    for k in range(hn):
        sel = np.flatnonzero(i == k)
        if sel.size == 0:
            continue
        sub = lr[sel]
        lc = log_excluding(sub, k)
        ok = lc > -np.inf
        with np.errstate(invalid="ignore"):
            w = np.exp(sub - np.where(ok, lc, 0.0)[:, None])
        w[:, k] = 0.0
        w = np.where(ok[:, None], w, 0.0)
        s = np.zeros((sel.size, kl.shape[1]))
        for j in range(hn):
            if j != k:
                s += w[:, j : j + 1] * kl[k, :, j][None, :]
        out[sel] = s
    return out


# --- feed-forward network ----------------------------------------------------


def _layers(theta, dims):
    p = 0
    layers = []
    for din, dout in zip(dims[:-1], dims[1:]):
        w = theta[p : p + din * dout].reshape(dout, din)
        p += din * dout
        b = theta[p : p + dout]
        p += dout
        layers.append((w, b))
    return layers


def _forward_cache(theta, dims, xs):
    layers = _layers(theta, dims)
    acts = [xs]
    a = xs
    for l, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if l < len(layers) - 1:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return layers, acts


def mlp_forward(theta, dims, xs):
    return _forward_cache(theta, dims, np.atleast_2d(xs))[1][-1]


def selected_loss_grad(theta, dims, xs, actions, targets):
    layers, acts = _forward_cache(theta, dims, xs)
    rows = np.arange(xs.shape[0])
    err = acts[-1][rows, actions] - targets
    loss = float(err @ err) / xs.shape[0]
    delta = np.zeros_like(acts[-1])
    delta[rows, actions] = 2.0 * err / xs.shape[0]
    grads = []
    for l in range(len(layers) - 1, -1, -1):
        w, _ = layers[l]
        a_in = acts[l]
        grads.append((delta.T @ a_in, delta.sum(axis=0)))
        if l > 0:
            delta = (delta @ w) * (a_in > 0.0)
    grad = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
    return loss, grad


def q_targets(theta, dims, xs, actions, next_xs, rewards, gamma, zeta):
    q = mlp_forward(theta, dims, xs)[np.arange(xs.shape[0]), actions]
    m = mlp_forward(theta, dims, next_xs).max(axis=1)
    return q + zeta * (rewards + gamma * m - q)


def fit_minibatch(theta, dims, xs, actions, next_xs, rewards, gamma, zeta, lr, epochs):
    # overflow is expected when training diverges; it is reported via the nan return
    with np.errstate(over="ignore", invalid="ignore"):
        targets = q_targets(theta, dims, xs, actions, next_xs, rewards, gamma, zeta)
        work = theta.copy()
        total = 0.0
        for _ in range(epochs):
            loss, grad = selected_loss_grad(work, dims, xs, actions, targets)
            if not math.isfinite(loss):
                return np.nan
            work -= lr * grad
            total += loss
    if not np.all(np.isfinite(work)):
        return np.nan
    theta[:] = work
    return total / max(epochs, 1)


def train_episode(theta, dims, mem_s, mem_a, mem_s2, mem_r, mem_state, logp_t, obs_cdf,
                  log_prior, h, draws, epsilon, gamma, zeta, lr, epochs):
    n_q = logp_t.shape[0]
    cap = mem_s.shape[0]
    lr_b = log_prior[None, :].copy()
    cum = 0.0
    loss_sum = 0.0
    for n in range(draws.shape[0]):
        x = augment(lr_b)
        if draws[n, 0] < epsilon:
            u = min(int(draws[n, 1] * n_q), n_q - 1)
        else:
            u = int(argmax_tol(mlp_forward(theta, dims, x))[0])
        y = int(inverse_cdf(obs_cdf[h, u][None, :], draws[n, 2:3])[0])
        nxt, lm = bayes_update(lr_b, logp_t[u, y][None, :])
        if lm[0] == -np.inf:
            return cum, np.nan, n
        r = float(abllr(nxt)[0] - abllr(lr_b)[0])
        cum += r
        head = mem_state[1]
        mem_s[head] = x[0]
        mem_s2[head] = augment(nxt)[0]
        mem_a[head] = u
        mem_r[head] = r
        mem_state[1] = (head + 1) % cap
        if mem_state[0] < cap:
            mem_state[0] += 1
        size = mem_state[0]
        picks = np.minimum((draws[n, 3:] * size).astype(np.int64), size - 1)
        loss = fit_minibatch(theta, dims, mem_s[picks], mem_a[picks], mem_s2[picks],
                             mem_r[picks], gamma, zeta, lr, epochs)
        if not math.isfinite(loss):
            return cum, np.nan, n
        loss_sum += loss
        lr_b = nxt
    return cum, loss_sum / max(draws.shape[0], 1), -1


# --- episode simulation ------------------------------------------------------


def _select(kind, lr, draws, logp_t, rho_bar, kl, alpha_cdf, theta, dims):
    n_q = logp_t.shape[0]
    if kind == POLICY_RANDOM:
        return np.minimum((draws * n_q).astype(np.int64), n_q - 1)
    if kind == POLICY_DQN:
        return argmax_tol(mlp_forward(theta, dims, augment(lr)))
    u = np.zeros(lr.shape[0], dtype=np.int64)
    verify = np.zeros(lr.shape[0], dtype=bool)
    i = leader(lr)
    if kind != POLICY_EJS:
        verify = np.exp(lr[np.arange(lr.shape[0]), i]) > rho_bar
    explore = ~verify
    if explore.any():
        u[explore] = argmax_tol(ejs_scores(lr[explore], logp_t))
    if verify.any():
        if kind == POLICY_OPE:
            u[verify] = inverse_cdf(alpha_cdf[i[verify]], draws[verify])
        elif kind == POLICY_HEU:
            u[verify] = argmax_tol(heu_scores(lr[verify], kl))
    return u


def simulate_batch(kind, logp_t, obs_cdf, log_prior, h, draws, rho_bar, kl, alpha_cdf,
                   theta, dims, conf, abl, queries, obs):
    e_count, n_steps = draws.shape[0], draws.shape[1]
    lr = np.repeat(log_prior[None, :], e_count, axis=0)
    conf[:, 0] = logit(lr, h)
    abl[:, 0] = abllr(lr)
    for n in range(n_steps):
        u = _select(kind, lr, draws[:, n, 0], logp_t, rho_bar, kl, alpha_cdf, theta, dims)
        y = inverse_cdf(obs_cdf[h, u], draws[:, n, 1])
        lr, lm = bayes_update(lr, logp_t[u, y])
        if np.any(lm == -np.inf):
            raise ValueError("observation impossible under every hypothesis with positive belief")
        queries[:, n] = u
        obs[:, n] = y
        conf[:, n + 1] = logit(lr, h)
        abl[:, n + 1] = abllr(lr)


# --- zero-sum game -------------------------------------------------------------


def fictitious_play(payoff, tol, max_iters):
    n_u, n_j = payoff.shape
    xc = np.full(n_u, 1.0 / n_u)
    yc = np.full(n_j, 1.0 / n_j)
    tx = ty = 1.0
    rowpay = (payoff * yc[None, :]).sum(axis=1)
    colpay = (payoff * xc[:, None]).sum(axis=0)
    best_lo, best_hi = -np.inf, np.inf
    alpha = xc.copy()
    gap = np.inf
    for it in range(1, max_iters + 1):
        bj = int(np.argmin(colpay))
        bu = int(np.argmax(rowpay))
        lo = colpay[bj] / tx
        hi = rowpay[bu] / ty
        if lo > best_lo:
            best_lo = lo
            alpha = xc / tx
        best_hi = min(best_hi, hi)
        gap = best_hi - best_lo
        if gap <= tol:
            return alpha, best_lo, gap, it, True
        xc[bu] += 1.0
        tx += 1.0
        colpay += payoff[bu]
        yc[bj] += 1.0
        ty += 1.0
        rowpay += payoff[:, bj]
    return alpha, best_lo, gap, max_iters, False
