"""Loop kernels compiled with numba.

Beliefs are carried as log-probability vectors throughout; the public
``Belief`` type converts at the boundary.
"""

import math

import numpy as np
from numba import njit

from ._common import (
    LOGIT_MAX,
    POLICY_DQN,
    POLICY_EJS,
    POLICY_HEU,
    POLICY_OPE,
    POLICY_RANDOM,
    TIE_TOL,
)

_OPTS = {"cache": True, "nogil": True}


@njit(**_OPTS)
def log_excluding(lr, skip):
    """log of sum(exp(lr[j])) over j != skip (skip=-1 keeps every term)."""
    m = -np.inf
    for j in range(lr.shape[0]):
        if j != skip and lr[j] > m:
            m = lr[j]
    if m == -np.inf:
        return -np.inf
    s = 0.0
    for j in range(lr.shape[0]):
        if j != skip:
            s += math.exp(lr[j] - m)
    return m + math.log(s)


@njit(**_OPTS)
def logit(lr, i):
    a = lr[i]
    if a == -np.inf:
        return -LOGIT_MAX
    b = log_excluding(lr, i)
    if b == -np.inf:
        return LOGIT_MAX
    v = a - b
    if v > LOGIT_MAX:
        return LOGIT_MAX
    if v < -LOGIT_MAX:
        return -LOGIT_MAX
    return v


@njit(**_OPTS)
def abllr(lr):
    """Belief-weighted log-odds; only the leader needs the summed complement,
    every other entry is at most 1/2 so log1p(-rho) is accurate."""
    i = leader(lr)
    lc = log_excluding(lr, i)
    s = 0.0
    for j in range(lr.shape[0]):
        if lr[j] == -np.inf:
            continue
        rho = math.exp(lr[j])
        if j == i:
            v = LOGIT_MAX if lc == -np.inf else lr[j] - lc
        else:
            v = lr[j] - math.log1p(-rho)
        if v > LOGIT_MAX:
            v = LOGIT_MAX
        elif v < -LOGIT_MAX:
            v = -LOGIT_MAX
        s += rho * v
    return s


@njit(**_OPTS)
def bayes_update(lr, lcol, out):
    """Write the posterior into ``out``; return the log marginal (-inf if impossible)."""
    for h in range(lr.shape[0]):
        out[h] = lr[h] + lcol[h]
    lm = log_excluding(out, -1)
    if lm == -np.inf:
        return lm
    for h in range(lr.shape[0]):
        out[h] -= lm
    return lm


@njit(**_OPTS)
def leader(lr):
    best = 0
    for i in range(1, lr.shape[0]):
        if lr[i] > lr[best]:
            best = i
    return best


@njit(**_OPTS)
def argmax_tol(scores):
    best = 0
    for u in range(1, scores.shape[0]):
        if scores[u] > scores[best] + TIE_TOL * (1.0 + abs(scores[best])):
            best = u
    return best


@njit(**_OPTS)
def inverse_cdf(cdf_row, draw):
    k = cdf_row.shape[0]
    for j in range(k):
        if draw < cdf_row[j]:
            return j
    return k - 1


@njit(**_OPTS)
def augment(lr, x):
    hn = lr.shape[0]
    i = leader(lr)
    lc = log_excluding(lr, i)
    for j in range(hn):
        x[j] = math.exp(lr[j])
        if j == i or lc == -np.inf:
            x[hn + j] = 0.0
        else:
            x[hn + j] = math.exp(lr[j] - lc)


@njit(**_OPTS)
def ejs_scores(lr, logp_t, buf, out):
    """EJS scores; ``logp_t`` is the log table transposed to (U, Y, H)."""
    c0 = abllr(lr)
    for u in range(logp_t.shape[0]):
        s = 0.0
        for y in range(logp_t.shape[1]):
            lm = bayes_update(lr, logp_t[u, y], buf)
            if lm == -np.inf:
                continue
            s += math.exp(lm) * (abllr(buf) - c0)
        out[u] = s


@njit(**_OPTS)
def heu_scores(lr, kl, out):
    i = leader(lr)
    lc = log_excluding(lr, i)
    for u in range(kl.shape[1]):
        s = 0.0
        if lc > -np.inf:
            for j in range(lr.shape[0]):
                if j != i:
                    s += math.exp(lr[j] - lc) * kl[i, u, j]
        out[u] = s


# --- feed-forward network on a flat parameter vector -------------------------
# Layer l stores W (dims[l+1] x dims[l], row-major) followed by b (dims[l+1]).


@njit(**_OPTS)
def mlp_forward_one(theta, dims, x, acts):
    """Fill ``acts`` with every layer's activations; return the output offset."""
    n_layers = dims.shape[0] - 1
    for k in range(dims[0]):
        acts[k] = x[k]
    p = 0
    a_off = 0
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        o_off = a_off + din
        bo = p + din * dout
        for r in range(dout):
            s = 0.0
            row = p + r * din
            for k in range(din):
                s += theta[row + k] * acts[a_off + k]
            s += theta[bo + r]
            if l < n_layers - 1 and s < 0.0:
                s = 0.0
            acts[o_off + r] = s
        p = bo + dout
        a_off = o_off
    return a_off


@njit(**_OPTS)
def mlp_forward(theta, dims, xs):
    n_out = dims[dims.shape[0] - 1]
    acts = np.empty(dims.sum())
    out = np.empty((xs.shape[0], n_out))
    for b in range(xs.shape[0]):
        o = mlp_forward_one(theta, dims, xs[b], acts)
        for r in range(n_out):
            out[b, r] = acts[o + r]
    return out


@njit(**_OPTS)
def _forward_batch(theta, dims, xs):
    """Activations of every layer for a batch (BLAS matmuls via np.dot)."""
    n_layers = dims.shape[0] - 1
    acts = [np.ascontiguousarray(xs)]
    p = 0
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        w = theta[p : p + din * dout].reshape((dout, din))
        p += din * dout
        z = np.dot(acts[l], w.T)
        relu = l < n_layers - 1
        for r in range(z.shape[0]):
            for c in range(dout):
                v = z[r, c] + theta[p + c]
                if relu and v < 0.0:
                    v = 0.0
                z[r, c] = v
        p += dout
        acts.append(z)
    return acts


@njit(**_OPTS)
def selected_loss_grad(theta, dims, xs, actions, targets):
    """Mean over the batch of (targets[b] - Q(xs[b])[actions[b]])**2, and its gradient."""
    n_layers = dims.shape[0] - 1
    acts = _forward_batch(theta, dims, xs)
    out = acts[n_layers]
    n_b = xs.shape[0]
    delta = np.zeros((n_b, dims[n_layers]))
    loss = 0.0
    for b in range(n_b):
        err = out[b, actions[b]] - targets[b]
        loss += err * err
        delta[b, actions[b]] = 2.0 * err / n_b
    offs = np.empty(n_layers, dtype=np.int64)
    p = 0
    for l in range(n_layers):
        offs[l] = p
        p += dims[l] * dims[l + 1] + dims[l + 1]
    grad = np.empty(theta.shape[0])
    for l in range(n_layers - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        p = offs[l]
        gw = np.dot(delta.T, acts[l])
        for r in range(dout):
            for k in range(din):
                grad[p + r * din + k] = gw[r, k]
            s = 0.0
            for b in range(n_b):
                s += delta[b, r]
            grad[p + din * dout + r] = s
        if l > 0:
            w = theta[p : p + din * dout].reshape((dout, din))
            nd = np.dot(delta, w)
            a_in = acts[l]
            for b in range(n_b):
                for k in range(din):
                    if a_in[b, k] <= 0.0:
                        nd[b, k] = 0.0
            delta = nd
    return loss / n_b, grad


@njit(**_OPTS)
def q_targets(theta, dims, xs, actions, next_xs, rewards, gamma, zeta):
    n_layers = dims.shape[0] - 1
    q_next = _forward_batch(theta, dims, next_xs)[n_layers]
    q_now = _forward_batch(theta, dims, xs)[n_layers]
    out = np.empty(xs.shape[0])
    for b in range(xs.shape[0]):
        m = q_next[b, 0]
        for r in range(1, q_next.shape[1]):
            if q_next[b, r] > m:
                m = q_next[b, r]
        q = q_now[b, actions[b]]
        out[b] = q + zeta * (rewards[b] + gamma * m - q)
    return out


@njit(**_OPTS)
def fit_minibatch(theta, dims, xs, actions, next_xs, rewards, gamma, zeta, lr, epochs):
    """Targets from the frozen ``theta``; ``epochs`` gradient steps on a copy; commit.

    Returns the mean loss over epochs, or nan (leaving ``theta`` untouched) on divergence.
    """
    targets = q_targets(theta, dims, xs, actions, next_xs, rewards, gamma, zeta)
    work = theta.copy()
    total = 0.0
    for _ in range(epochs):
        loss, grad = selected_loss_grad(work, dims, xs, actions, targets)
        if not math.isfinite(loss):
            return np.nan
        for k in range(work.shape[0]):
            work[k] -= lr * grad[k]
        total += loss
    for k in range(work.shape[0]):
        if not math.isfinite(work[k]):
            return np.nan
    theta[:] = work
    return total / max(epochs, 1)


@njit(**_OPTS)
def train_episode(theta, dims, mem_s, mem_a, mem_s2, mem_r, mem_state, logp_t, obs_cdf,
                  log_prior, h, draws, epsilon, gamma, zeta, lr, epochs):
    """One episode of deep Q-learning; mutates ``theta`` and the replay arrays.

    draws[n] = (explore coin, random query, observation, minibatch picks...).
    Returns (cumulative reward, mean loss, failing step or -1).
    """
    hn = log_prior.shape[0]
    n_q = logp_t.shape[0]
    n_steps = draws.shape[0]
    batch = draws.shape[1] - 3
    cap = mem_s.shape[0]
    lr_b = log_prior.copy()
    nxt = np.empty(hn)
    x = np.empty(2 * hn)
    acts = np.empty(dims.sum())
    scores = np.empty(n_q)
    xs = np.empty((batch, 2 * hn))
    next_xs = np.empty((batch, 2 * hn))
    acts_b = np.empty(batch, dtype=np.int64)
    rew_b = np.empty(batch)
    cum = 0.0
    loss_sum = 0.0
    for n in range(n_steps):
        augment(lr_b, x)
        if draws[n, 0] < epsilon:
            u = min(int(draws[n, 1] * n_q), n_q - 1)
        else:
            o = mlp_forward_one(theta, dims, x, acts)
            for k in range(n_q):
                scores[k] = acts[o + k]
            u = argmax_tol(scores)
        y = inverse_cdf(obs_cdf[h, u], draws[n, 2])
        lm = bayes_update(lr_b, logp_t[u, y], nxt)
        if lm == -np.inf:
            return cum, np.nan, n
        r = abllr(nxt) - abllr(lr_b)
        cum += r
        head = mem_state[1]
        mem_s[head, :] = x
        augment(nxt, mem_s2[head])
        mem_a[head] = u
        mem_r[head] = r
        mem_state[1] = (head + 1) % cap
        if mem_state[0] < cap:
            mem_state[0] += 1
        size = mem_state[0]
        for b in range(batch):
            k = min(int(draws[n, 3 + b] * size), size - 1)
            xs[b, :] = mem_s[k]
            next_xs[b, :] = mem_s2[k]
            acts_b[b] = mem_a[k]
            rew_b[b] = mem_r[k]
        loss = fit_minibatch(theta, dims, xs, acts_b, next_xs, rew_b, gamma, zeta, lr, epochs)
        if not math.isfinite(loss):
            return cum, np.nan, n
        loss_sum += loss
        lr_b[:] = nxt
    return cum, loss_sum / max(n_steps, 1), -1


# --- episode simulation ------------------------------------------------------


@njit(**_OPTS)
def _select(kind, lr, draw, logp_t, rho_bar, kl, alpha_cdf, theta, dims,
            buf, scores, x, acts):
    n_q = logp_t.shape[0]
    if kind == POLICY_RANDOM:
        return min(int(draw * n_q), n_q - 1)
    if kind == POLICY_DQN:
        augment(lr, x)
        o = mlp_forward_one(theta, dims, x, acts)
        for k in range(n_q):
            scores[k] = acts[o + k]
        return argmax_tol(scores)
    i = leader(lr)
    if kind != POLICY_EJS and math.exp(lr[i]) > rho_bar:
        if kind == POLICY_OPE:
            return inverse_cdf(alpha_cdf[i], draw)
        if kind == POLICY_HEU:
            heu_scores(lr, kl, scores)
            return argmax_tol(scores)
    ejs_scores(lr, logp_t, buf, scores)
    return argmax_tol(scores)


@njit(**_OPTS)
def simulate_batch(kind, logp_t, obs_cdf, log_prior, h, draws, rho_bar, kl, alpha_cdf,
                   theta, dims, conf, abl, queries, obs):
    """Run ``draws.shape[0]`` episodes under true hypothesis ``h``.

    draws[e, n] = (policy uniform, observation uniform). Fills conf/abl with
    shape (E, N+1) and queries/obs with shape (E, N).
    """
    hn = log_prior.shape[0]
    n_q = logp_t.shape[0]
    n_steps = draws.shape[1]
    lr = np.empty(hn)
    nxt = np.empty(hn)
    buf = np.empty(hn)
    scores = np.empty(n_q)
    x = np.empty(2 * hn)
    acts = np.empty(max(dims.sum(), 1))
    for e in range(draws.shape[0]):
        lr[:] = log_prior
        conf[e, 0] = logit(lr, h)
        abl[e, 0] = abllr(lr)
        for n in range(n_steps):
            u = _select(kind, lr, draws[e, n, 0], logp_t, rho_bar, kl, alpha_cdf,
                        theta, dims, buf, scores, x, acts)
            y = inverse_cdf(obs_cdf[h, u], draws[e, n, 1])
            lm = bayes_update(lr, logp_t[u, y], nxt)
            if lm == -np.inf:
                raise ValueError("observation impossible under every hypothesis with positive belief")
            lr[:] = nxt
            queries[e, n] = u
            obs[e, n] = y
            conf[e, n + 1] = logit(lr, h)
            abl[e, n + 1] = abllr(lr)


# --- zero-sum game -------------------------------------------------------------


@njit(**_OPTS)
def fictitious_play(payoff, tol, max_iters):
    """Simultaneous fictitious play from uniform mixtures.

    Returns (alpha, value, gap, iterations, converged) where ``alpha`` is the
    averaged maximizer strategy with the best certified lower bound seen.
    """
    n_u, n_j = payoff.shape
    xc = np.full(n_u, 1.0 / n_u)
    yc = np.full(n_j, 1.0 / n_j)
    tx = 1.0
    ty = 1.0
    rowpay = np.zeros(n_u)
    colpay = np.zeros(n_j)
    for u in range(n_u):
        for j in range(n_j):
            rowpay[u] += payoff[u, j] * yc[j]
            colpay[j] += payoff[u, j] * xc[u]
    best_lo = -np.inf
    best_hi = np.inf
    alpha = xc.copy()
    gap = np.inf
    for it in range(1, max_iters + 1):
        bj = 0
        for j in range(1, n_j):
            if colpay[j] < colpay[bj]:
                bj = j
        bu = 0
        for u in range(1, n_u):
            if rowpay[u] > rowpay[bu]:
                bu = u
        lo = colpay[bj] / tx
        hi = rowpay[bu] / ty
        if lo > best_lo:
            best_lo = lo
            for u in range(n_u):
                alpha[u] = xc[u] / tx
        if hi < best_hi:
            best_hi = hi
        gap = best_hi - best_lo
        if gap <= tol:
            return alpha, best_lo, gap, it, True
        xc[bu] += 1.0
        tx += 1.0
        for j in range(n_j):
            colpay[j] += payoff[bu, j]
        yc[bj] += 1.0
        ty += 1.0
        for u in range(n_u):
            rowpay[u] += payoff[u, bj]
    return alpha, best_lo, gap, max_iters, False
