"""Pure-Python (numpy) kernels; same contract and tie rules as ``_ckernels.pyx``."""
import numpy as np

OPTIMAL, UNBOUNDED, ITERATION_LIMIT = 0, 1, 2


def simplex_iterate(T, d, beta, basis, pos, at_upper, upper, bland, max_iter, stall_limit,
                    pivot_tol, opt_tol):
    """Bounded-variable primal simplex on a dense tableau, in place.

    ``T`` holds B^-1 A, ``d`` the reduced costs, ``beta`` the basic values.
    Nonbasic column j sits at 0, or at ``upper[j]`` when ``at_upper[j]``.
    Dantzig pricing; after ``stall_limit`` non-improving pivots the rule
    switches to Bland for the rest of the run.

    Returns (status, iterations, bland_flag).
    """
    m, n = T.shape
    it = 0
    since = 0
    nonbasic = pos < 0
    while it < max_iter:
        score = np.where(at_upper != 0, d, -d)
        ok = nonbasic & (upper != 0.0) & (score > opt_tol)
        if not ok.any():
            return OPTIMAL, it, bland
        if bland:
            j = int(np.argmax(ok))
        else:
            j = int(np.argmax(np.where(ok, score, -np.inf)))
        sigma = -1.0 if at_upper[j] else 1.0
        a = sigma * T[:, j]
        ub_basic = upper[basis]
        lim = np.full(m, np.inf)
        to_up = np.zeros(m, dtype=bool)
        dec = a > pivot_tol
        inc = (a < -pivot_tol) & np.isfinite(ub_basic)
        lim[dec] = beta[dec] / a[dec]
        lim[inc] = (ub_basic[inc] - beta[inc]) / (-a[inc])
        to_up[inc] = True
        np.maximum(lim, 0.0, out=lim)
        tmin = lim.min() if m else np.inf
        if upper[j] <= tmin:
            if np.isinf(upper[j]):
                return UNBOUNDED, it, bland
            t = upper[j]
            beta -= (sigma * t) * T[:, j]
            at_upper[j] = 0 if at_upper[j] else 1
            delta = sigma * t * d[j]
        else:
            cand = np.flatnonzero(lim <= tmin + 1e-12 * (1.0 + tmin))
            if bland:
                r = int(cand[np.argmin(basis[cand])])
            else:
                r = int(cand[np.argmax(np.abs(a[cand]))])
            t = lim[r]
            delta = sigma * t * d[j]
            enter_val = (upper[j] if at_upper[j] else 0.0) + sigma * t
            beta -= (sigma * t) * T[:, j]
            leaving = basis[r]
            # pivot
            row = T[r, :] / T[r, j]
            col = T[:, j].copy()
            col[r] = 0.0
            T -= np.outer(col, row)
            T[r, :] = row
            f = d[j]
            if f != 0.0:
                d -= f * row
            T[:, j] = 0.0
            T[r, j] = 1.0
            d[j] = 0.0
            beta[r] = enter_val
            at_upper[leaving] = 1 if to_up[r] else 0
            pos[leaving] = -1
            nonbasic[leaving] = True
            basis[r] = j
            pos[j] = r
            nonbasic[j] = False
            at_upper[j] = 0
        it += 1
        if -delta > 1e-12:
            since = 0
        else:
            since += 1
            if since >= stall_limit:
                bland = 1
    return ITERATION_LIMIT, it, bland


def q_learning_loop(cdf, last_support, R, gamma, alpha, eps, u, restarts, episode_length, s0, Q, N):
    """Tabular epsilon-greedy Q-learning over pre-drawn uniforms, in place.

    ``alpha[n]`` is the stepsize for the n-th visit of a pair; ``eps[k]`` the
    exploration rate at global step k.  Returns the final state.
    """
    S, A = R.shape
    cdf_l = cdf.tolist()
    last_l = last_support.tolist()
    R_l = R.tolist()
    Q_l = Q.tolist()
    N_l = N.tolist()
    alpha_l = alpha.tolist()
    eps_l = eps.tolist()
    u_l = u.tolist()
    restarts_l = restarts.tolist()
    s = int(s0)
    for k in range(len(eps_l)):
        if episode_length > 0 and k > 0 and k % episode_length == 0:
            s = restarts_l[k]
        uk = u_l[k]
        qs = Q_l[s]
        if uk[0] < eps_l[k]:
            a = int(uk[1] * A)
            if a >= A:
                a = A - 1
        else:
            a = 0
            best = qs[0]
            for b in range(1, A):
                if qs[b] > best:
                    best = qs[b]
                    a = b
        c = cdf_l[s][a]
        nxt = last_l[s][a]
        for sp in range(S - 1):
            if uk[2] < c[sp]:
                nxt = sp
                break
        qn = Q_l[nxt]
        m = qn[0]
        for b in range(1, A):
            if qn[b] > m:
                m = qn[b]
        N_l[s][a] += 1
        step = alpha_l[N_l[s][a]]
        qs[a] = (1.0 - step) * qs[a] + step * (R_l[s][a] + gamma * m)
        s = nxt
    Q[...] = Q_l
    N[...] = N_l
    return s
