"""Naive brute-force reference implementations used as test oracles.

Everything here is deliberately slow, textbook code: explicit loops,
dense matrix inverses, full sorts, no factorizations, and no calls into
the optimized scorer/estimator paths (only public dataclasses and the
shared seeded RNG, which both sides treat as an input contract).  The
test suite and the acceptance criteria compare the fast implementations
against these on small instances (d <= 32).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import CounterRng

AUTO_EPS_START = 1e-10
AUTO_EPS_CAP = 1e-2


# ---------------------------------------------------------------------------
# Estimation oracles (two explicit loops, float64 accumulation)


def naive_class_means(train, labels, n_classes):
    train = np.asarray(train, dtype=np.float64)
    d = train.shape[1]
    means = np.zeros((n_classes, d))
    counts = np.zeros(n_classes)
    for i in range(len(train)):
        c = int(labels[i])
        counts[c] += 1
        for j in range(d):
            means[c, j] += train[i, j]
    for c in range(n_classes):
        means[c] /= counts[c]
    return means


def naive_shared_covariance(train, labels, means):
    train = np.asarray(train, dtype=np.float64)
    n, d = train.shape
    cov = np.zeros((d, d))
    for i in range(n):
        v = train[i] - means[int(labels[i])]
        for j in range(d):
            for k in range(d):
                cov[j, k] += v[j] * v[k]
    return cov / n


def naive_per_class_covariances(train, labels, means, n_classes):
    train = np.asarray(train, dtype=np.float64)
    d = train.shape[1]
    covs = np.zeros((n_classes, d, d))
    counts = np.zeros(n_classes)
    for i in range(len(train)):
        c = int(labels[i])
        counts[c] += 1
        v = train[i] - means[c]
        for j in range(d):
            for k in range(d):
                covs[c, j, k] += v[j] * v[k]
    for c in range(n_classes):
        covs[c] /= counts[c]
    return covs, counts


def _naive_shrunk_inverse(cov):
    """Dense inverse under the identical trace-scaled shrinkage rule."""
    d = cov.shape[0]
    scale = float(np.trace(cov)) / d
    eps = AUTO_EPS_START
    while True:
        shrunk = cov + (eps * scale) * np.eye(d)
        try:
            np.linalg.cholesky(shrunk)
            return np.linalg.inv(shrunk), eps
        except np.linalg.LinAlgError:
            if eps >= AUTO_EPS_CAP:
                raise
            eps = min(eps * 10.0, AUTO_EPS_CAP)


def _naive_softmax(o):
    e = [math.exp(v) for v in o]
    s = sum(e)
    return [v / s for v in e]


def _naive_logits(w, b, x):
    c, d = w.shape
    return [sum(w[ci, j] * x[j] for j in range(d)) + b[ci] for ci in range(c)]


# ---------------------------------------------------------------------------
# Scorer oracles


def naive_mahalanobis(train, labels, test, n_classes, normalize=False):
    """Textbook Mahalanobis score: explicit inverse, triple loops."""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if normalize:
        train = np.array([r / math.sqrt(float(r @ r)) for r in train])
        test = np.array([r / math.sqrt(float(r @ r)) for r in test])
    means = naive_class_means(train, labels, n_classes)
    cov = naive_shared_covariance(train, labels, means)
    inv, _eps = _naive_shrunk_inverse(cov)
    scores = np.empty(len(test))
    for i in range(len(test)):
        best = math.inf
        for c in range(n_classes):
            v = test[i] - means[c]
            q = float(v @ inv @ v)
            if q < best:
                best = q
        scores[i] = -best
    return scores


def naive_rel_mahalanobis(train, labels, test, n_classes, normalize=False):
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if normalize:
        train = np.array([r / math.sqrt(float(r @ r)) for r in train])
        test = np.array([r / math.sqrt(float(r @ r)) for r in test])
    means = naive_class_means(train, labels, n_classes)
    cov = naive_shared_covariance(train, labels, means)
    inv, _ = _naive_shrunk_inverse(cov)
    gmean = train.mean(axis=0)
    gcov = np.zeros_like(cov)
    for i in range(len(train)):
        v = train[i] - gmean
        gcov += np.outer(v, v)
    gcov /= len(train)
    ginv, _ = _naive_shrunk_inverse(gcov)
    scores = np.empty(len(test))
    for i in range(len(test)):
        vg = test[i] - gmean
        dg = float(vg @ ginv @ vg)
        best = math.inf
        for c in range(n_classes):
            v = test[i] - means[c]
            q = float(v @ inv @ v) - dg
            if q < best:
                best = q
        scores[i] = -best
    return scores


def naive_msp(w, b, test):
    return np.array([max(_naive_softmax(_naive_logits(w, b, x))) for x in test])


def naive_maxlogit(w, b, test):
    return np.array([max(_naive_logits(w, b, x)) for x in test])


def naive_energy(w, b, test):
    return np.array([math.log(sum(math.exp(v) for v in _naive_logits(w, b, x)))
                     for x in test])


def _naive_quantile(values, q):
    """Linear-interpolation quantile of a flat list (numpy 'linear' rule)."""
    v = sorted(values)
    h = (len(v) - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def naive_energy_react(w, b, test, train, clip_quantile=0.99):
    r = _naive_quantile(list(np.asarray(train, dtype=np.float64).ravel()), clip_quantile)
    scores = []
    for x in test:
        clipped = [min(v, r) for v in x]
        scores.append(math.log(sum(math.exp(v) for v in _naive_logits(w, b, clipped))))
    return np.array(scores)


def naive_klm(w, b, train, train_labels, test, n_classes, floor=1e-12):
    d_c = np.zeros((n_classes, w.shape[0]))
    counts = np.zeros(n_classes)
    for i, x in enumerate(train):
        c = int(train_labels[i])
        counts[c] += 1
        p = _naive_softmax(_naive_logits(w, b, x))
        for k in range(len(p)):
            d_c[c, k] += p[k]
    for c in range(n_classes):
        d_c[c] /= counts[c]
    scores = []
    for x in test:
        p = _naive_softmax(_naive_logits(w, b, x))
        best = math.inf
        for c in range(n_classes):
            kl = 0.0
            for k in range(len(p)):
                pk = max(p[k], floor)
                dk = max(d_c[c, k], floor)
                kl += pk * (math.log(pk) - math.log(dk))
            best = min(best, kl)
        scores.append(-best)
    return np.array(scores)


def naive_knn(train, test, k):
    train_n = np.array([r / math.sqrt(float(r @ r)) for r in np.asarray(train, dtype=np.float64)])
    scores = []
    for x in np.asarray(test, dtype=np.float64):
        z = x / math.sqrt(float(x @ x))
        dists = sorted(math.sqrt(float((z - t) @ (z - t))) for t in train_n)
        scores.append(-dists[k - 1])
    return np.array(scores)


def naive_vim(w, b, train, test, dim):
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    u = -np.linalg.pinv(w) @ b
    offset = train - u
    gram = np.zeros((train.shape[1], train.shape[1]))
    for row in offset:
        gram += np.outer(row, row)
    eigvals, eigvecs = np.linalg.eigh(gram)
    order = np.argsort(-eigvals, kind="stable")
    v = eigvecs[:, order[:dim]]
    perp = np.eye(train.shape[1]) - v @ v.T

    res_train = [math.sqrt(float((perp @ row) @ (perp @ row))) for row in offset]
    maxlogits = [max(_naive_logits(w, b, x)) for x in train]
    denom = sum(res_train)
    floor = 1e-9 * sum(math.sqrt(float(row @ row)) for row in offset)
    alpha = sum(maxlogits) / denom if denom > floor else 0.0

    scores = []
    for x in test:
        h = x - u
        o0 = alpha * math.sqrt(float((perp @ h) @ (perp @ h)))
        o = _naive_logits(w, b, x)
        total = sum(math.exp(v_) for v_ in o) + math.exp(o0)
        scores.append(-math.exp(o0) / total)
    return np.array(scores)


def naive_cosine(means, test):
    scores = []
    for x in np.asarray(test, dtype=np.float64):
        nx = math.sqrt(float(x @ x))
        best = -math.inf
        for m in np.asarray(means, dtype=np.float64):
            nm = math.sqrt(float(m @ m))
            best = max(best, float(x @ m) / (nx * nm))
        scores.append(best)
    return np.array(scores)


def naive_ssc(w, b, test, scale=1.0):
    scores = []
    for x in np.asarray(test, dtype=np.float64):
        nx = math.sqrt(float(x @ x))
        cos = [float(x @ wc) / (nx * math.sqrt(float(wc @ wc))) for wc in w]
        scores.append(max(_naive_softmax([scale * v for v in cos])))
    return np.array(scores)


def naive_ash_s(w, b, test, prune_percentile):
    scores = []
    for x in np.asarray(test, dtype=np.float64):
        thr = _naive_quantile(list(x), prune_percentile / 100.0)
        kept = [v if v >= thr else 0.0 for v in x]
        s1 = sum(x)
        s2 = sum(kept)
        if s2 == 0:
            shaped = [0.0] * len(x)
        else:
            scale = math.exp(min(max(s1 / s2, -300.0), 300.0))
            shaped = [v * scale for v in kept]
        o = _naive_logits(w, b, shaped)
        scores.append(math.log(sum(math.exp(v) for v in o)))
    return np.array(scores)


def naive_neco(w, b, train, test, explained_variance):
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd < 1e-30, 1.0, sd)
    xs = (train - mu) / sd
    cov = np.zeros((train.shape[1],) * 2)
    for row in xs:
        cov += np.outer(row, row)
    cov /= len(xs)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    ev = np.maximum(eigvals[order], 0.0)
    total = ev.sum()
    dim = len(ev)
    acc = 0.0
    for i, lam in enumerate(ev):
        acc += lam
        if acc / total >= explained_variance:
            dim = i + 1
            break
    v = eigvecs[:, order[:dim]]
    scores = []
    for x in test:
        z = (x - mu) / sd
        full = math.sqrt(float(z @ z))
        proj = math.sqrt(float((z @ v) @ (z @ v)))
        ratio = 1.0 if full < 1e-30 else proj / full
        scores.append(ratio * max(_naive_logits(w, b, x)))
    return np.array(scores)


def naive_gmm(train, labels, test, n_classes):
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    d = train.shape[1]
    means = naive_class_means(train, labels, n_classes)
    covs, counts = naive_per_class_covariances(train, labels, means, n_classes)
    n = counts.sum()
    comps = []
    for c in range(n_classes):
        inv, eps = _naive_shrunk_inverse(covs[c])
        scale = float(np.trace(covs[c])) / d
        _sign, logdet = np.linalg.slogdet(covs[c] + eps * scale * np.eye(d))
        comps.append((math.log(counts[c] / n), inv, logdet, means[c]))
    scores = []
    for x in test:
        terms = []
        for log_w, inv, logdet, mu in comps:
            v = x - mu
            quad = float(v @ inv @ v)
            terms.append(log_w - 0.5 * (d * math.log(2 * math.pi) + logdet + quad))
        m = max(terms)
        scores.append(m + math.log(sum(math.exp(t - m) for t in terms)))
    return np.array(scores)


def naive_nnguide(w, b, train, test, subset_fraction, k, seed):
    """Mirrors the documented subsampling rule via the shared seeded RNG."""
    train = np.asarray(train, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    size = int(math.ceil(subset_fraction * len(train)))
    idx = CounterRng(seed).choice_no_replace(len(train), size)
    subset = np.array([r / math.sqrt(float(r @ r)) for r in train[idx]])
    scores = []
    for x in test:
        z = x / math.sqrt(float(x @ x))
        sims = sorted((float(z @ s) for s in subset), reverse=True)
        sim_k = sims[k - 1]
        energy = math.log(sum(math.exp(v) for v in _naive_logits(w, b, x)))
        scores.append(energy * sim_k)
    return np.array(scores)


# ---------------------------------------------------------------------------
# Monte-Carlo and metric oracles


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float


def mc_sphere_average(a, n_draws: int, seed: int, chunk: int = 200_000) -> MCEstimate:
    """Monte-Carlo E_u[(u^T A u)^2] over the unit sphere, with standard error."""
    a = np.asarray(a, dtype=np.float64)
    rng = CounterRng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_draws:
        take = min(chunk, n_draws - done)
        u = rng.unit_sphere(take, a.shape[0])
        q = np.einsum("ij,ij->i", u @ a, u)
        vals = q * q
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += take
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0)
    return MCEstimate(value=mean, stderr=math.sqrt(var / n_draws))


def pair_count_auroc(id_scores, ood_scores) -> float:
    """Exact O(n*m) pair counting with half credit for ties."""
    ids = np.asarray(id_scores, dtype=np.float64).ravel()
    oods = np.asarray(ood_scores, dtype=np.float64).ravel()
    num = 0.0
    for o in oods:
        num += float(np.count_nonzero(ids > o)) + 0.5 * float(np.count_nonzero(ids == o))
    return num / (len(ids) * len(oods))
