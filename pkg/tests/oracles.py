"""Independent reference implementations used as test oracles.

Written with plain Python loops and no code shared with the package, so a
bug in a fast path cannot hide in its own check.
"""
import math


# --- metrics ------------------------------------------------------------------

def brute_det(targets, nontargets):
    """Count errors at every distinct score plus -inf/+inf."""
    thresholds = [-math.inf] + sorted(set(targets) | set(nontargets)) + [math.inf]
    points = []
    for thr in thresholds:
        miss = sum(1 for x in targets if x < thr)
        fa = sum(1 for x in nontargets if x >= thr)
        points.append((thr, miss / len(targets), fa / len(nontargets)))
    return points


def brute_eer(points):
    for (_, ma, fa), (_, mb, fb) in zip(points, points[1:]):
        if ma == fa:
            return ma
        if ma < fa and mb >= fb:
            if mb == fb:
                return mb
            # crossing of the two straight segments
            t = (fa - ma) / ((mb - ma) - (fb - fa))
            return ma + t * (mb - ma)
    _, m, f = points[-1]
    assert m == f
    return m


def brute_min_dcf(points, p_target=0.01, c_miss=10.0, c_fa=1.0):
    best = min(c_miss * m * p_target + c_fa * f * (1 - p_target) for _, m, f in points)
    return best / min(c_miss * p_target, c_fa * (1 - p_target))


# --- vectors ------------------------------------------------------------------

def scalar_cosine(a, b):
    """Dot product summed left to right, as Python floats."""
    dot = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        dot += x * y
    for x in a:
        na += x * x
    for y in b:
        nb += y * y
    c = dot / (math.sqrt(na) * math.sqrt(nb))
    return min(1.0, max(-1.0, c))


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def mean_of_units(vectors):
    units = [unit(v) for v in vectors]
    d = len(units[0])
    return [sum(u[i] for u in units) / len(units) for i in range(d)]


def group_by_mean(vectors_by_utt, speaker_of):
    groups = {}
    for utt, spk in speaker_of.items():
        groups.setdefault(spk, []).append(vectors_by_utt[utt])
    return {spk: mean_of_units(vs) for spk, vs in groups.items()}


def plain_cosine(a, b):
    return sum(x * y for x, y in zip(a, b)) / (
        math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def brute_asnorm(raw, model_vec, test_vec, centroids, top_n):
    """Recompute and fully sort every cohort score for one trial."""
    enr = sorted((plain_cosine(model_vec, c) for c in centroids), reverse=True)[:top_n]
    tst = sorted((plain_cosine(test_vec, c) for c in centroids), reverse=True)[:top_n]

    def stats(xs):
        mu = sum(xs) / len(xs)
        return mu, math.sqrt(sum((x - mu) ** 2 for x in xs) / len(xs))

    mu_e, sd_e = stats(enr)
    mu_t, sd_t = stats(tst)
    return 0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)


# --- pooling ------------------------------------------------------------------

def two_pass_stats(frames):
    t = len(frames)
    f = len(frames[0])
    means = [sum(frames[i][j] for i in range(t)) / t for j in range(f)]
    stds = [math.sqrt(sum((frames[i][j] - means[j]) ** 2 for i in range(t)) / t) for j in range(f)]
    return means + stds


def naive_attentive_pool(frames, w1, b1, w2, b2):
    scores = [sum(w * h for w, h in zip(w1, frame)) + b1 for frame in frames]
    exps = [math.exp(e) for e in scores]
    z = sum(exps)
    alphas = [e / z for e in exps]
    out = [0.0] * len(b2)
    for alpha, frame in zip(alphas, frames):
        for d in range(len(b2)):
            out[d] += alpha * (sum(w * h for w, h in zip(w2[d], frame)) + b2[d])
    return out, alphas
