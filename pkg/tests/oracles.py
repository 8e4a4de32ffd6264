"""Independent reference implementations used only by the tests.

None of these import the code paths they check.
"""

import math

import numpy as np

SHARE, MUTUAL, SINGLE, MISS, VOID = range(5)


# ------------------------------------------------------------------ geometry

def ray_hits_by_sampling(origin, angle, center, radius, length=1.6, step=2e-4):
    """Walk the gaze ray in small steps and report whether any sample lands in the disc."""
    t = np.arange(0.0, length, step)
    px = origin[0] + t * math.cos(angle)
    py = origin[1] + t * math.sin(angle)
    d2 = (px - center[0]) ** 2 + (py - center[1]) ** 2
    return bool(np.any(d2 <= radius * radius))


def brute_force_label(p_hits_a, a_hits_p, p_hits_obj, a_hits_obj):
    """Five-class label from precomputed hit flags."""
    if p_hits_a and a_hits_p:
        return MUTUAL
    for hp, ha in zip(p_hits_obj, a_hits_obj):
        if hp and ha:
            return SHARE
    if p_hits_a:
        return SINGLE
    if a_hits_p:
        return MISS
    return VOID


# ----------------------------------------------------------------- attention

def dense_attention(queries, keys, Wq, bq, Wk, bk, Wv, bv, Wo, bo, heads, mask=None):
    """Loop-based multi-head attention for one sample; weights follow the
    ``y = x @ W.T + b`` convention. Returns ``(outputs, weights[h][i][j])``."""
    tq, tk = len(queries), len(keys)
    dim = Wq.shape[0]
    dh = dim // heads
    Q = [[sum(Wq[o, i] * queries[t][i] for i in range(len(queries[t]))) + bq[o]
          for o in range(dim)] for t in range(tq)]
    K = [[sum(Wk[o, i] * keys[t][i] for i in range(len(keys[t]))) + bk[o]
          for o in range(dim)] for t in range(tk)]
    V = [[sum(Wv[o, i] * keys[t][i] for i in range(len(keys[t]))) + bv[o]
          for o in range(dim)] for t in range(tk)]
    weights = [[[0.0] * tk for _ in range(tq)] for _ in range(heads)]
    concat = [[0.0] * dim for _ in range(tq)]
    for h in range(heads):
        sl = range(h * dh, (h + 1) * dh)
        for i in range(tq):
            scores = []
            for j in range(tk):
                if mask is not None and not mask[j]:
                    scores.append(None)
                    continue
                scores.append(sum(Q[i][c] * K[j][c] for c in sl) / math.sqrt(dh))
            valid = [s for s in scores if s is not None]
            m = max(valid)
            ex = [0.0 if s is None else math.exp(s - m) for s in scores]
            z = sum(ex)
            for j in range(tk):
                weights[h][i][j] = ex[j] / z
            for c in sl:
                concat[i][c] = sum(weights[h][i][j] * V[j][c] for j in range(tk))
    out = [[sum(Wo[o, c] * concat[i][c] for c in range(dim)) + bo[o] for o in range(dim)]
           for i in range(tq)]
    return np.array(out), np.array(weights)


# ------------------------------------------------------------------- metrics

def brute_f1(preds, labels, n_classes):
    out = []
    for c in range(n_classes):
        tp = fp = fn = 0
        for p, y in zip(preds, labels):
            if p == c and y == c:
                tp += 1
            elif p == c:
                fp += 1
            elif y == c:
                fn += 1
        out.append(0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
    return out


def brute_accuracy(preds, labels):
    return sum(1 for p, y in zip(preds, labels) if p == y) / len(labels)


def brute_average_precision(scores, labels):
    """Precision at each positive's rank, averaged over positives; ties by input order."""
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(1 for y in labels if y)
    total, hits = 0.0, 0
    for rank, i in enumerate(ranked, start=1):
        if labels[i]:
            hits += 1
            total += hits / rank
    return total / n_pos


# ---------------------------------------------------------------- gradients

def central_difference(f, x, index, eps=2e-6):
    """Central difference of scalar ``f()`` w.r.t. one element of array ``x`` (in place).

    At float64 a step near cbrt(machine eps) balances round-off against
    truncation; much above 1e-5 the step starts crossing ReLU kinks.
    """
    orig = x[index].item()
    x[index] = orig + eps
    fp = f()
    x[index] = orig - eps
    fm = f()
    x[index] = orig
    return (fp - fm) / (2 * eps)
