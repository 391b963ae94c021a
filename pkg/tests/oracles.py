"""Slow reference implementations used to check the fast code paths."""
import numpy as np


def wauc_double_loop(train, test):
    """O(n^2) weighted AUC straight from the definition."""
    train = [float(x) for x in train]
    test = [float(x) for x in test]
    n_tr, n_te = len(train), len(test)
    total = 0.0
    for s in train:
        below = sum(1 for t in train if t < s)
        ties = sum(1 for t in train if t == s)
        cdf = (below + 0.5 * ties) / n_tr
        above = sum(1 for t in test if t > s)
        tie_te = sum(1 for t in test if t == s)
        contamination = (above + 0.5 * tie_te) / n_te
        total += contamination * cdf * cdf
    return total / n_tr


def auc_double_loop(neg, pos):
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def energy_double_loop(x, y):
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    d = lambda a, b: float(np.sqrt(((a - b) ** 2).sum()))
    n, m = len(x), len(y)
    xy = sum(d(a, b) for a in x for b in y)
    xx = sum(d(a, b) for a in x for b in x)
    yy = sum(d(a, b) for a in y for b in y)
    return 2 * xy / (n * m) - xx / n**2 - yy / m**2
