"""Brute-force reference computations that share no code with the package.

Joints are plain dicts from assignment tuples to probabilities; every
quantity is a direct sum over those tuples.
"""

import itertools

import numpy as np


def chain_rule(order, parents, cpts):
    """``{assignment tuple: prob}`` over ``order`` from CPTs of ``P(v=1 | parents)``."""
    joint = {}
    for values in itertools.product((0, 1), repeat=len(order)):
        a = dict(zip(order, values))
        p = 1.0
        for v in order:
            p1 = cpts[v][tuple(a[q] for q in parents.get(v, ()))]
            p *= p1 if a[v] else 1 - p1
        joint[values] = p
    return joint


def random_cpts(rng, order, parents, low=0.05, high=0.95):
    cpts = {}
    for v in order:
        ps = parents.get(v, ())
        cpts[v] = {k: float(rng.uniform(low, high)) for k in itertools.product((0, 1), repeat=len(ps))}
    return cpts


def prob(joint, order, **fixed):
    idx = {v: i for i, v in enumerate(order)}
    return sum(p for k, p in joint.items() if all(k[idx[v]] == val for v, val in fixed.items()))


def cond(joint, order, event, given):
    return prob(joint, order, **event, **given) / prob(joint, order, **given)


def sd(joint, order, y, a, adj=()):
    """Adjusted disparity by explicit stratum loop."""
    total = 0.0
    for s in itertools.product((0, 1), repeat=len(adj)):
        st = dict(zip(adj, s))
        ps = prob(joint, order, **st)
        if ps == 0:
            continue
        total += ps * (cond(joint, order, {y: 1}, {a: 1, **st}) - cond(joint, order, {y: 1}, {a: 0, **st}))
    return total


def interaction(joint, order, y, a, b, given=None):
    g = given or {}
    p = lambda va, vb: cond(joint, order, {y: 1}, {a: va, b: vb, **g})
    return p(1, 1) - p(0, 1) - p(1, 0) + p(0, 0)


def to_array(joint, order):
    arr = np.zeros((2,) * len(order))
    for k, p in joint.items():
        arr[k] = p
    return arr


def ols(x, y):
    """Least squares with intercept through ``numpy.linalg.lstsq``."""
    design = np.column_stack([np.ones(len(y)), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def implied_cov(order, coef, noise):
    """``(I - B)^-1 diag(noise) (I - B)^-T`` for edges ``coef[(src, dst)]``."""
    k = len(order)
    pos = {v: i for i, v in enumerate(order)}
    b = np.zeros((k, k))
    for (s, d), c in coef.items():
        b[pos[d], pos[s]] = c
    inv = np.linalg.inv(np.eye(k) - b)
    return inv @ np.diag([noise.get(v, 1.0) for v in order]) @ inv.T
