"""Exact probability computations over joint tables of binary variables.

A :class:`JointTable` stores ``P(v_1, ..., v_k)`` densely as an array with one
axis of length two per variable, so cell ``(i_1, ..., i_k)`` is the
probability of the assignment ``v_j = i_j``. Flattening in C order gives the
lexicographic layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, PositivityError

MAX_VARIABLES = 20
_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class JointTable:
    variables: tuple[str, ...]
    probs: np.ndarray
    sample_count: int | None = None

    def __post_init__(self):
        variables = tuple(self.variables)
        if len(set(variables)) != len(variables):
            raise InputError(f"duplicate variable names in {variables}")
        if len(variables) > MAX_VARIABLES:
            raise InputError(f"at most {MAX_VARIABLES} variables are supported")
        probs = np.asarray(self.probs, dtype=float).reshape((2,) * len(variables))
        if np.any(probs < 0):
            raise InputError("negative probability in joint table")
        if abs(probs.sum() - 1.0) > _SUM_TOL:
            raise InputError(f"joint table sums to {probs.sum()!r}, not 1")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "probs", probs)

    @property
    def source(self) -> str:
        return "parametric" if self.sample_count is None else f"estimated({self.sample_count})"

    def axis(self, var: str) -> int:
        try:
            return self.variables.index(var)
        except ValueError:
            raise KeyError(f"variable {var!r} not in table {self.variables}") from None

    def marginal(self, keep: Iterable[str]) -> "JointTable":
        keep = list(keep)
        axes = [self.axis(v) for v in keep]
        drop = tuple(i for i in range(len(self.variables)) if i not in axes)
        m = self.probs.sum(axis=drop)
        # sum() leaves remaining axes in original order; reorder to `keep`.
        remaining = sorted(axes)
        m = np.transpose(m, [remaining.index(a) for a in axes]) if keep else m
        return JointTable(tuple(keep), m, self.sample_count)

    def prob(self, assignment: Mapping[str, int]) -> float:
        index = [slice(None)] * len(self.variables)
        for var, val in assignment.items():
            if val not in (0, 1):
                raise InputError(f"binary value expected for {var}, got {val!r}")
            index[self.axis(var)] = val
        return float(self.probs[tuple(index)].sum())

    def flat(self) -> np.ndarray:
        return self.probs.reshape(-1)

    def __repr__(self):
        return f"JointTable(variables={self.variables}, source={self.source})"


def from_cells(variables: Sequence[str], cells: Mapping[tuple, float]) -> JointTable:
    """Build a table from ``{assignment tuple: probability}``; missing cells are 0."""
    probs = np.zeros((2,) * len(variables))
    for key, p in cells.items():
        probs[tuple(key)] = p
    return JointTable(tuple(variables), probs)


def from_samples(rows, variables: Sequence[str] | None = None, pseudo_count: float = 0.0) -> JointTable:
    """Maximum-likelihood joint table from rows of 0/1 values.

    ``rows`` is a 2-D array-like (or a DataFrame, whose columns are used when
    ``variables`` is omitted). ``pseudo_count`` adds that many fictitious
    observations to every cell; the default 0 keeps the raw frequencies.
    """
    if variables is None:
        if not hasattr(rows, "columns"):
            raise InputError("variables must be given for array input")
        variables = list(rows.columns)
    elif hasattr(rows, "columns"):
        rows = rows[list(variables)]
    data = np.asarray(rows)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InputError("from_samples needs at least one row")
    if data.shape[1] != len(variables):
        raise InputError(f"{data.shape[1]} columns for {len(variables)} variables")
    bad = ~np.isin(data, (0, 1))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise InputError(f"non-binary value {data[r, c]!r} in column {variables[c]} (row {r})")
    k = len(variables)
    codes = data.astype(np.int64) @ (1 << np.arange(k - 1, -1, -1, dtype=np.int64))
    counts = np.bincount(codes, minlength=2**k).astype(float) + pseudo_count
    return JointTable(tuple(variables), counts / counts.sum(), sample_count=int(data.shape[0]))


def _assignments(variables: Sequence[str]):
    for values in itertools.product((0, 1), repeat=len(variables)):
        yield dict(zip(variables, values))


def _describe(assignment: Mapping[str, int]) -> str:
    return ", ".join(f"{k}={v}" for k, v in assignment.items()) or "<empty>"


def cond_prob(table: JointTable, event: Mapping[str, int], given: Mapping[str, int] | None = None) -> float:
    """``P(event | given)``."""
    given = dict(given or {})
    overlap = set(event) & set(given)
    if overlap:
        raise InputError(f"event and condition share variables {sorted(overlap)}")
    denom = table.prob(given)
    if denom <= 0:
        raise PositivityError(f"conditioning on null event: {_describe(given)}")
    return table.prob({**event, **given}) / denom


def _p1(table, y, given):
    return cond_prob(table, {y: 1}, given)


def stat_disp(table: JointTable, y: str, a: str) -> float:
    """``P(y=1 | a=1) - P(y=1 | a=0)``."""
    for v in (0, 1):
        if table.prob({a: v}) <= 0:
            raise PositivityError(f"degenerate sensitive variable: P({a}={v}) = 0")
    return _p1(table, y, {a: 1}) - _p1(table, y, {a: 0})


def stat_disp_adjusted(table: JointTable, y: str, a: str, adj: Iterable[str] = ()) -> float:
    """Disparity averaged over the strata of ``adj``, weighted by ``P(adj)``.

    With a valid backdoor set this is the average causal effect of ``a``.
    Strata with zero probability are skipped; a stratum with positive mass
    that lacks either sensitive group raises :class:`PositivityError`.
    """
    adj = list(adj)
    if not adj:
        return stat_disp(table, y, a)
    total = 0.0
    for s in _assignments(adj):
        ps = table.prob(s)
        if ps <= 0:
            continue
        for v in (0, 1):
            if table.prob({a: v, **s}) <= 0:
                raise PositivityError(f"positivity violated in stratum {_describe(s)}: P({a}={v}, stratum) = 0")
        total += (_p1(table, y, {a: 1, **s}) - _p1(table, y, {a: 0, **s})) * ps
    return total


def _check_cells(table, a, b, extra=None):
    extra = extra or {}
    for va, vb in itertools.product((0, 1), repeat=2):
        if table.prob({a: va, b: vb, **extra}) <= 0:
            raise PositivityError(f"positivity violated: P({_describe({a: va, b: vb, **extra})}) = 0")


def interaction_term(table: JointTable, y: str, a: str, b: str, given: Mapping[str, int] | None = None) -> float:
    """Additive interaction ``P(y1|a1,b1) - P(y1|a0,b1) - P(y1|a1,b0) + P(y1|a0,b0)``."""
    g = dict(given or {})
    _check_cells(table, a, b, g)
    p = {(va, vb): _p1(table, y, {a: va, b: vb, **g}) for va in (0, 1) for vb in (0, 1)}
    return p[1, 1] - p[0, 1] - p[1, 0] + p[0, 0]


def interaction_adjusted(table: JointTable, y: str, a: str, b: str, z: str | Iterable[str]) -> float:
    """Interaction term averaged over the strata of ``z`` with weights ``P(z)``."""
    zs = [z] if isinstance(z, str) else list(z)
    total = 0.0
    for s in _assignments(zs):
        ps = table.prob(s)
        if ps > 0:
            total += interaction_term(table, y, a, b, s) * ps
    return total


def sd_no_interaction(table: JointTable, y: str, a: str, b: str, target: str = "A",
                      given: Mapping[str, int] | None = None) -> float:
    """Effect of one attribute with the other held at level 0.

    ``target="A"``: ``P(y1|a1,b0) - P(y1|a0,b0)``; ``target="B"``:
    ``P(y1|a0,b1) - P(y1|a0,b0)``.
    """
    g = dict(given or {})
    if target.upper() == "A":
        hi, lo = {a: 1, b: 0}, {a: 0, b: 0}
    elif target.upper() == "B":
        hi, lo = {a: 0, b: 1}, {a: 0, b: 0}
    else:
        raise ValueError("target must be 'A' or 'B'")
    for cell in (hi, lo):
        if table.prob({**cell, **g}) <= 0:
            raise PositivityError(f"positivity violated: P({_describe({**cell, **g})}) = 0")
    return _p1(table, y, {**hi, **g}) - _p1(table, y, {**lo, **g})


def sd_no_interaction_adjusted(table: JointTable, y: str, a: str, b: str, z: str | Iterable[str],
                               target: str = "A") -> float:
    """:func:`sd_no_interaction` averaged over the strata of ``z``."""
    zs = [z] if isinstance(z, str) else list(z)
    total = 0.0
    for s in _assignments(zs):
        ps = table.prob(s)
        if ps > 0:
            total += sd_no_interaction(table, y, a, b, target, s) * ps
    return total


def joint_stat_disp(table: JointTable, y: str, a: str, b: str, adj: Iterable[str] = ()) -> float:
    """Disparity between the joint groups (a1, b1) and (a0, b0), optionally adjusted."""
    adj = list(adj)
    total = 0.0
    for s in _assignments(adj):
        ps = table.prob(s)
        if ps <= 0:
            continue
        for cell in ({a: 1, b: 1}, {a: 0, b: 0}):
            if table.prob({**cell, **s}) <= 0:
                raise PositivityError(f"positivity violated: P({_describe({**cell, **s})}) = 0")
        total += (_p1(table, y, {a: 1, b: 1, **s}) - _p1(table, y, {a: 0, b: 0, **s})) * ps
    return total


def joint_group_table(table: JointTable, a: str, b: str, name: str = "G") -> JointTable:
    """Restrict to the groups (a1, b1) and (a0, b0) and relabel them as ``name`` = 1 / 0.

    ``stat_disp(joint_group_table(t, a, b), y, name)`` is the joint-group disparity.
    """
    ia, ib = table.axis(a), table.axis(b)
    probs = np.moveaxis(table.probs, (ia, ib), (0, 1))
    rest = [v for v in table.variables if v not in (a, b)]
    sub = np.stack([probs[0, 0], probs[1, 1]])
    mass = sub.sum()
    if mass <= 0:
        raise PositivityError(f"both joint groups of {a}, {b} are empty")
    return JointTable((name, *rest), sub / mass, table.sample_count)


def check_independent(table: JointTable, a: str, b: str, tol: float = 1e-9) -> float:
    """Return ``max |P(a,b) - P(a)P(b)|``; raise if it exceeds ``tol``."""
    gap = max(
        abs(table.prob({a: va, b: vb}) - table.prob({a: va}) * table.prob({b: vb}))
        for va in (0, 1)
        for vb in (0, 1)
    )
    if gap > tol:
        raise InputError(
            f"{a} and {b} are dependent (max |P({a},{b}) - P({a})P({b})| = {gap:.3g} > {tol:g}); "
            "the individual interaction decomposition assumes independent sensitive attributes"
        )
    return gap
