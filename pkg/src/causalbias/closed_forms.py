"""Closed-form biases for binary models and concurrent-bias breakdowns.

Parameterizations follow one convention throughout: for a binary adjustment
variable ``S`` (a confounder ``Z``, a collider ``W`` or a proxy ``T``)

* ``alpha, beta, gamma, delta`` are ``P(y1|a0,s0), P(y1|a0,s1), P(y1|a1,s0), P(y1|a1,s1)``
* ``epsilon = P(s1)``, ``tau = P(s0|a0)``, ``lam = P(a1)``.

Every parameter set induces a joint table over ``(S, A, Y)`` whose disparities
are the brute-force oracle for the formulas here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import tables as tb
from .errors import ParameterError, StructureError
from .tables import JointTable

_EPS = 1e-12


def _in_unit(name, value, open_=False):
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    if open_ and not 0.0 < value < 1.0:
        raise ParameterError(f"{name} must lie in (0, 1), got {value!r}")
    if not -_EPS <= value <= 1.0 + _EPS:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class _StratumParams:
    alpha: float
    beta: float
    gamma: float
    delta: float
    epsilon: float
    tau: float
    lam: float = 0.5

    _stratum = "Z"

    def __post_init__(self):
        for f in ("alpha", "beta", "gamma", "delta", "tau"):
            _in_unit(f, getattr(self, f))
        _in_unit("epsilon", self.epsilon, open_=True)
        _in_unit("lam", self.lam, open_=True)
        s = self._stratum.lower()
        p = self.s1_given_a1
        if not -_EPS <= p <= 1 + _EPS:
            raise ParameterError(
                f"derived P({s}1|a1) = {p!r} is not a probability; "
                f"epsilon={self.epsilon}, tau={self.tau}, lam={self.lam} are incompatible"
            )

    @property
    def s1_given_a1(self) -> float:
        """``P(s1|a1) = (P(s1) - P(s1|a0) P(a0)) / P(a1)``."""
        return (self.epsilon - (1 - self.tau) * (1 - self.lam)) / self.lam

    @property
    def y_given(self) -> dict[tuple[int, int], float]:
        """``P(y1 | a, s)`` keyed by ``(a, s)``."""
        return {(0, 0): self.alpha, (0, 1): self.beta, (1, 0): self.gamma, (1, 1): self.delta}

    def joint(self, names: tuple[str, str, str] | None = None) -> JointTable:
        """Joint table over ``(S, A, Y)`` by the chain rule ``P(a) P(s|a) P(y|a,s)``."""
        names = names or (self._stratum, "A", "Y")
        s1 = {0: 1 - self.tau, 1: self.s1_given_a1}
        probs = np.zeros((2, 2, 2))
        for s in (0, 1):
            for a in (0, 1):
                pa = self.lam if a else 1 - self.lam
                ps = s1[a] if s else 1 - s1[a]
                py = self.y_given[a, s]
                probs[s, a, 1] = pa * ps * py
                probs[s, a, 0] = pa * ps * (1 - py)
        return JointTable(names, np.clip(probs, 0.0, None))

    @classmethod
    def from_table(cls, table: JointTable, s: str, a: str, y: str):
        """Read the parameters off an observed joint table."""
        cp = tb.cond_prob
        return cls(
            alpha=cp(table, {y: 1}, {a: 0, s: 0}),
            beta=cp(table, {y: 1}, {a: 0, s: 1}),
            gamma=cp(table, {y: 1}, {a: 1, s: 0}),
            delta=cp(table, {y: 1}, {a: 1, s: 1}),
            epsilon=table.prob({s: 1}),
            tau=cp(table, {s: 0}, {a: 0}),
            lam=table.prob({a: 1}),
        )

    @classmethod
    def random(cls, rng: np.random.Generator, lam: float | None = None, margin: float = 0.01):
        """Uniform draw, rejected until the derived conditionals are valid."""
        while True:
            lo, hi = margin, 1 - margin
            alpha, beta, gamma, delta = rng.uniform(0, 1, 4)
            epsilon, tau = rng.uniform(lo, hi, 2)
            lam_ = rng.uniform(lo, hi) if lam is None else lam
            p = (epsilon - (1 - tau) * (1 - lam_)) / lam_
            if margin <= p <= 1 - margin:
                return cls(alpha, beta, gamma, delta, epsilon, tau, lam_)

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


class ConfoundParams(_StratumParams):
    """Confounder ``Z``: common cause of ``A`` and ``Y``."""

    _stratum = "Z"


class SelectionParams(_StratumParams):
    """Collider ``W``: common effect of ``A`` and ``Y`` that the data is conditioned on."""

    _stratum = "W"

    def relabeled(self) -> ConfoundParams:
        return ConfoundParams(**self.as_dict())


# -- confounding -------------------------------------------------------------


def conf_bias_binary(p: ConfoundParams) -> float:
    """Confounding bias ``StatDisp - ACE`` for any ``P(a1)``."""
    a, b, g, d = p.alpha, p.beta, p.gamma, p.delta
    return (1 - p.tau - p.epsilon) * (a - b - g + d + g / p.lam - d / p.lam)


def _require_balanced(p):
    if p.lam != 0.5:
        raise ParameterError(f"balanced form needs P(a1) = 1/2 exactly, got {p.lam!r}")


def conf_bias_binary_balanced(p: ConfoundParams) -> float:
    """Confounding bias when both sensitive groups have probability 1/2."""
    _require_balanced(p)
    return (1 - p.tau - p.epsilon) * (p.alpha - p.beta + p.gamma - p.delta)


# -- selection ---------------------------------------------------------------


def sel_bias_binary(p: SelectionParams) -> float:
    """Selection bias ``StatDisp_W - StatDisp`` for balanced groups."""
    _require_balanced(p)
    return (1 - p.tau - p.epsilon) * (-p.alpha + p.beta - p.gamma + p.delta)


def sel_bias_binary_general(p: SelectionParams) -> float:
    """Selection bias for any ``P(a1)``: the confounding form negated, with W in place of Z."""
    return -conf_bias_binary(p.relabeled())


# -- measurement -------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementParams:
    """Proxy ``T`` of a latent confounder ``Z``; ``P(a1) = 1/2``.

    ``alpha..delta`` are ``P(y1|a,t)``, ``epsilon = P(t1)``, ``tau = P(t0|a0)``,
    and the error mechanism is ``(t1_given_z0, t0_given_z1)``.
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    epsilon: float
    tau: float
    t1_given_z0: float
    t0_given_z1: float

    def __post_init__(self):
        for f in ("alpha", "beta", "gamma", "delta", "tau", "t1_given_z0", "t0_given_z1"):
            _in_unit(f, getattr(self, f))
        _in_unit("epsilon", self.epsilon, open_=True)
        p = self.t1_given_a1
        if not -_EPS <= p <= 1 + _EPS:
            raise ParameterError(f"derived P(t1|a1) = {p!r} is not a probability")

    @property
    def error_mech(self) -> tuple[float, float]:
        return (self.t1_given_z0, self.t0_given_z1)

    @property
    def t1_given_a1(self) -> float:
        return 2 * self.epsilon + self.tau - 1

    def observed_joint(self, names=("A", "T", "Y")) -> JointTable:
        """Joint over ``(A, T, Y)`` implied by the parameters."""
        as_conf = ConfoundParams(self.alpha, self.beta, self.gamma, self.delta, self.epsilon, self.tau, 0.5)
        m = as_conf.joint(("T", "A", "Y")).marginal(["A", "T", "Y"])
        return JointTable(tuple(names), m.probs)

    @classmethod
    def from_table(cls, table: JointTable, error_mech, a="A", t="T", y="Y"):
        c = ConfoundParams.from_table(table, t, a, y)
        return cls(c.alpha, c.beta, c.gamma, c.delta, c.epsilon, c.tau, *error_mech)

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def meas_terms(p: MeasurementParams) -> dict[str, float]:
    """Intermediate quantities ``Q, R, Phi, Psi`` of the closed form."""
    eps, tau = p.epsilon, p.tau
    e0, e1 = p.t1_given_z0, p.t0_given_z1

    def div(num, den, term):
        if abs(den) < _EPS:
            raise ParameterError(f"singular denominator in term {term}")
        return num / den

    q = div(1 - div(e1, eps, "Q"), 1 - div(e1, 2 * eps, "Q"), "Q")
    r = div(1 - div(e0, 1 - eps, "R"), 1 - div(e0, 2 - 2 * eps, "R"), "R")
    phi = div(eps + tau / 2 - 1, eps + tau / 2 - 0.5, "Phi")
    psi = div(1 - tau, tau, "Psi")
    return {"Q": q, "R": r, "Phi": phi, "Psi": psi}


def meas_bias_binary(p: MeasurementParams) -> float:
    """Measurement bias as the Q-R closed form in ``P(T|Z)``.

    Vanishes for a perfect proxy and equals ``eps(delta-beta) + (1-eps)(gamma-alpha)``
    when ``Q = R = 0``. Away from those points it does not agree with
    ``StatDisp_T - StatDisp_Z`` on enumerated models;
    :func:`meas_bias_binary_restored` is the exact counterpart.
    """
    a, b, g, d, eps = p.alpha, p.beta, p.gamma, p.delta, p.epsilon
    e0, e1 = p.error_mech
    t = meas_terms(p)
    q, r, phi, psi = t["Q"], t["R"], t["Phi"], t["Psi"]
    if abs(phi) < _EPS or abs(psi) < _EPS:
        raise ParameterError("singular denominator in term Phi^-1 or Psi^-1")
    return (
        eps * (d - b)
        + (1 - eps) * (g - a)
        - eps * (d - b + 4 * e0 * (b - d + g * phi + g * psi)) * q
        - (1 - eps) * (g - a + 4 * e1 * (a - g + d + d / psi + b / phi)) * r
    )


def effect_restoration_do(
    table: JointTable,
    error_mech: tuple[float, float],
    a_value: int,
    a: str = "A",
    t: str = "T",
    y: str = "Y",
) -> float:
    """``P(y1 | do(a))`` from the observed ``(A, T, Y)`` joint and ``P(T|Z)``.

    Two terms, one per proxy level::

        P(y1,a,t)/P(a|t) * (1 - e_t/P(t|a,y1)) * (1 - e_t/P(t)) / (1 - e_t/P(t|a)) / (1 - e0 - e1)

    with ``e_1 = P(t1|z0)`` and ``e_0 = P(t0|z1)``. This is the backdoor
    adjustment on ``Z`` after inverting the misclassification matrix.
    """
    e0, e1 = error_mech
    for name, e in (("P(t1|z0)", e0), ("P(t0|z1)", e1)):
        _in_unit(name, e)
    k = 1 - e0 - e1
    if abs(k) < _EPS:
        raise ParameterError("singular error mechanism: P(t1|z0) + P(t0|z1) = 1 (proxy independent of Z)")

    def need(value, term):
        if value <= _EPS:
            raise ParameterError(f"zero denominator in effect restoration: {term} = 0")
        return value

    pa = need(table.prob({a: a_value}), f"P({a}={a_value})")
    pay1 = table.prob({a: a_value, y: 1})
    total = 0.0
    for t_value, e in ((1, e0), (0, e1)):
        pt = need(table.prob({t: t_value}), f"P({t}={t_value})")
        pat = need(table.prob({a: a_value, t: t_value}), f"P({a}={a_value},{t}={t_value})")
        py_at = table.prob({y: 1, a: a_value, t: t_value})
        a_given_t = pat / pt
        t_given_a = pat / pa
        # P(y1,a,t) * (1 - e/P(t|a,y1)) written without dividing by P(t|a,y1).
        numer = py_at - e * pay1
        denom = 1 - e / t_given_a
        if abs(denom) < _EPS:
            raise ParameterError(f"zero denominator in effect restoration: 1 - e/P({t}={t_value}|{a}={a_value}) = 0")
        factor = (1 - e / pt) / denom
        total += numer / a_given_t * factor / k
    return float(total)


def meas_bias_binary_restored(p: MeasurementParams) -> float:
    """Exact measurement bias ``StatDisp_T - StatDisp_Z`` via effect restoration."""
    table = p.observed_joint()
    sd_t = p.epsilon * (p.delta - p.beta) + (1 - p.epsilon) * (p.gamma - p.alpha)
    ace = effect_restoration_do(table, p.error_mech, 1) - effect_restoration_do(table, p.error_mech, 0)
    return sd_t - ace


# -- interaction -------------------------------------------------------------


def int_bias_intersectional(table: JointTable, y: str, a: str, b: str) -> float:
    """Bias of summing single-attribute effects for the joint group: the interaction term."""
    return tb.interaction_term(table, y, a, b)


def int_bias_intersectional_by_disparity(table: JointTable, y: str, a: str, b: str) -> float:
    """Same quantity computed as joint-group disparity minus both interaction-free effects."""
    return tb.joint_stat_disp(table, y, a, b) - (
        tb.sd_no_interaction(table, y, a, b, "A") + tb.sd_no_interaction(table, y, a, b, "B")
    )


def int_bias_individual(table: JointTable, y: str, a: str, b: str, target: str = "A",
                        tol: float | None = None) -> float:
    """``P(b1) * Interaction`` for target A, ``P(a1) * Interaction`` for target B.

    Needs ``A`` independent of ``B``. The default tolerance on
    ``|P(a,b) - P(a)P(b)|`` is 1e-9 for parametric tables and ``3/sqrt(n)``
    for tables estimated from ``n`` samples.
    """
    if tol is None:
        tol = 1e-9 if table.sample_count is None else 3.0 / math.sqrt(table.sample_count)
    tb.check_independent(table, a, b, tol)
    other = b if target.upper() == "A" else a
    weight = table.prob({other: 1})
    if weight == 0.0:
        # The interaction is undefined without both levels of the other
        # attribute, but its weight is zero.
        return 0.0
    return weight * tb.interaction_term(table, y, a, b)


# -- concurrent biases -------------------------------------------------------


@dataclass(frozen=True)
class ConcurrentSpec:
    outcome: str
    sensitive: str
    confounders: tuple[str, ...] = ()
    colliders: tuple[str, ...] = ()
    proxies: tuple[str, ...] = ()
    second_sensitive: str | None = None


def concurrent_bias(table: JointTable, spec: ConcurrentSpec) -> dict[str, float]:
    """Labelled components of the biases present in ``spec``.

    Keys appear only when the variables they need are named in ``spec``:

    ``conf``            StatDisp - StatDisp_Z
    ``sel``             StatDisp_W - StatDisp
    ``meas``            StatDisp_T - StatDisp_Z
    ``conf+sel``        StatDisp_W - StatDisp_Z
    ``conf+meas``       StatDisp - StatDisp_T  (equals conf - meas)
    ``sel+meas``        StatDisp_TW - StatDisp_Z
    ``conf+sel+meas``   StatDisp_TW - StatDisp_Z

    With a second sensitive attribute ``B`` and confounders, the confounding
    bias of ``A`` is split into ``conf.sd_no_int`` and ``conf.interaction``
    (exact when ``B`` is independent of ``A`` and ``Z``), and the confounding
    bias of the joint group ``joint_conf`` into ``joint_conf.sd_no_int``,
    ``joint_conf.interaction`` and ``joint_conf.sd_no_int_b``; the last term
    is zero unless ``Z`` also confounds ``B`` and ``Y``. Without confounders,
    ``int.*`` entries give the interaction biases.
    """
    y, a = spec.outcome, spec.sensitive
    z, w, t = list(spec.confounders), list(spec.colliders), list(spec.proxies)
    b = spec.second_sensitive
    named = [y, a, *z, *w, *t] + ([b] if b else [])
    missing = [v for v in named if v not in table.variables]
    if missing:
        raise StructureError(f"variables {missing} are not in the table")

    sd = tb.stat_disp(table, y, a)
    out = {"statdisp": sd}
    sd_z = tb.stat_disp_adjusted(table, y, a, z) if z else None
    sd_w = tb.stat_disp_adjusted(table, y, a, w) if w else None
    sd_t = tb.stat_disp_adjusted(table, y, a, t) if t else None
    if z:
        out["conf"] = sd - sd_z
    if w:
        out["sel"] = sd_w - sd
    if t and z:
        out["meas"] = sd_t - sd_z
    if z and w:
        out["conf+sel"] = sd_w - sd_z
    if z and t:
        out["conf+meas"] = sd - sd_t
    if z and w and t:
        sd_tw = tb.stat_disp_adjusted(table, y, a, t + w)
        out["sel+meas"] = sd_tw - sd_z
        out["conf+sel+meas"] = sd_tw - sd_z
    if b:
        inter = tb.interaction_term(table, y, a, b)
        if z:
            sda = tb.sd_no_interaction(table, y, a, b, "A")
            sda_z = tb.sd_no_interaction_adjusted(table, y, a, b, z, "A")
            sdb = tb.sd_no_interaction(table, y, a, b, "B")
            sdb_z = tb.sd_no_interaction_adjusted(table, y, a, b, z, "B")
            inter_z = tb.interaction_adjusted(table, y, a, b, z)
            out["conf.sd_no_int"] = sda - sda_z
            out["conf.interaction"] = table.prob({b: 1}) * (inter - inter_z)
            out["joint_conf"] = tb.joint_stat_disp(table, y, a, b) - tb.joint_stat_disp(table, y, a, b, z)
            out["joint_conf.sd_no_int"] = sda - sda_z
            out["joint_conf.interaction"] = inter - inter_z
            out["joint_conf.sd_no_int_b"] = sdb - sdb_z
        else:
            out["int.intersectional"] = inter
            out["int.individual_A"] = table.prob({b: 1}) * inter
            out["int.individual_B"] = table.prob({a: 1}) * inter
    return out
