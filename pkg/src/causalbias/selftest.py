"""End-to-end oracle batteries behind ``causalbias selftest``."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import closed_forms as cf
from . import linear as lin
from . import tables as tb
from .scm import BinaryNetwork, ScmSpec, linear_implied_cov, random_network, simulate


@dataclass
class BatteryResult:
    name: str
    draws: int
    max_dev: float
    tol: float
    expected_failure: bool = False

    @property
    def passed(self) -> bool:
        return self.max_dev < self.tol

    @property
    def status(self) -> str:
        if self.expected_failure:
            return "XPASS" if self.passed else "XFAIL"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return f"{self.status:5s} {self.name:34s} draws={self.draws:<7d} max_dev={self.max_dev:.3e} tol={self.tol:.0e}"


def _sd(t, adj=()):
    return tb.stat_disp_adjusted(t, "Y", "A", adj)


def _conf(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        p = cf.ConfoundParams.random(rng)
        t = p.joint()
        dev = max(dev, abs(sign * cf.conf_bias_binary(p) - (_sd(t) - _sd(t, ["Z"]))))
    return dev


def _conf_balanced(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        p = cf.ConfoundParams.random(rng, lam=0.5)
        dev = max(dev, abs(sign * cf.conf_bias_binary_balanced(p) - cf.conf_bias_binary(p)))
    return dev


def _sel(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        p = cf.SelectionParams.random(rng, lam=0.5)
        t = p.joint()
        dev = max(dev, abs(sign * cf.sel_bias_binary(p) - (_sd(t, ["W"]) - _sd(t))))
    return dev


def measurement_network(rng) -> tuple[BinaryNetwork, tuple[float, float]]:
    """Random (Z, A, T, Y) model with P(a1) = 1/2 and a non-degenerate proxy."""
    while True:
        pz = rng.uniform(0.05, 0.95)
        a_z0 = rng.uniform(0.05, 0.95)
        a_z1 = (0.5 - (1 - pz) * a_z0) / pz
        if 0.01 < a_z1 < 0.99:
            break
    e0, e1 = rng.uniform(0.0, 0.4, 2)
    py = rng.uniform(0.05, 0.95, 4)
    net = BinaryNetwork([
        ("Z", (), {(): pz}),
        ("A", ("Z",), {(0,): a_z0, (1,): a_z1}),
        ("T", ("Z",), {(0,): e0, (1,): 1 - e1}),
        ("Y", ("Z", "A"), {(0, 0): py[0], (0, 1): py[1], (1, 0): py[2], (1, 1): py[3]}),
    ])
    return net, (float(e0), float(e1))


def _meas_restored(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        net, em = measurement_network(rng)
        t = net.enumerate()
        sub = t.marginal(["A", "T", "Y"])
        ace = cf.effect_restoration_do(sub, em, 1) - cf.effect_restoration_do(sub, em, 0)
        closed = _sd(t, ["T"]) - ace
        dev = max(dev, abs(sign * closed - (_sd(t, ["T"]) - _sd(t, ["Z"]))))
    return dev


def _meas_qr_form(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        net, em = measurement_network(rng)
        t = net.enumerate()
        p = cf.MeasurementParams.from_table(t.marginal(["A", "T", "Y"]), em)
        dev = max(dev, abs(sign * cf.meas_bias_binary(p) - (_sd(t, ["T"]) - _sd(t, ["Z"]))))
    return dev


def _meas_boundary(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        c = cf.ConfoundParams.random(rng, lam=0.5)
        base = dict(alpha=c.alpha, beta=c.beta, gamma=c.gamma, delta=c.delta, epsilon=c.epsilon, tau=c.tau)
        perfect = cf.MeasurementParams(**base, t1_given_z0=0.0, t0_given_z1=0.0)
        dev = max(dev, abs(sign * cf.meas_bias_binary(perfect)))
        useless = cf.MeasurementParams(**base, t1_given_z0=1 - c.epsilon, t0_given_z1=c.epsilon)
        top = c.epsilon * (c.delta - c.beta) + (1 - c.epsilon) * (c.gamma - c.alpha)
        dev = max(dev, abs(sign * cf.meas_bias_binary(useless) - top))
    return dev


def _int(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        t = tb.JointTable(("A", "B", "Y"), rng.dirichlet(np.ones(8)))
        dev = max(dev, abs(sign * cf.int_bias_intersectional(t, "Y", "A", "B")
                           - cf.int_bias_intersectional_by_disparity(t, "Y", "A", "B")))
        t = random_network(rng, ["A", "B", "Y"], {"Y": ["A", "B"]}).enumerate()
        ind = cf.int_bias_individual(t, "Y", "A", "B", "A")
        dev = max(dev, abs(sign * ind - (tb.stat_disp(t, "Y", "A") - tb.sd_no_interaction(t, "Y", "A", "B", "A"))))
    return dev


_CONCURRENT_PARENTS = {"A": ["Z", "B"], "Y": ["Z", "A", "B"], "T": ["Z"], "W": ["A", "Y"], "B": ["Z"]}


def _concurrent(rng, draws, sign):
    dev = 0.0
    spec = cf.ConcurrentSpec("Y", "A", ("Z",), ("W",), ("T",), "B")
    for _ in range(draws):
        t = random_network(rng, ["Z", "B", "A", "T", "Y", "W"], _CONCURRENT_PARENTS).enumerate()
        r = cf.concurrent_bias(t, spec)
        checks = [
            r["conf+sel"] - (_sd(t, ["W"]) - _sd(t, ["Z"])),
            r["conf+sel+meas"] - (_sd(t, ["T", "W"]) - _sd(t, ["Z"])),
            r["joint_conf"] - (r["joint_conf.sd_no_int"] + r["joint_conf.interaction"] + r["joint_conf.sd_no_int_b"]),
        ]
        dev = max(dev, max(abs(sign * r["conf"] - (_sd(t) - _sd(t, ["Z"]))), *map(abs, checks)))
        # B a root independent of (A, Z): the single-attribute split is exact.
        t1 = random_network(rng, ["Z", "B", "A", "Y"], {"A": ["Z"], "Y": ["Z", "A", "B"]}).enumerate()
        r1 = cf.concurrent_bias(t1, cf.ConcurrentSpec("Y", "A", ("Z",), second_sensitive="B"))
        dev = max(dev, abs(r1["conf"] - r1["conf.sd_no_int"] - r1["conf.interaction"]))
    return dev


def random_cov(rng, k: int = 4) -> np.ndarray:
    m = rng.normal(size=(k, k + 2))
    return m @ m.T / (k + 2)


def _partial(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        c = lin.CovMatrix(("y", "a", "z", "w"), random_cov(rng))
        dev = max(dev,
                  abs(sign * lin.beta_partial1(c, "y", "a", "z") - lin.beta_partial(c, "y", "a", ["z"])),
                  abs(sign * lin.beta_partial2(c, "y", "a", "z", "w") - lin.beta_partial(c, "y", "a", ["z", "w"])))
    return dev


def _linear_models(rng, draws, sign):
    dev = 0.0
    for _ in range(draws):
        co = dict(zip(("alpha", "beta", "gamma", "lam"), rng.uniform(-1, 1, 4)))
        var = dict(zip(("Z", "A", "Y", "T"), rng.uniform(0.5, 2, 4)))
        m = lin.PathModel("confounding", {k: co[k] for k in ("alpha", "beta", "gamma")}, {k: var[k] for k in "ZAY"})
        c = linear_implied_cov(m)
        dev = max(dev, abs(sign * lin.conf_bias_linear(m) - (lin.beta(c, "Y", "A") - lin.beta_partial(c, "Y", "A", ["Z"]))))
        m = lin.PathModel("measurement", co, var)
        c = linear_implied_cov(m)
        dev = max(dev, abs(lin.meas_bias_linear(m) - (lin.beta_partial(c, "Y", "A", ["T"]) - lin.beta_partial(c, "Y", "A", ["Z"]))))
        s = dict(zip(("alpha", "eta", "epsilon"), rng.uniform(-1, 1, 3)))
        m = lin.PathModel("colliding", s, {"A": var["A"], "Y": var["Y"], "W": var["T"]})
        c = linear_implied_cov(m)
        dev = max(dev, abs(lin.sel_bias_linear(m) - (lin.beta_partial(c, "Y", "A", ["W"]) - lin.beta(c, "Y", "A"))))
    return dev


def linear_mc_checks(seed: int, n: int = 1_000_000) -> dict[str, tuple[float, float]]:
    """``{name: (closed form, Monte Carlo estimate)}`` for the four linear biases."""
    seeds = np.random.SeedSequence(seed).generate_state(4)
    out = {}
    d = simulate(ScmSpec("linear_confounding", {"alpha": 0.3, "beta": 0.5, "gamma": 0.5}, n, int(seeds[0])))
    c = lin.sample_moments(d)
    out["conf"] = (lin.conf_bias_coef(0.5, 0.5, 1.0, 1.25), lin.beta(c, "Y", "A") - lin.beta_partial(c, "Y", "A", ["Z"]))
    spec = ScmSpec("linear_colliding", {"alpha": 0.5, "eta": 0.3, "epsilon": 0.6}, n, int(seeds[1]))
    c = lin.sample_moments(simulate(spec))
    out["sel"] = (lin.sel_bias_linear(spec.path_model()), lin.beta_partial(c, "Y", "A", ["W"]) - lin.beta(c, "Y", "A"))
    spec = ScmSpec("linear_measurement", {"alpha": 0.3, "beta": 0.5, "gamma": 0.5, "lam": 1.0}, n, int(seeds[2]))
    c = lin.sample_moments(simulate(spec))
    out["meas"] = (lin.meas_bias_linear(spec.path_model()),
                   lin.beta_partial(c, "Y", "A", ["T"]) - lin.beta_partial(c, "Y", "A", ["Z"]))
    ispec = lin.InteractionLinearSpec(beta0=0.1, beta1=0.3, beta2=-0.2, beta3=0.4, beta4=0.5, pA1=0.5, pB1=0.5)
    d = simulate(ScmSpec("linear_interaction", asdict(ispec), n, int(seeds[3])))
    full = lin.ols_fit(d, "Y", ["A", "B", "C"], ("A", "B"))
    reduced = lin.ols_fit(d, "Y", ["A", "B", "C"])
    out["int"] = (lin.int_bias_linear(ispec, "A"), reduced["A"] - full["A"])
    return out


_BATTERIES: list[tuple[str, Callable, int, float, bool]] = [
    ("conf.binary", _conf, 1000, 1e-12, False),
    ("conf.binary.balanced", _conf_balanced, 1000, 1e-12, False),
    ("sel.binary", _sel, 1000, 1e-12, False),
    ("meas.binary.restored", _meas_restored, 200, 1e-9, False),
    ("meas.binary.qr_form.boundary", _meas_boundary, 200, 1e-12, False),
    ("meas.binary.qr_form.general", _meas_qr_form, 200, 1e-9, True),
    ("int.binary", _int, 1000, 1e-12, False),
    ("concurrent.binary", _concurrent, 200, 1e-12, False),
    ("linear.partial_regression", _partial, 500, 1e-10, False),
    ("linear.path_models", _linear_models, 200, 1e-10, False),
]


def run_selftest(seed: int = 0, inject: str | None = None, mc: bool = True, mc_n: int = 1_000_000) -> list[BatteryResult]:
    """Run every battery. ``inject`` names a battery whose closed form gets its sign flipped."""
    names = [b[0] for b in _BATTERIES]
    if inject is not None and inject not in names:
        raise ValueError(f"unknown battery {inject!r}")
    children = np.random.SeedSequence(seed).spawn(len(_BATTERIES))
    results = []
    for (name, fn, draws, tol, xfail), ss in zip(_BATTERIES, children):
        sign = -1.0 if name == inject else 1.0
        results.append(BatteryResult(name, draws, fn(np.random.default_rng(ss), draws, sign), tol, xfail))
    if mc:
        for name, (closed, est) in linear_mc_checks(seed, mc_n).items():
            results.append(BatteryResult(f"linear.mc.{name}", mc_n, abs(closed - est), 0.01))
    return results
