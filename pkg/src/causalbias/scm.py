"""Seeded structural causal model generators, exact enumeration and bias sweeps.

All randomness goes through :func:`numpy.random.default_rng` (PCG64). Gaussian
disturbances use numpy's ziggurat ``standard_normal``. Rows are bit-identical
for a given spec within one numpy build.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import linear as lin
from .closed_forms import ConfoundParams
from .errors import InputError, ParameterError
from .tables import JointTable

LINEAR_STRUCTURES = {
    "linear_confounding": "confounding",
    "linear_two_confounder": "two_confounder",
    "linear_colliding": "colliding",
    "linear_measurement": "measurement",
}
BINARY_STRUCTURES = ("binary_confounding", "binary_measurement", "binary_interaction")
STRUCTURES = (*LINEAR_STRUCTURES, *BINARY_STRUCTURES, "linear_interaction")


@dataclass(frozen=True)
class ScmSpec:
    """A generator: structure name, its parameters, sample count and seed.

    Parameters by structure:

    * ``linear_*``: path coefficients as in :class:`~causalbias.linear.PathModel`,
      plus optional ``standardized`` (bool).
    * ``binary_confounding``: ``alpha, beta, gamma, delta, epsilon, tau, lam``
      as in :class:`~causalbias.closed_forms.ConfoundParams`.
    * ``binary_measurement``: ``p_z1``, ``p_a1_z1``, ``p_a1_z0``, ``p_t1_z1``,
      ``p_t1_z0`` and optionally ``p_y1`` (mapping ``(z, a) -> P(y1|z,a)``,
      default ``0.5 z + 0.5 a``).
    * ``binary_interaction``: ``p_a1``, ``p_b1`` (independent roots) and
      ``p_y1`` mapping ``(a, b) -> P(y1|a,b)``.

    Conditional tables may also be given flat, e.g. ``p_y1_01 = P(y1|a0,b1)``.
    * ``linear_interaction``: fields of
      :class:`~causalbias.linear.InteractionLinearSpec`.
    """

    structure: str
    params: Mapping = field(default_factory=dict)
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ParameterError(f"unknown structure {self.structure!r}; expected one of {list(STRUCTURES)}")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "params", dict(self.params))
        # Validate eagerly so bad specs fail before any sampling.
        if self.structure in LINEAR_STRUCTURES:
            self.path_model()
        elif self.structure == "linear_interaction":
            self.interaction_spec()
        else:
            self.network()

    @classmethod
    def randomize(cls, structure: str = "binary_measurement", seed: int = 0, n: int = 1000) -> "ScmSpec":
        """Draw every Bernoulli parameter uniformly from (0, 1) with ``seed``."""
        rng = np.random.default_rng(seed)
        if structure == "binary_measurement":
            keys = ("p_z1", "p_a1_z1", "p_a1_z0", "p_t1_z1", "p_t1_z0")
            params = dict(zip(keys, rng.uniform(0, 1, len(keys)).tolist()))
        elif structure == "binary_confounding":
            params = ConfoundParams.random(rng, lam=None).as_dict()
        elif structure == "binary_interaction":
            p = rng.uniform(0, 1, 6).tolist()
            params = {"p_a1": p[0], "p_b1": p[1],
                      "p_y1": {(0, 0): p[2], (0, 1): p[3], (1, 0): p[4], (1, 1): p[5]}}
        else:
            raise ParameterError(f"randomize is not defined for {structure!r}")
        return cls(structure, params, n, seed)

    # -- structure-specific views --------------------------------------------

    def path_model(self) -> lin.PathModel:
        params = dict(self.params)
        std = bool(params.pop("standardized", False))
        return lin.PathModel(LINEAR_STRUCTURES[self.structure], params, standardized=std)

    def interaction_spec(self) -> lin.InteractionLinearSpec:
        return lin.InteractionLinearSpec(**self.params)

    def network(self) -> "BinaryNetwork":
        p = self.params
        if self.structure == "binary_confounding":
            try:
                c = ConfoundParams(**p)
            except TypeError as exc:
                raise ParameterError(f"binary_confounding parameters: {exc}") from None
            return BinaryNetwork([
                ("A", (), {(): c.lam}),
                ("Z", ("A",), {(0,): 1 - c.tau, (1,): c.s1_given_a1}),
                ("Y", ("A", "Z"), dict(c.y_given)),
            ], columns=("Z", "A", "Y"))
        if self.structure == "binary_measurement":
            py = p.get("p_y1") or _flat_cpt(p, "p_y1") or {(z, a): 0.5 * z + 0.5 * a for z in (0, 1) for a in (0, 1)}
            return BinaryNetwork([
                ("Z", (), {(): _prob(p, "p_z1")}),
                ("A", ("Z",), {(1,): _prob(p, "p_a1_z1"), (0,): _prob(p, "p_a1_z0")}),
                ("T", ("Z",), {(1,): _prob(p, "p_t1_z1"), (0,): _prob(p, "p_t1_z0")}),
                ("Y", ("Z", "A"), _cpt(py, "p_y1")),
            ])
        if self.structure == "binary_interaction":
            return BinaryNetwork([
                ("A", (), {(): _prob(p, "p_a1")}),
                ("B", (), {(): _prob(p, "p_b1")}),
                ("Y", ("A", "B"), _cpt(p.get("p_y1") or _flat_cpt(p, "p_y1"), "p_y1")),
            ])
        raise ParameterError(f"{self.structure} is not a binary structure")

    @property
    def error_mech(self) -> tuple[float, float]:
        """``(P(t1|z0), P(t0|z1))`` for ``binary_measurement``."""
        if self.structure != "binary_measurement":
            raise ParameterError("error mechanism is only defined for binary_measurement")
        return (self.params["p_t1_z0"], 1 - self.params["p_t1_z1"])


def _prob(params, key):
    try:
        v = float(params[key])
    except KeyError:
        raise ParameterError(f"missing parameter {key}") from None
    if not 0.0 <= v <= 1.0:
        raise ParameterError(f"{key} must lie in [0, 1], got {v!r}")
    return v


def _flat_cpt(params, name):
    """Collect ``name_ab`` keys (e.g. ``p_y1_01``) into ``{(0, 1): value}``."""
    prefix = name + "_"
    flat = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    if not flat:
        return None
    return {tuple(int(c) for c in key): v for key, v in flat.items()}


def _cpt(table, name):
    if table is None:
        raise ParameterError(f"missing parameter {name}")
    out = {}
    for key, v in dict(table).items():
        key = tuple(int(k) for k in (key if isinstance(key, tuple) else (key,)))
        if not 0.0 <= float(v) <= 1.0:
            raise ParameterError(f"{name}{key} must lie in [0, 1], got {v!r}")
        out[key] = float(v)
    return out


# -- binary networks ----------------------------------------------------------


class BinaryNetwork:
    """Binary Bayesian network given in topological order.

    Parameters
    ----------
    nodes : sequence of (name, parents, cpt)
        ``cpt`` maps a tuple of parent values to ``P(node = 1 | parents)``.
    columns : sequence of str, optional
        Variable order of the enumerated table; defaults to node order.
    """

    def __init__(self, nodes, columns: Sequence[str] | None = None):
        self.nodes = [(n, tuple(ps), dict(cpt)) for n, ps, cpt in nodes]
        names = [n for n, _, _ in self.nodes]
        seen = set()
        for n, ps, cpt in self.nodes:
            missing = [p for p in ps if p not in seen]
            if missing:
                raise ParameterError(f"parents {missing} of {n} must precede it")
            for key in itertools.product((0, 1), repeat=len(ps)):
                if key not in cpt:
                    raise ParameterError(f"P({n}=1 | {dict(zip(ps, key))}) is not specified")
                if not 0.0 <= cpt[key] <= 1.0:
                    raise ParameterError(f"P({n}=1 | {dict(zip(ps, key))}) = {cpt[key]!r} is not a probability")
            seen.add(n)
        self.columns = tuple(columns or names)
        if sorted(self.columns) != sorted(names):
            raise ParameterError("columns must be a permutation of the node names")

    def enumerate(self) -> JointTable:
        """Exact joint table by the chain rule."""
        names = [n for n, _, _ in self.nodes]
        probs = np.zeros((2,) * len(names))
        for values in itertools.product((0, 1), repeat=len(names)):
            assign = dict(zip(names, values))
            p = 1.0
            for n, ps, cpt in self.nodes:
                p1 = cpt[tuple(assign[q] for q in ps)]
                p *= p1 if assign[n] else 1.0 - p1
            probs[values] = p
        order = [names.index(c) for c in self.columns]
        probs = np.transpose(probs, order)
        return JointTable(self.columns, probs / probs.sum())


def random_network(rng: np.random.Generator, names: Sequence[str], parents: Mapping[str, Sequence[str]],
                   low: float = 0.05, high: float = 0.95) -> BinaryNetwork:
    """Network over ``names`` (topological order) with uniform CPT entries."""
    nodes = []
    for n in names:
        ps = tuple(parents.get(n, ()))
        keys = list(itertools.product((0, 1), repeat=len(ps)))
        nodes.append((n, ps, dict(zip(keys, rng.uniform(low, high, len(keys)).tolist()))))
    return BinaryNetwork(nodes)


def enumerate_joint(spec: ScmSpec) -> JointTable:
    """Exact joint table of a binary spec; the seed and ``n`` are ignored."""
    if spec.structure not in BINARY_STRUCTURES:
        raise ParameterError(f"{spec.structure} is not a binary structure")
    return spec.network().enumerate()


def linear_implied_cov(model: lin.PathModel) -> lin.CovMatrix:
    """Covariance ``(I - B)^-1 Omega (I - B)^-T``; independent of Wright's rule."""
    g = model.to_graph()
    names = list(g.names)
    k = len(names)
    pos = {n: i for i, n in enumerate(names)}
    b = np.zeros((k, k))
    for e in g.edges:
        b[pos[e.target], pos[e.source]] = e.coefficient
    omega = np.diag([model.variances.get(n, 1.0) for n in names])
    inv = np.linalg.inv(np.eye(k) - b)
    return lin.CovMatrix(names, inv @ omega @ inv.T)


# -- simulation ---------------------------------------------------------------


def simulate(spec: ScmSpec) -> pd.DataFrame:
    """Draw ``spec.n`` rows; identical specs give identical rows."""
    rng = np.random.default_rng(spec.seed)
    if spec.structure in LINEAR_STRUCTURES:
        return _simulate_linear(spec.path_model(), spec.n, rng)
    if spec.structure == "linear_interaction":
        return _simulate_interaction(spec.interaction_spec(), spec.n, rng)
    table = enumerate_joint(spec)
    return sample_table(table, spec.n, rng)


def sample_table(table: JointTable, n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Draw ``n`` i.i.d. rows from a joint table."""
    k = len(table.variables)
    p = table.flat()
    codes = rng.choice(p.size, size=n, p=p / p.sum())
    bits = (codes[:, None] >> np.arange(k - 1, -1, -1)) & 1
    return pd.DataFrame(bits.astype(np.int8), columns=list(table.variables))


def _simulate_linear(model: lin.PathModel, n: int, rng) -> pd.DataFrame:
    g = model.to_graph()
    order = g.topological_order()
    noise = rng.standard_normal((n, len(order)))
    cols: dict[str, np.ndarray] = {}
    for i, v in enumerate(order):
        x = noise[:, i] * math.sqrt(model.variances.get(v, 1.0))
        for p in g.parents(v):
            x = x + g.coefficient(p, v) * cols[p]
        cols[v] = x
    return pd.DataFrame({v: cols[v] for v in g.names})


def _simulate_interaction(spec: lin.InteractionLinearSpec, n: int, rng) -> pd.DataFrame:
    a = (rng.random(n) < spec.pA1).astype(float)
    b = (rng.random(n) < spec.pB1).astype(float)
    c = rng.standard_normal(n)
    y = spec.beta0 + spec.beta1 * a + spec.beta2 * b + spec.beta3 * a * b + spec.beta4 * c + rng.standard_normal(n)
    return pd.DataFrame({"A": a, "B": b, "C": c, "Y": y})


# -- sweeps -------------------------------------------------------------------

# Closed forms by bias kind: (parameter names, standardized form, unit-noise form).
_SWEEP_FORMS: dict[str, tuple[tuple[str, ...], Callable, Callable]] = {
    "conf": (
        ("beta", "gamma"),
        lambda beta, gamma: lin.conf_bias_std(beta, gamma),
        lambda beta, gamma: lin.conf_bias_coef(beta, gamma, 1.0, 1.0 + beta**2),
    ),
    "sel": (
        ("alpha", "eta", "epsilon"),
        lambda alpha, eta, epsilon: lin.sel_bias_std(alpha, eta, epsilon),
        lambda alpha, eta, epsilon: lin.sel_bias_coef(
            alpha, eta, epsilon, 1.0, 1.0 + alpha**2, (eta + alpha * epsilon) ** 2 + epsilon**2 + 1.0
        ),
    ),
    "meas": (
        ("beta", "gamma", "lam"),
        lambda beta, gamma, lam: lin.meas_bias_std(beta, gamma, lam),
        lambda beta, gamma, lam: lin.meas_bias_coef(beta, gamma, lam, 1.0, 1.0 + beta**2, 1.0 + lam**2),
    ),
}
SWEEP_KINDS = tuple(_SWEEP_FORMS)


def sweep_parameters(kind: str) -> tuple[str, ...]:
    try:
        return _SWEEP_FORMS[kind][0]
    except KeyError:
        raise InputError(f"unknown bias kind {kind!r}; expected one of {list(_SWEEP_FORMS)}") from None


def axis_values(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic range, rounded to 12 decimals so grids are exact."""
    if step <= 0 or stop < start:
        raise InputError(f"invalid axis range {start}:{stop}:{step}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    vals = np.round(start + step * np.arange(count), 12)
    return vals + 0.0  # drop negative zeros


@dataclass
class SweepGrid:
    bias_kind: str
    axes: list[tuple[str, np.ndarray]]
    fixed: dict[str, float]
    standardized: bool
    cells: np.ndarray
    singular: list[tuple[dict, str]] = field(default_factory=list)

    @property
    def shape(self):
        return tuple(len(v) for _, v in self.axes)

    def coordinates(self):
        names = [n for n, _ in self.axes]
        for idx in itertools.product(*(range(len(v)) for _, v in self.axes)):
            yield idx, dict(zip(names, (float(self.axes[i][1][j]) for i, j in enumerate(idx))))

    def to_frame(self) -> pd.DataFrame:
        rows = [{**coords, "bias": float(self.cells[idx])} for idx, coords in self.coordinates()]
        return pd.DataFrame(rows, columns=[n for n, _ in self.axes] + ["bias"])

    def to_csv(self, path=None) -> str:
        """Headered CSV, ``,`` delimiter, LF endings, ``%.12g`` floats."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([n for n, _ in self.axes] + ["bias"])
        for idx, coords in self.coordinates():
            w.writerow([format_float(v) for v in coords.values()] + [format_float(self.cells[idx])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0:
        return "0"
    return format(x, ".12g")


def sweep(kind: str, axes: Mapping[str, Sequence[float] | tuple[float, float, float]],
          hold: float = 0.5, standardized: bool = False, fixed: Mapping[str, float] | None = None,
          threads: int = 1) -> SweepGrid:
    """Evaluate a linear closed form over a grid.

    Parameters
    ----------
    kind : {"conf", "sel", "meas"}
    axes : mapping
        Parameter name to either explicit values or ``(start, stop, step)``.
    hold : float
        Value for parameters that are neither on an axis nor in ``fixed``.
    standardized : bool
        Use the standardized parametrization instead of the unit-noise generator.
    threads : int
        Worker threads; output does not depend on this.

    Singular cells are NaN and logged in ``SweepGrid.singular``.
    """
    sweep_parameters(kind)
    names, std_form, raw_form = _SWEEP_FORMS[kind]
    fixed = dict(fixed or {})
    unknown = (set(axes) | set(fixed)) - set(names)
    if unknown:
        raise InputError(f"parameters {sorted(unknown)} do not apply to {kind} (expected {list(names)})")
    if not axes:
        raise InputError("at least one axis is required")
    grid_axes = []
    for n in names:
        if n in axes:
            spec = axes[n]
            vals = axis_values(*spec) if isinstance(spec, tuple) and len(spec) == 3 else np.asarray(spec, float)
            grid_axes.append((n, vals))
    base = {n: float(fixed.get(n, hold)) for n in names}
    form = std_form if standardized else raw_form
    grid = SweepGrid(kind, grid_axes, {n: base[n] for n in names if n not in axes}, standardized,
                     np.empty(tuple(len(v) for _, v in grid_axes)))
    coords = list(grid.coordinates())

    def evaluate(item):
        idx, c = item
        try:
            v = form(**{**base, **c})
        except (ZeroDivisionError, lin.CollinearityError) as exc:
            return idx, math.nan, str(exc)
        if not math.isfinite(v):
            return idx, math.nan, "non-finite value"
        return idx, v, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate, coords))
    else:
        results = [evaluate(c) for c in coords]
    for (idx, v, err), (_, c) in zip(results, coords):
        grid.cells[idx] = v
        if err is not None:
            grid.singular.append((c, err))
    return grid


def sweep_slices(kind: str, hold: float, values: np.ndarray | None = None,
                 standardized: bool = False) -> pd.DataFrame:
    """One-parameter slices: each parameter varies while the others sit at ``hold``."""
    names = sweep_parameters(kind)
    values = axis_values(-1.0, 1.0, 0.1) if values is None else values
    frames = []
    for n in names:
        g = sweep(kind, {n: values}, hold=hold, standardized=standardized)
        frames.append(pd.DataFrame({"parameter": n, "value": g.axes[0][1], "bias": g.cells}))
    return pd.concat(frames, ignore_index=True)


def spec_graph(spec: ScmSpec):
    """Causal graph of a generator, with roles set for auditing."""
    from .graph import CausalGraph

    if spec.structure in LINEAR_STRUCTURES:
        g = spec.path_model().to_graph()
        if spec.structure == "linear_colliding":
            return CausalGraph.from_edges(
                [(e.source, e.target, e.coefficient) for e in g.edges],
                {"A": "sensitive", "Y": "outcome"}, conditioned=("W",), variances=g.variances,
            )
        return g
    if spec.structure == "binary_confounding":
        return CausalGraph.from_edges([("Z", "A"), ("Z", "Y"), ("A", "Y")], {"A": "sensitive", "Y": "outcome"})
    if spec.structure == "binary_measurement":
        return CausalGraph.from_edges(
            [("Z", "A"), ("Z", "T"), ("Z", "Y"), ("A", "Y")],
            {"A": "sensitive", "Y": "outcome", "T": "proxy"}, latent=("Z",),
        )
    if spec.structure == "binary_interaction":
        return CausalGraph.from_edges([("A", "Y"), ("B", "Y")], {"A": "sensitive", "B": "sensitive", "Y": "outcome"})
    return CausalGraph.from_edges(
        [("A", "Y"), ("B", "Y"), ("C", "Y")], {"A": "sensitive", "B": "sensitive", "Y": "outcome"}
    )
