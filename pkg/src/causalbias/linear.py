"""Covariance algebra, partial regression and linear-model bias formulas.

Two covariance conventions are used and never mixed within one comparison:
:func:`sample_moments` is unbiased (divides by ``n - 1``) and
:func:`standardize` uses the population convention (divides by ``n``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CollinearityError, InputError, ParameterError, StructureError
from .graph import CausalGraph, wright_cov_matrix

_REL_TOL = 1e-12
PSD_TOL = 1e-9


class CovMatrix:
    """Labelled symmetric covariance matrix with optional means and sample size.

    Parameters
    ----------
    variables : sequence of str
    entries : array-like of shape (k, k)
    means : array-like of shape (k,), optional
    n : int, optional
        Number of rows the moments were estimated from; ``None`` for
        model-implied matrices.
    check_psd : bool
        Reject matrices with an eigenvalue below ``-1e-9 * max(diag)``.
    """

    def __init__(self, variables: Sequence[str], entries, means=None, n: int | None = None,
                 check_psd: bool = False):
        variables = tuple(variables)
        entries = np.array(entries, dtype=float)
        k = len(variables)
        if len(set(variables)) != k:
            raise InputError(f"duplicate variable names in {variables}")
        if entries.shape != (k, k):
            raise InputError(f"entries have shape {entries.shape}, expected {(k, k)}")
        if not np.all(np.isfinite(entries)):
            raise InputError("covariance entries must be finite")
        if not np.allclose(entries, entries.T, rtol=0, atol=1e-12 * max(1.0, np.abs(entries).max())):
            raise InputError("covariance matrix is not symmetric")
        diag = np.diag(entries)
        for name, v in zip(variables, diag):
            if v <= 0:
                raise CollinearityError(f"variable {name} has zero variance")
        if check_psd:
            low = np.linalg.eigvalsh(entries).min()
            if low < -PSD_TOL * diag.max():
                raise InputError(f"covariance matrix is not positive semidefinite (min eigenvalue {low:.3g})")
        entries = (entries + entries.T) / 2
        entries.flags.writeable = False
        self.variables = variables
        self.entries = entries
        self.means = np.zeros(k) if means is None else np.asarray(means, dtype=float)
        self.n = n
        self._pos = {v: i for i, v in enumerate(variables)}

    def __repr__(self):
        return f"CovMatrix(variables={self.variables}, n={self.n})"

    def index(self, name: str) -> int:
        try:
            return self._pos[name]
        except KeyError:
            raise KeyError(f"variable {name!r} not in covariance matrix {self.variables}") from None

    def cov(self, u: str, v: str) -> float:
        return float(self.entries[self.index(u), self.index(v)])

    def var(self, u: str) -> float:
        return self.cov(u, u)

    def sub(self, names: Iterable[str]) -> np.ndarray:
        idx = [self.index(n) for n in names]
        return self.entries[np.ix_(idx, idx)]

    def correlation(self) -> "CovMatrix":
        sd = np.sqrt(np.diag(self.entries))
        return CovMatrix(self.variables, self.entries / np.outer(sd, sd), None, self.n)

    @classmethod
    def from_graph(cls, graph: CausalGraph, names: Iterable[str] | None = None) -> "CovMatrix":
        names, entries = wright_cov_matrix(graph, names)
        return cls(names, entries)


def _as_matrix(rows, variables=None):
    if hasattr(rows, "columns"):
        variables = list(rows.columns) if variables is None else list(variables)
        data = rows[variables].to_numpy(dtype=float)
    else:
        data = np.asarray(rows, dtype=float)
        if data.ndim != 2:
            raise InputError("rows must be two-dimensional")
        variables = [f"x{i}" for i in range(data.shape[1])] if variables is None else list(variables)
    if data.shape[1] != len(variables):
        raise InputError(f"{data.shape[1]} columns for {len(variables)} variables")
    return data, variables


def sample_moments(rows, variables: Sequence[str] | None = None) -> CovMatrix:
    """Unbiased sample covariance matrix and means of the columns of ``rows``."""
    data, variables = _as_matrix(rows, variables)
    if data.shape[0] < 2:
        raise InputError("sample moments need at least two rows")
    if not np.all(np.isfinite(data)):
        raise InputError("rows contain non-finite values")
    cov = np.atleast_2d(np.cov(data, rowvar=False, ddof=1))
    return CovMatrix(variables, cov, data.mean(axis=0), n=data.shape[0], check_psd=True)


def standardize(rows):
    """Centre each column and scale it to unit population variance (divide by ``n``).

    Returns the same container type as given (DataFrame or ndarray).
    """
    data, variables = _as_matrix(rows)
    sd = data.std(axis=0, ddof=0)
    const = np.flatnonzero(sd == 0)
    if const.size:
        raise CollinearityError(f"constant column {variables[const[0]]} cannot be standardized")
    out = (data - data.mean(axis=0)) / sd
    if hasattr(rows, "columns"):
        return rows.__class__(out, columns=variables, index=rows.index)
    return out


# -- regression coefficients -------------------------------------------------


def beta(cov: CovMatrix, y: str, x: str) -> float:
    """Regression coefficient of ``y`` on ``x``: ``cov(x, y) / var(x)``."""
    vx = cov.var(x)
    if vx <= 0:
        raise CollinearityError(f"zero variance in {x}")
    return cov.cov(y, x) / vx


def beta_partial1(cov: CovMatrix, y: str, x: str, z: str) -> float:
    """Partial coefficient of ``y`` on ``x`` controlling for ``z`` from pairwise covariances."""
    sx, sz, sxz = cov.var(x), cov.var(z), cov.cov(x, z)
    den = sx * sz - sxz**2
    if den <= _REL_TOL * sx * sz:
        raise CollinearityError(f"{x} and {z} are collinear (var({x})var({z}) - cov^2 = {den:.3g})")
    return (sz * cov.cov(x, y) - cov.cov(y, z) * cov.cov(z, x)) / den


def partial2_terms(cov: CovMatrix, y: str, x: str, z: str, w: str) -> dict[str, float]:
    """Cofactor quantities behind :func:`beta_partial2`.

    With ``C`` the cofactors of the correlation matrix of ``(y, x, z, w)``:
    ``rho = -C_yx / sqrt(C_yy C_xx)`` is the partial correlation, the residual
    standard deviation ratio is ``sqrt(C_xx / C_yy) * sd_y / sd_x`` and their
    product is the partial regression coefficient.
    """
    names = [y, x, z, w]
    sigma = cov.sub(names)
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)

    def cofactor(i, j):
        minor = np.delete(np.delete(corr, i, axis=0), j, axis=1)
        return (-1) ** (i + j) * np.linalg.det(minor)

    c_yy, c_xx, c_yx = cofactor(0, 0), cofactor(1, 1), cofactor(0, 1)
    # C_xx is the determinant of the (y, z, w) block; C_yy that of (x, z, w).
    ctrl = np.linalg.det(corr[2:, 2:])
    if c_yy <= _REL_TOL or ctrl <= _REL_TOL:
        raise CollinearityError(f"correlation submatrix of {x}, {z}, {w} is singular")
    if c_xx < 0:
        c_xx = 0.0
    rho = -c_yx / math.sqrt(c_yy * c_xx) if c_xx > 0 else 0.0
    ratio = math.sqrt(c_xx / c_yy) * sd[0] / sd[1]
    return {"C_ya": c_yx, "C_yy": c_yy, "C_aa": c_xx, "rho": rho, "resid_ratio": ratio,
            "beta": -c_yx / c_yy * sd[0] / sd[1]}


def beta_partial2(cov: CovMatrix, y: str, x: str, z: str, w: str) -> float:
    """Partial coefficient of ``y`` on ``x`` controlling for ``z`` and ``w`` (cofactor route)."""
    return partial2_terms(cov, y, x, z, w)["beta"]


def beta_partial_std(s_ya, s_yz, s_yw, s_za, s_wa, s_zw=0.0) -> float:
    """Standardized two-control partial coefficient from correlations."""
    den = 1 - s_zw**2 - s_za**2 - s_wa**2 + 2 * s_za * s_wa * s_zw
    if den <= _REL_TOL:
        raise CollinearityError("singular correlation submatrix of the regressors")
    q = s_ya * (1 - s_zw**2) + s_yz * (s_wa * s_zw - s_za) + s_yw * (s_za * s_zw - s_wa)
    return q / den


def beta_partial(cov: CovMatrix, y: str, x: str, controls: Sequence[str] = ()) -> float:
    """Partial coefficient for any control set via the normal equations."""
    preds = [x, *controls]
    sxx = cov.sub(preds)
    sxy = np.array([cov.cov(p, y) for p in preds])
    _check_rank(sxx, preds)
    return float(np.linalg.solve(sxx, sxy)[0])


def _check_rank(sxx, names):
    sd = np.sqrt(np.diag(sxx))
    if np.any(sd <= 0):
        raise CollinearityError("zero-variance predictor")
    low = np.linalg.eigvalsh(sxx / np.outer(sd, sd)).min()
    if low <= _REL_TOL:
        raise CollinearityError(f"design matrix is rank deficient in {list(names)}")


# -- path models -------------------------------------------------------------

_STRUCTURES = {
    # name: (edges as (src, dst, coefficient key), roles, latent)
    "confounding": (
        [("Z", "A", "beta"), ("Z", "Y", "gamma"), ("A", "Y", "alpha")],
        {"A": "sensitive", "Y": "outcome"}, (),
    ),
    "two_confounder": (
        [("Z", "A", "beta"), ("Z", "Y", "gamma"), ("W", "A", "delta"), ("W", "Y", "lam"), ("A", "Y", "alpha")],
        {"A": "sensitive", "Y": "outcome"}, (),
    ),
    "colliding": (
        [("A", "Y", "alpha"), ("A", "W", "eta"), ("Y", "W", "epsilon")],
        {"A": "sensitive", "Y": "outcome"}, (),
    ),
    "measurement": (
        [("Z", "A", "beta"), ("Z", "Y", "gamma"), ("A", "Y", "alpha"), ("Z", "T", "lam")],
        {"A": "sensitive", "Y": "outcome", "T": "proxy"}, ("Z",),
    ),
}


def structure_coefficients(structure: str) -> tuple[str, ...]:
    try:
        return tuple(k for _, _, k in _STRUCTURES[structure][0])
    except KeyError:
        raise ParameterError(f"unknown structure {structure!r}; expected one of {sorted(_STRUCTURES)}") from None


@dataclass(frozen=True)
class PathModel:
    """Linear structural model with Gaussian disturbances.

    Parameters
    ----------
    structure : {"confounding", "two_confounder", "colliding", "measurement"}
    coefficients : mapping
        Path coefficients by name. Confounding uses ``alpha`` (A->Y),
        ``beta`` (Z->A), ``gamma`` (Z->Y); two_confounder adds ``delta``
        (W->A) and ``lam`` (W->Y); colliding uses ``alpha`` (A->Y), ``eta``
        (A->W), ``epsilon`` (Y->W); measurement uses the confounding names
        plus ``lam`` (Z->T). Missing coefficients default to 0.
    variances : mapping, optional
        Disturbance variances per node, default 1.
    standardized : bool
        If true, disturbance variances are chosen so every node has unit
        total variance, making the coefficients standardized path coefficients.
    """

    structure: str
    coefficients: Mapping[str, float]
    variances: Mapping[str, float] | None = None
    standardized: bool = False
    _graph: CausalGraph = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        keys = structure_coefficients(self.structure)
        unknown = set(self.coefficients) - set(keys)
        if unknown:
            raise ParameterError(f"unknown coefficients {sorted(unknown)} for {self.structure}")
        coefs = {k: float(self.coefficients.get(k, 0.0)) for k in keys}
        for k, v in coefs.items():
            if not math.isfinite(v):
                raise ParameterError(f"coefficient {k} must be finite")
        object.__setattr__(self, "coefficients", coefs)
        if self.standardized and self.variances:
            raise ParameterError("standardized models derive their own disturbance variances")
        variances = dict(self.variances or {})
        for k, v in variances.items():
            if not v > 0:
                raise ParameterError(f"variance of {k} must be positive")
        if self.standardized:
            variances = self._unit_total_variances()
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "_graph", self._build_graph(variances))

    def _build_graph(self, variances):
        edges, roles, latent = _STRUCTURES[self.structure]
        return CausalGraph.from_edges(
            [(s, d, self.coefficients[k]) for s, d, k in edges], roles, latent, (), variances
        )

    def _unit_total_variances(self):
        g = self._build_graph({})
        order = g.topological_order()
        pos = {n: i for i, n in enumerate(order)}
        sigma = np.zeros((len(order), len(order)))
        out = {}
        for n in order:
            i = pos[n]
            b = np.zeros(len(order))
            for p in g.parents(n):
                b[pos[p]] = g.coefficient(p, n)
            explained = float(b @ sigma @ b)
            u = 1.0 - explained
            if u <= 0:
                raise ParameterError(
                    f"coefficients explain variance {explained:.4g} >= 1 of {n}; no standardized model exists"
                )
            out[n] = u
            sigma[i, :] = sigma[:, i] = sigma @ b
            sigma[i, i] = 1.0
        return out

    def to_graph(self) -> CausalGraph:
        return self._graph

    def total_variance(self, node: str) -> float:
        return self.cov().var(node)

    def cov(self) -> CovMatrix:
        """Model-implied covariance matrix over all nodes (Wright's rule)."""
        return CovMatrix.from_graph(self._graph)

    def __getitem__(self, key):
        return self.coefficients[key]


# -- closed forms ------------------------------------------------------------


def _safe_div(num, den, scale, term):
    if abs(den) <= _REL_TOL * max(scale, 1e-300):
        raise CollinearityError(f"singular denominator in {term}")
    return num / den


def conf_bias_cov(cov: CovMatrix, y="Y", a="A", z="Z") -> float:
    """Confounding bias ``beta_ya - beta_ya.z`` in covariances."""
    sa, sz, sza = cov.var(a), cov.var(z), cov.cov(z, a)
    num = sza * cov.cov(y, z) - cov.cov(y, a) / sa * sza**2
    return _safe_div(num, sa * sz - sza**2, sa * sz, "var(A)var(Z) - cov(Z,A)^2")


def conf_bias_coef(beta_: float, gamma: float, var_z: float = 1.0, var_a: float = 1.0) -> float:
    """``(var_z / var_a) * beta * gamma`` with total variances of Z and A."""
    return var_z / var_a * beta_ * gamma


def conf_bias_std(beta_: float, gamma: float) -> float:
    return beta_ * gamma


def two_conf_bias_cov(cov: CovMatrix, y="Y", a="A", z="Z", w="W", tol: float = 1e-9) -> float:
    """Two independent confounders, evaluated on the correlation matrix.

    The value is in standardized units. Raises if ``corr(z, w)`` exceeds ``tol``.
    """
    r = cov.correlation()
    rzw = r.cov(z, w)
    if abs(rzw) > tol:
        raise StructureError(
            f"two-confounder form assumes independent confounders; corr({z},{w}) = {rzw:.3g} exceeds {tol:g}"
        )
    sza, swa, sya = r.cov(z, a), r.cov(w, a), r.cov(y, a)
    num = sza * r.cov(y, z) + swa * r.cov(y, w) - sya * (sza**2 + swa**2)
    return _safe_div(num, 1 - sza**2 - swa**2, 1.0, "1 - corr(Z,A)^2 - corr(W,A)^2")


def two_conf_bias_coef(beta_: float, gamma: float, delta: float, lam: float) -> float:
    """Standardized two-confounder bias ``beta*gamma + delta*lam``."""
    return beta_ * gamma + delta * lam


def sel_bias_cov(cov: CovMatrix, y="Y", a="A", w="W") -> float:
    """Selection bias ``beta_ya.w - beta_ya`` in covariances."""
    sa, sw, swa = cov.var(a), cov.var(w), cov.cov(w, a)
    num = cov.cov(y, a) / sa * swa**2 - swa * cov.cov(y, w)
    return _safe_div(num, sa * sw - swa**2, sa * sw, "var(A)var(W) - cov(W,A)^2")


def sel_bias_coef(alpha: float, eta: float, epsilon: float, var_a: float = 1.0, var_y: float = 1.0,
                  var_w: float = 1.0) -> float:
    """Selection bias from path coefficients and total variances of A, Y, W."""
    num = var_a**2 * alpha**2 * eta + var_a**2 * alpha**3 * epsilon - var_y * var_a * eta - var_y * var_a * alpha * epsilon
    den = var_a * var_w - (var_a * eta + var_a * alpha * epsilon) ** 2
    return epsilon * _safe_div(num, den, var_a * var_w, "var(A)var(W) - cov(W,A)^2")


def sel_bias_std(alpha: float, eta: float, epsilon: float) -> float:
    return sel_bias_coef(alpha, eta, epsilon)


def meas_bias_cov(cov: CovMatrix, y="Y", a="A", z="Z", t="T") -> float:
    """Measurement bias ``beta_ya.t - beta_ya.z``; needs the confounder in ``cov``."""
    if z not in cov.variables:
        raise StructureError(f"measurement bias from moments needs the latent confounder {z}")
    return beta_partial1(cov, y, a, t) - beta_partial1(cov, y, a, z)


def meas_bias_coef(beta_: float, gamma: float, lam: float, var_z: float = 1.0, var_a: float = 1.0,
                   var_t: float = 1.0) -> float:
    """Measurement bias from path coefficients and total variances of Z, A, T."""
    num = var_z * beta_ * gamma * (var_t - var_z * lam**2)
    den = var_a * var_t - var_z**2 * lam**2 * beta_**2
    return _safe_div(num, den, var_a * var_t, "var(A)var(T) - var(Z)^2 lam^2 beta^2")


def meas_bias_std(beta_: float, gamma: float, lam: float) -> float:
    """Standardized measurement bias ``beta*gamma*(1-lam^2)/(1-lam^2*beta^2)``."""
    return _safe_div(beta_ * gamma * (1 - lam**2), 1 - lam**2 * beta_**2, 1.0, "1 - lam^2 beta^2")


def _need(m: PathModel, structure: str):
    if m.structure != structure:
        raise StructureError(f"expected a {structure} model, got {m.structure}")


def conf_bias_linear(obj, y="Y", a="A", z="Z") -> float:
    """Confounding bias from a :class:`PathModel` (coefficient form) or a :class:`CovMatrix`."""
    if isinstance(obj, CovMatrix):
        return conf_bias_cov(obj, y, a, z)
    if obj.structure == "two_confounder":
        return conf_bias_two(obj)
    _need(obj, "confounding")
    c = obj.cov()
    return conf_bias_coef(obj["beta"], obj["gamma"], c.var("Z"), c.var("A"))


def conf_bias_two(obj, y="Y", a="A", z="Z", w="W", tol: float = 1e-9) -> float:
    if isinstance(obj, CovMatrix):
        return two_conf_bias_cov(obj, y, a, z, w, tol)
    _need(obj, "two_confounder")
    if not obj.standardized:
        raise ParameterError("the two-confounder coefficient form needs a standardized model")
    return two_conf_bias_coef(obj["beta"], obj["gamma"], obj["delta"], obj["lam"])


def sel_bias_linear(obj, y="Y", a="A", w="W") -> float:
    if isinstance(obj, CovMatrix):
        return sel_bias_cov(obj, y, a, w)
    _need(obj, "colliding")
    c = obj.cov()
    return sel_bias_coef(obj["alpha"], obj["eta"], obj["epsilon"], c.var("A"), c.var("Y"), c.var("W"))


def meas_bias_linear(obj, y="Y", a="A", z="Z", t="T") -> float:
    if isinstance(obj, CovMatrix):
        return meas_bias_cov(obj, y, a, z, t)
    _need(obj, "measurement")
    c = obj.cov()
    return meas_bias_coef(obj["beta"], obj["gamma"], obj["lam"], c.var("Z"), c.var("A"), c.var("T"))


# -- regression on rows ------------------------------------------------------


def ols_fit(rows, response: str, predictors: Sequence[str],
            with_interaction: tuple[str, str] | None = None) -> dict[str, float]:
    """Least squares via the normal equations on sample moments.

    Returns ``{"intercept": ..., predictor: coefficient, ...}``; with
    ``with_interaction=(a, b)`` an ``"a:b"`` product column is added.
    """
    if not hasattr(rows, "columns"):
        raise InputError("ols_fit expects a DataFrame")
    predictors = list(predictors)
    if len(set(predictors)) != len(predictors):
        raise CollinearityError("duplicate predictor columns")
    data = {p: rows[p].to_numpy(dtype=float) for p in predictors}
    if with_interaction is not None:
        a, b = with_interaction
        name = f"{a}:{b}"
        data[name] = rows[a].to_numpy(dtype=float) * rows[b].to_numpy(dtype=float)
        predictors.append(name)
    x = np.column_stack([data[p] for p in predictors])
    y = rows[response].to_numpy(dtype=float)
    if x.shape[0] <= len(predictors):
        raise CollinearityError("fewer rows than predictors")
    xm, ym = x.mean(axis=0), y.mean()
    xc = x - xm
    sxx = xc.T @ xc
    if np.any(np.diag(sxx) <= 0):
        bad = predictors[int(np.argmin(np.diag(sxx)))]
        raise CollinearityError(f"predictor {bad} is constant")
    _check_rank(sxx, predictors)
    coef = np.linalg.solve(sxx, xc.T @ (y - ym))
    out = {"intercept": float(ym - xm @ coef)}
    out.update({p: float(c) for p, c in zip(predictors, coef)})
    return out


@dataclass(frozen=True)
class InteractionLinearSpec:
    """``Y = b0 + b1 A + b2 B + b3 AB + b4 C + U`` with binary, independent A and B."""

    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    beta4: float = 0.0
    pA1: float = 0.5
    pB1: float = 0.5

    def __post_init__(self):
        for name in ("pA1", "pB1"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {p!r}")
        for name in ("beta0", "beta1", "beta2", "beta3", "beta4"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")


def int_bias_linear(spec: InteractionLinearSpec, scope: str = "intersectional") -> float:
    """Interaction bias of a model fitted without the product term.

    ``scope="intersectional"`` gives ``beta3``, ``"A"`` gives
    ``beta3 * P(B=1)`` and ``"B"`` gives ``beta3 * P(A=1)``.
    """
    scope = scope.lower()
    if scope == "intersectional":
        return spec.beta3
    if scope in ("a", "individual_a"):
        return spec.beta3 * spec.pB1
    if scope in ("b", "individual_b"):
        return spec.beta3 * spec.pA1
    raise ValueError(f"unknown scope {scope!r}")
