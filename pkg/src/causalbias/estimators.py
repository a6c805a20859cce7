"""scikit-learn style wrappers around the bias computations.

The auditors follow the estimator conventions: ``__init__`` only stores
parameters, ``fit`` validates the data and sets attributes ending in ``_``.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import linear as lin
from . import tables as tb
from .closed_forms import ConcurrentSpec, concurrent_bias, effect_restoration_do
from .errors import InputError
from .validation import check_binary_frame, check_numeric_frame


def _as_tuple(value):
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,)
    return tuple(value)


class BinaryBiasAuditor(BaseEstimator):
    """Estimate disparity-based biases from binary data.

    Parameters
    ----------
    sensitive : str
    outcome : str
    confounders, colliders, proxies : sequence of str
    second_sensitive : str, optional
    error_mech : (float, float), optional
        ``(P(t1|z0), P(t0|z1))``; enables the effect-restoration estimate of
        the causal effect when adjusting on a single proxy.
    pseudo_count : float
        Added to every cell of the estimated joint table.

    Attributes
    ----------
    table_ : JointTable
    results_ : dict
        Components from :func:`~causalbias.closed_forms.concurrent_bias`,
        plus ``ace_restored`` and ``meas_restored`` when ``error_mech`` is set.
    """

    def __init__(self, sensitive="A", outcome="Y", confounders=(), colliders=(), proxies=(),
                 second_sensitive=None, error_mech=None, pseudo_count=0.0):
        self.sensitive = sensitive
        self.outcome = outcome
        self.confounders = confounders
        self.colliders = colliders
        self.proxies = proxies
        self.second_sensitive = second_sensitive
        self.error_mech = error_mech
        self.pseudo_count = pseudo_count

    def _columns(self):
        cols = [self.outcome, self.sensitive, *_as_tuple(self.confounders), *_as_tuple(self.colliders),
                *_as_tuple(self.proxies)]
        if self.second_sensitive:
            cols.append(self.second_sensitive)
        return list(dict.fromkeys(cols))

    def fit(self, X: pd.DataFrame, y=None):
        if not isinstance(X, pd.DataFrame):
            raise InputError("BinaryBiasAuditor.fit expects a DataFrame")
        data = check_binary_frame(X, self._columns())
        self.table_ = tb.from_samples(data, pseudo_count=self.pseudo_count)
        spec = ConcurrentSpec(self.outcome, self.sensitive, _as_tuple(self.confounders),
                              _as_tuple(self.colliders), _as_tuple(self.proxies), self.second_sensitive)
        results = concurrent_bias(self.table_, spec)
        proxies = _as_tuple(self.proxies)
        if self.error_mech is not None and len(proxies) == 1:
            t = self.table_.marginal([self.sensitive, proxies[0], self.outcome])
            do = [effect_restoration_do(t, tuple(self.error_mech), v, self.sensitive, proxies[0], self.outcome)
                  for v in (0, 1)]
            results["ace_restored"] = do[1] - do[0]
            sd_t = tb.stat_disp_adjusted(self.table_, self.outcome, self.sensitive, proxies)
            results["meas_restored"] = sd_t - results["ace_restored"]
        self.results_ = results
        self.n_samples_ = len(data)
        return self

    def biases(self) -> dict:
        check_is_fitted(self, "results_")
        return dict(self.results_)


class LinearBiasAuditor(BaseEstimator):
    """Regression-coefficient differences on continuous data.

    ``results_`` holds ``conf = b_ya - b_ya.Z``, ``sel = b_ya.W - b_ya`` and
    ``meas = b_ya.T - b_ya.Z`` for whichever adjustment sets are given, with
    ``Z`` the full confounder set.
    """

    def __init__(self, sensitive="A", outcome="Y", confounders=(), colliders=(), proxies=()):
        self.sensitive = sensitive
        self.outcome = outcome
        self.confounders = confounders
        self.colliders = colliders
        self.proxies = proxies

    def fit(self, X: pd.DataFrame, y=None):
        if not isinstance(X, pd.DataFrame):
            raise InputError("LinearBiasAuditor.fit expects a DataFrame")
        z, w, t = _as_tuple(self.confounders), _as_tuple(self.colliders), _as_tuple(self.proxies)
        cols = list(dict.fromkeys([self.outcome, self.sensitive, *z, *w, *t]))
        data = check_numeric_frame(X, cols)
        self.cov_ = lin.sample_moments(data)
        b = lambda ctrl: lin.beta_partial(self.cov_, self.outcome, self.sensitive, ctrl)
        base = b(())
        res = {"beta": base}
        if z:
            res["conf"] = base - b(z)
        if w:
            res["sel"] = b(w) - base
        if t and z:
            res["meas"] = b(t) - b(z)
        self.results_ = res
        self.n_samples_ = len(data)
        return self


class OLSRegression(RegressorMixin, BaseEstimator):
    """Ordinary least squares with an optional product term.

    Parameters
    ----------
    interaction : (int, int), optional
        Column indices whose product is appended as an extra regressor.
    """

    def __init__(self, interaction=None):
        self.interaction = interaction

    def _design(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise InputError("X must be two-dimensional")
        if self.interaction is not None:
            i, j = self.interaction
            X = np.column_stack([X, X[:, i] * X[:, j]])
        return X

    def fit(self, X, y):
        names = [f"x{i}" for i in range(np.asarray(X).shape[1])]
        frame = pd.DataFrame(np.asarray(X, dtype=float), columns=names)
        frame["y"] = np.asarray(y, dtype=float)
        pair = None if self.interaction is None else tuple(names[k] for k in self.interaction)
        fit = lin.ols_fit(frame, "y", names, pair)
        self.intercept_ = fit.pop("intercept")
        self.coef_ = np.array(list(fit.values()))
        self.n_features_in_ = len(names)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self._design(X) @ self.coef_ + self.intercept_
