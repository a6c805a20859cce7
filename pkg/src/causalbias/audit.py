"""Audit pipeline: data and graph in, per-bias report out.

Each bias is computed twice: once by its closed form and once by an
independent route (disparity differences on the estimated table, or
normal-equation regressions on the sample moments). When the data come from
a generator, the exact model value is reported as ``truth``.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import __version__
from . import closed_forms as cf
from . import linear as lin
from . import tables as tb
from .errors import InputError, StructureError
from .graph import CausalGraph, classify_structure, load_graph
from .scm import LINEAR_STRUCTURES, ScmSpec, enumerate_joint, simulate, spec_graph
from .validation import check_binary_frame, check_columns, check_numeric_frame, is_binary_column

FORMAT_VERSION = "1"
BIAS_KINDS = ("conf", "sel", "meas", "int")


@dataclass
class AuditConfig:
    """Inputs of one audit run.

    Exactly one of ``data`` (CSV path or DataFrame) and ``scm`` must be set.
    ``graph`` defaults to the generator's own graph when ``scm`` is given.
    """

    data: str | Path | pd.DataFrame | None = None
    scm: ScmSpec | None = None
    graph: str | Path | CausalGraph | None = None
    sensitive: Sequence[str] = ()
    outcome: str | None = None
    biases: str | Sequence[str] = "auto"
    adjust: str = "each"
    error_mech: tuple[float, float] | None = None
    column_map: Mapping[str, str] = field(default_factory=dict)
    exact_tol: float = 1e-9
    mc_sigma: float = 3.0
    timestamp: bool = False


def read_csv(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise InputError(f"data file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse CSV {path}: {exc}") from None
    if frame.columns.duplicated().any():
        raise InputError(f"duplicate CSV header names in {path}")
    if not len(frame):
        raise InputError(f"no data rows in {path}")
    return frame


def _resolve(config: AuditConfig):
    if (config.data is None) == (config.scm is None):
        raise InputError("give exactly one of data or scm")
    if config.adjust not in ("each", "all"):
        raise InputError("adjust must be 'each' or 'all'")
    if isinstance(config.graph, CausalGraph):
        graph = config.graph
    elif config.graph is not None:
        graph = load_graph(config.graph)
    elif config.scm is not None:
        graph = spec_graph(config.scm)
    else:
        raise InputError("a graph is required for data audits")
    if config.scm is not None:
        frame = simulate(config.scm)
        source = f"scm:{config.scm.structure}"
    elif isinstance(config.data, pd.DataFrame):
        frame, source = config.data, "dataframe"
    else:
        frame, source = read_csv(config.data), f"csv:{Path(config.data).name}"
    if config.column_map:
        check_columns(frame, config.column_map)
        frame = frame.rename(columns=dict(config.column_map))
    return graph, frame, source


def _select_biases(config, tags, b):
    available = {
        "conf": bool(tags.confounders),
        "sel": bool(tags.colliders),
        "meas": bool(tags.proxies),
        "int": b is not None,
    }
    why = {
        "conf": "the graph has no observed confounder of the sensitive variable and the outcome",
        "sel": "the graph has no conditioned collider of the sensitive variable and the outcome",
        "meas": "the graph has no proxy of a latent confounder",
        "int": "no second sensitive variable",
    }
    if config.biases == "auto" or config.biases == ["auto"]:
        return [k for k in BIAS_KINDS if available[k]]
    kinds = [config.biases] if isinstance(config.biases, str) else list(config.biases)
    for k in kinds:
        if k not in BIAS_KINDS:
            raise InputError(f"unknown bias kind {k!r}; expected auto or a subset of {list(BIAS_KINDS)}")
        if not available[k]:
            raise StructureError(f"{k} requested but {why[k]}")
    return kinds


def _entry(kind, label, formula, closed, oracle, oracle_name, tol, params=None, note=None):
    e = {
        "kind": kind,
        "label": label,
        "formula": formula,
        "closed_form_value": closed,
        "oracle": oracle_name,
        "oracle_value": oracle,
        "abs_diff": None,
        "tolerance": tol,
        "agrees": None,
        "parameters": params or {},
    }
    if closed is not None and oracle is not None:
        e["abs_diff"] = abs(closed - oracle)
        e["agrees"] = bool(e["abs_diff"] <= tol)
    if note:
        e["note"] = note
    return e


def _groups(config, names):
    if config.adjust == "each" or len(names) == 1:
        return [[n] for n in names]
    return [list(names)]


# -- binary audits ------------------------------------------------------------


def _binary_entries(config, table, kinds, tags, a, y, b, error_mech, latent_cols, exact=None):
    """Entries for a binary table; ``exact`` is the generator's table when known."""
    n = table.sample_count
    mc_tol = config.mc_sigma / math.sqrt(n)
    sd = lambda t, adj=(): tb.stat_disp_adjusted(t, y, a, adj)
    out = []

    def add(entry, truth_fn):
        if exact is not None and truth_fn is not None:
            entry["truth"] = truth_fn(exact)
            ref = entry["closed_form_value"] if entry["closed_form_value"] is not None else entry["oracle_value"]
            entry["truth_abs_diff"] = None if ref is None else abs(ref - entry["truth"])
        out.append(entry)

    if "conf" in kinds:
        for group in _groups(config, tags.confounders):
            oracle = sd(table) - sd(table, group)
            truth = lambda t, g=group: sd(t) - sd(t, g)
            if len(group) == 1:
                p = cf.ConfoundParams.from_table(table, group[0], a, y)
                add(_entry("conf", f"conf[{group[0]}]", "conf.binary.general", cf.conf_bias_binary(p), oracle,
                           "StatDisp - StatDisp_Z", config.exact_tol, p.as_dict()), truth)
            else:
                add(_entry("conf", f"conf[{','.join(group)}]", "conf.binary.joint", None, oracle,
                           "StatDisp - StatDisp_Z", config.exact_tol,
                           note="no closed form for joint adjustment on several confounders"), truth)

    if "sel" in kinds:
        for group in _groups(config, tags.colliders):
            oracle = sd(table, group) - sd(table)
            truth = lambda t, g=group: sd(t, g) - sd(t)
            if len(group) == 1:
                p = cf.SelectionParams.from_table(table, group[0], a, y)
                add(_entry("sel", f"sel[{group[0]}]", "sel.binary.general", cf.sel_bias_binary_general(p), oracle,
                           "StatDisp_W - StatDisp", config.exact_tol, p.as_dict()), truth)
            else:
                add(_entry("sel", f"sel[{','.join(group)}]", "sel.binary.joint", None, oracle,
                           "StatDisp_W - StatDisp", config.exact_tol,
                           note="no closed form for joint adjustment on several colliders"), truth)

    if "meas" in kinds:
        if error_mech is None:
            raise InputError("measurement bias needs the error mechanism P(T|Z) (--error-mech e0,e1)")
        for t in tags.proxies:
            sub = table.marginal([a, t, y])
            do = [cf.effect_restoration_do(sub, error_mech, v, a, t, y) for v in (0, 1)]
            closed = sd(table, [t]) - (do[1] - do[0])
            z = latent_cols.get(t)
            oracle = None if z is None else sd(table, [t]) - sd(table, [z])
            k = 1 - error_mech[0] - error_mech[1]
            params = {"error_mech": list(error_mech)}
            note = None
            if table.prob({a: 1}) == 0.5:
                mp = cf.MeasurementParams.from_table(sub, error_mech, a, t, y)
                params["qr_form_value"] = cf.meas_bias_binary(mp)
            else:
                note = "Q-R closed form needs P(a1) = 1/2; value from effect restoration"
            if oracle is None:
                note = (note + "; " if note else "") + "latent confounder not in data, no oracle"
            truth = None if z is None else (lambda tt, t=t, z=z: sd(tt, [t]) - sd(tt, [z]))
            add(_entry("meas", f"meas[{t}]", "meas.binary.effect_restoration", closed, oracle,
                       "StatDisp_T - StatDisp_Z", mc_tol / abs(k), params, note), truth)

    if "int" in kinds:
        inter = tb.interaction_term(table, y, a, b)
        by_sd = tb.joint_stat_disp(table, y, a, b) - (
            tb.sd_no_interaction(table, y, a, b, "A") + tb.sd_no_interaction(table, y, a, b, "B"))
        add(_entry("int", "int.intersectional", "int.binary.interaction_term", inter, by_sd,
                   "joint disparity - sum of single effects", config.exact_tol),
            lambda t: tb.interaction_term(t, y, a, b))
        try:
            tb.check_independent(table, a, b, mc_tol)
            note = None
        except InputError as exc:
            note = str(exc)
        for target, s, other in (("A", a, b), ("B", b, a)):
            closed = table.prob({other: 1}) * inter
            oracle = tb.stat_disp(table, y, s) - tb.sd_no_interaction(table, y, a, b, target)
            e = _entry("int", f"int.individual[{s}]", "int.binary.individual", closed, oracle,
                       "StatDisp - SD without interaction", mc_tol, note=note)
            if note:
                e["agrees"] = None
            add(e, lambda t, s=s, target=target: tb.stat_disp(t, y, s) - tb.sd_no_interaction(t, y, a, b, target))
    return out


# -- linear audits ------------------------------------------------------------


def _linear_entries(config, frame, cov, kinds, tags, a, y, b, latent_cols, graph, model=None):
    n = cov.n
    mc_tol = config.mc_sigma * math.sqrt(cov.var(y)) / math.sqrt(n)
    bp = lambda ctrl, c=cov: lin.beta_partial(c, y, a, list(ctrl))
    out = []

    def add(entry, truth=None):
        if truth is not None:
            entry["truth"] = truth
            ref = entry["closed_form_value"] if entry["closed_form_value"] is not None else entry["oracle_value"]
            entry["truth_abs_diff"] = None if ref is None else abs(ref - truth)
        out.append(entry)

    if "conf" in kinds:
        for group in _groups(config, tags.confounders):
            label = f"conf[{','.join(group)}]"
            if len(group) == 1:
                closed = lin.conf_bias_cov(cov, y, a, group[0])
                truth = lin.conf_bias_linear(model) if model is not None and model.structure == "confounding" else None
                add(_entry("conf", label, "conf.linear.covariance", closed, bp(()) - bp(group),
                           "b_ya - b_ya.z (normal equations)", config.exact_tol), truth)
            elif len(group) == 2:
                corr = cov.correlation()
                # The graph makes Z and W independent; the closed form drops the
                # sample corr(Z, W), so agreement is judged at Monte Carlo scale.
                closed = lin.two_conf_bias_cov(cov, y, a, group[0], group[1], tol=math.inf)
                oracle = lin.beta(corr, y, a) - lin.beta_partial(corr, y, a, group)
                truth = lin.conf_bias_two(model) if model is not None and model.structure == "two_confounder" else None
                add(_entry("conf", label, "conf.linear.two_confounder", closed, oracle,
                           "b_ya - b_ya.zw on correlations", config.mc_sigma / math.sqrt(n),
                           {"corr_zw": corr.cov(group[0], group[1])}, note="standardized units"), truth)
            else:
                add(_entry("conf", label, "conf.linear.joint", None, bp(()) - bp(group),
                           "b_ya - b_ya.Z (normal equations)", config.exact_tol,
                           note="no closed form for more than two confounders"))

    if "sel" in kinds:
        for group in _groups(config, tags.colliders):
            label = f"sel[{','.join(group)}]"
            oracle = bp(group) - bp(())
            if len(group) == 1:
                truth = lin.sel_bias_linear(model) if model is not None and model.structure == "colliding" else None
                add(_entry("sel", label, "sel.linear.covariance", lin.sel_bias_cov(cov, y, a, group[0]), oracle,
                           "b_ya.w - b_ya (normal equations)", config.exact_tol), truth)
            else:
                add(_entry("sel", label, "sel.linear.joint", None, oracle, "b_ya.W - b_ya (normal equations)",
                           config.exact_tol, note="no closed form for several colliders"))

    if "meas" in kinds:
        for t in tags.proxies:
            z = latent_cols.get(t)
            truth = lin.meas_bias_linear(model) if model is not None and model.structure == "measurement" else None
            if z is None:
                note = "latent confounder not in data"
                closed = None
                if graph.is_linear:
                    # Coefficients and variances from the graph itself.
                    zt = [p for p in graph.parents(t) if graph.node(p).latent][0]
                    c = lin.CovMatrix.from_graph(graph)
                    closed = lin.meas_bias_coef(graph.coefficient(zt, a), graph.coefficient(zt, y),
                                                graph.coefficient(zt, t), c.var(zt), c.var(a), c.var(t))
                    note += "; closed form from graph coefficients"
                add(_entry("meas", f"meas[{t}]", "meas.linear.coefficients", closed, None, None,
                           config.exact_tol, note=note), truth)
            else:
                closed = lin.beta_partial1(cov, y, a, t) - lin.beta_partial1(cov, y, a, z)
                add(_entry("meas", f"meas[{t}]", "meas.linear.covariance", closed, bp([t]) - bp([z]),
                           "b_ya.t - b_ya.z (normal equations)", config.exact_tol), truth)

    if "int" in kinds:
        check_binary_frame(frame, [a, b])
        covs = [p for p in graph.parents(y) if p not in (a, b) and p in frame.columns and not graph.node(p).latent]
        with_int = lin.ols_fit(frame, y, [a, b, *covs], (a, b))
        without = lin.ols_fit(frame, y, [a, b, *covs])
        b3 = with_int[f"{a}:{b}"]
        cells = {(i, j): frame.loc[(frame[a] == i) & (frame[b] == j), y] for i in (0, 1) for j in (0, 1)}
        if any(len(c) < 2 for c in cells.values()):
            raise lin.CollinearityError(f"an ({a}, {b}) cell has fewer than two rows")
        contrast = cells[1, 1].mean() - cells[0, 1].mean() - cells[1, 0].mean() + cells[0, 0].mean()
        se = math.sqrt(sum(c.var(ddof=1) / len(c) for c in cells.values()))
        spec = model if isinstance(model, lin.InteractionLinearSpec) else None
        add(_entry("int", "int.intersectional", "int.linear.product_coefficient", b3, contrast,
                   "cell-mean interaction contrast", config.mc_sigma * se, {"beta3": b3}),
            None if spec is None else lin.int_bias_linear(spec))
        for s, other in ((a, b), (b, a)):
            p_other = float((frame[other] == 1).mean())
            closed = b3 * p_other
            oracle = without[s] - with_int[s]
            add(_entry("int", f"int.individual[{s}]", "int.linear.individual", closed, oracle,
                       "b'_s - b_s (fits without and with product)", mc_tol, {"beta3": b3, f"P({other}=1)": p_other}),
                None if spec is None else lin.int_bias_linear(spec, "A" if s == a else "B"))
    return out


# -- entry point --------------------------------------------------------------


def run_audit(config: AuditConfig) -> dict:
    """Run one audit and return the report as a JSON-ready dict."""
    graph, frame, source = _resolve(config)
    sens = list(config.sensitive) or list(graph.with_role("sensitive"))
    if not sens:
        raise StructureError("no sensitive variable given or marked in the graph")
    a = sens[0]
    b = sens[1] if len(sens) > 1 else None
    if config.outcome:
        y = config.outcome
    else:
        outs = graph.with_role("outcome")
        if len(outs) != 1:
            raise StructureError("the graph must mark exactly one outcome node or --outcome must be given")
        y = outs[0]
    tags = classify_structure(graph, a, y)
    if b is None and tags.second_sensitive and len(config.sensitive) == 0:
        b = tags.second_sensitive[0]
    if b is not None and b not in graph.names:
        raise StructureError(f"second sensitive variable {b} is not in the graph")
    kinds = _select_biases(config, tags, b)

    # Latent parents of each proxy that happen to be present as columns.
    latent_cols = {}
    for t in tags.proxies:
        zs = [p for p in graph.parents(t) if graph.node(p).latent and p in frame.columns]
        if zs:
            latent_cols[t] = zs[0]
    used = [y, a, *tags.confounders, *tags.colliders, *tags.proxies, *latent_cols.values()]
    if "int" in kinds:
        used.append(b)
    used = list(dict.fromkeys(used))
    check_columns(frame, used)

    error_mech = config.error_mech
    if error_mech is None and config.scm is not None and config.scm.structure == "binary_measurement":
        error_mech = config.scm.error_mech

    binary = is_binary_column(frame[y])
    if binary:
        data = check_binary_frame(frame, used)
        table = tb.from_samples(data)
        exact = enumerate_joint(config.scm) if config.scm is not None and config.scm.structure.startswith("binary") else None
        if exact is not None:
            exact = exact.marginal(used)
        entries = _binary_entries(config, table, kinds, tags, a, y, b, error_mech, latent_cols, exact)
        n = table.sample_count
        concurrent = None
        if len(kinds) > 1 or (b is not None and tags.confounders):
            spec = cf.ConcurrentSpec(y, a, tags.confounders, tags.colliders, tags.proxies, b)
            concurrent = cf.concurrent_bias(table, spec)
    else:
        numeric = [c for c in used if not ("int" in kinds and c in (a, b))]
        data = check_numeric_frame(frame, used)
        cov = lin.sample_moments(data[numeric]) if numeric else None
        model = None
        if config.scm is not None:
            if config.scm.structure in LINEAR_STRUCTURES:
                model = config.scm.path_model()
            elif config.scm.structure == "linear_interaction":
                model = config.scm.interaction_spec()
        if "int" in kinds:
            covs = [p for p in graph.parents(y) if p not in (a, b) and p in frame.columns]
            data = check_numeric_frame(frame, list(dict.fromkeys(used + covs)))
        entries = _linear_entries(config, data, cov, kinds, tags, a, y, b, latent_cols, graph, model)
        n = len(data)
        concurrent = None

    report = {
        "format_version": FORMAT_VERSION,
        "tool": "causalbias",
        "version": __version__,
        "mode": "binary" if binary else "linear",
        "run": {
            "source": source,
            "seed": None if config.scm is None else int(config.scm.seed),
            "sample_count": int(n),
            "sensitive": [a] + ([b] if b else []),
            "outcome": y,
            "adjust": config.adjust,
            "biases": kinds,
        },
        "structure": {
            "confounders": list(tags.confounders),
            "latent_confounders": list(tags.latent_confounders),
            "colliders": list(tags.colliders),
            "proxies": list(tags.proxies),
            "second_sensitive": list(tags.second_sensitive),
        },
        "biases": entries,
    }
    if concurrent is not None:
        report["concurrent"] = concurrent
    if config.timestamp:
        report["run"]["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    report["ok"] = all(e["agrees"] is not False for e in entries)
    return report


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_report(report: dict) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
