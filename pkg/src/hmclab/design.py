"""Data tables, a small model-formula language, design matrices and QR.

Formula grammar::

    formula := ident "~" term ("+" term)*
    term    := ident | ident ":" ident | ident "*" ident

``a*b`` expands to ``a + b + a:b``. An intercept is always included.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

DATA_DIR_ENV = "HMCLAB_DATA_DIR"
_BUNDLED = Path(__file__).resolve().parent / "data"


class FormulaSyntaxError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class DesignError(ValueError):
    pass


class RankDeficientError(np.linalg.LinAlgError):
    pass


def data_dir() -> Path:
    """Fixture directory; ``$HMCLAB_DATA_DIR`` overrides the bundled one."""
    override = os.environ.get(DATA_DIR_ENV)
    return Path(override) if override else _BUNDLED


@dataclass
class DataTable:
    """Equal-length named columns, each numeric or factor.

    Factor columns hold string values and an ordered ``levels`` list.
    """

    columns: dict[str, np.ndarray]
    levels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DesignError(f"columns have unequal lengths {sorted(lengths)}")
        for name, lev in self.levels.items():
            if name not in self.columns:
                raise DesignError(f"levels given for unknown column {name!r}")
            unknown = set(self.columns[name]) - set(lev)
            if unknown:
                raise DesignError(
                    f"column {name!r} has values {sorted(unknown)} outside its levels"
                )

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def is_factor(self, name) -> bool:
        return name in self.levels

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DesignError(f"unknown column {name!r}") from None

    def __contains__(self, name):
        return name in self.columns


def read_table(csv_path, spec: dict | None = None) -> DataTable:
    """Read a CSV, typing columns per ``spec["columns"]``.

    Columns without a spec entry are numeric if every value parses as a
    float, otherwise factors. Factor levels default to first-appearance
    order unless the column entry pins them.
    """
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    raw = {name: [r[i] for r in rows] for i, name in enumerate(header)}
    col_specs = (spec or {}).get("columns", {})
    columns, levels = {}, {}
    for name, values in raw.items():
        cs = col_specs.get(name, {})
        kind = cs.get("type") or ("numeric" if _all_numeric(values) else "factor")
        if kind == "numeric":
            columns[name] = np.array([float(v) for v in values])
        elif kind == "factor":
            columns[name] = np.array(values, dtype=object)
            levels[name] = list(cs.get("levels") or dict.fromkeys(values))
        else:
            raise DesignError(f"column {name!r}: unknown type {kind!r}")
    return DataTable(columns, levels)


def _all_numeric(values):
    try:
        [float(v) for v in values]
    except ValueError:
        return False
    return True


def load_dataset(name_or_config) -> DataTable:
    """Load a dataset from its JSON config (path or fixture name).

    ``"warpbreaks"`` resolves to ``<data_dir>/warpbreaks.json``; the CSV
    named inside the config is looked up next to the config file.
    """
    path = Path(name_or_config)
    if path.suffix != ".json":
        path = data_dir() / f"{name_or_config}.json"
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    csv_path = path.parent / spec.get("csv", path.with_suffix(".csv").name)
    if not csv_path.exists():
        raise FileNotFoundError(
            f"dataset CSV {csv_path} not found (source: {spec.get('source', '?')})"
        )
    return read_table(csv_path, spec)


@dataclass(frozen=True)
class FormulaAst:
    response: str
    terms: tuple[tuple[str, ...], ...]
    intercept: bool = True

    @property
    def variables(self) -> list[str]:
        return list(dict.fromkeys(v for t in self.terms for v in t))


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_.][A-Za-z0-9_.]*)|(?P<op>[~+:*]))")


def _tokenize(text):
    pos, tokens = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise FormulaSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = "ident" if m.group("ident") else "op"
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def parse_formula(text: str) -> FormulaAst:
    tokens = _tokenize(text)
    i = 0

    def expect(kind, value=None):
        nonlocal i
        tk = tokens[i]
        if tk[0] != kind or (value is not None and tk[1] != value):
            want = value or kind
            found = tk[1] or "end of input"
            raise FormulaSyntaxError(f"expected {want!r}, found {found!r}", tk[2])
        i += 1
        return tk

    response = expect("ident")[1]
    expect("op", "~")
    raw = []
    while True:
        _, left, offset = expect("ident")
        if tokens[i][:2] in (("op", ":"), ("op", "*")):
            op = tokens[i][1]
            i += 1
            right = expect("ident")[1]
            if op == "*":
                raw += [((left,), offset), ((right,), offset)]
            raw.append(((left, right), offset))
        else:
            raw.append(((left,), offset))
        if tokens[i][0] == "end":
            break
        expect("op", "+")

    terms, seen = [], set()
    for term, offset in raw:
        key = frozenset(term)
        if len(key) < len(term):
            raise FormulaSyntaxError(f"self-interaction {term[0]}:{term[1]}", offset)
        if key in seen:
            continue
        if len(term) == 2 and not all(frozenset([v]) in seen for v in term):
            raise FormulaSyntaxError(
                f"interaction {term[0]}:{term[1]} needs both main effects first",
                offset,
            )
        seen.add(key)
        terms.append(term)
    return FormulaAst(response, tuple(terms))


def _expand(table: DataTable, var: str):
    values = table[var]
    if not table.is_factor(var):
        return [values.astype(float)], [var]
    levels = table.levels[var]
    if len(levels) < 2:
        raise DesignError(f"factor {var!r} has fewer than 2 levels")
    cols = [(values == lev).astype(float) for lev in levels[1:]]
    return cols, [f"{var}{lev}" for lev in levels[1:]]


def build_design(table: DataTable, formula: FormulaAst | str):
    """Treatment-coded design matrix and its column names.

    Returns
    -------
    X : ndarray, shape (n_rows, n_columns)
    names : list of str
        ``(Intercept)`` first, then ``var``/``varLEVEL``/``a:b`` names.
        For ``a:b`` the columns of ``a`` vary fastest.
    """
    if isinstance(formula, str):
        formula = parse_formula(formula)
    for var in formula.variables:
        if var not in table:
            raise DesignError(f"formula variable {var!r} not in table")
    cols = [np.ones(table.n_rows)]
    names = ["(Intercept)"]
    for term in formula.terms:
        if len(term) == 1:
            c, n = _expand(table, term[0])
        else:
            ca, na = _expand(table, term[0])
            cb, nb = _expand(table, term[1])
            c = [a * b for b in cb for a in ca]
            n = [f"{x}:{y}" for y in nb for x in na]
        cols += c
        names += n
    return np.column_stack(cols), names


def build_response(table: DataTable, formula: FormulaAst | str) -> np.ndarray:
    if isinstance(formula, str):
        formula = parse_formula(formula)
    if table.is_factor(formula.response):
        raise DesignError(f"response {formula.response!r} must be numeric")
    return table[formula.response].astype(float)


def build_random_intercept(table: DataTable, group_col: str):
    """Indicator matrix ``Z`` with ``Z[r, g] = 1`` iff row ``r`` is in group ``g``."""
    values = table[group_col]
    if table.is_factor(group_col):
        groups = list(table.levels[group_col])
    else:
        groups = list(dict.fromkeys(values.tolist()))
    index = {g: j for j, g in enumerate(groups)}
    Z = np.zeros((table.n_rows, len(groups)))
    Z[np.arange(table.n_rows), [index[v] for v in values]] = 1.0
    return Z, groups


def householder_qr(X):
    """Thin QR by Householder reflections, ``R`` with non-negative diagonal."""
    A = np.array(X, dtype=float)
    if A.ndim != 2:
        raise DesignError("QR needs a 2-d matrix")
    m, n = A.shape
    if m < n:
        raise RankDeficientError(f"{m}x{n} matrix cannot have full column rank")
    vs = []
    for j in range(n):
        x = A[j:, j]
        norm = np.linalg.norm(x)
        v = x.copy()
        if norm == 0.0:
            vs.append(None)
            continue
        # reflect x onto -sign(x0)*|x|*e1 to avoid cancellation
        v[0] += np.copysign(norm, x[0])
        v /= np.linalg.norm(v)
        A[j:, j:] -= 2.0 * np.outer(v, v @ A[j:, j:])
        vs.append(v)
    R = np.triu(A[:n, :n])
    Q = np.eye(m, n)
    for j in reversed(range(n)):
        v = vs[j]
        if v is not None:
            Q[j:, :] -= 2.0 * np.outer(v, v @ Q[j:, :])
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def qr_reparameterize(X):
    """Thin QR ``X = Q R`` with ``Q^T Q = I`` and ``diag(R) > 0``.

    Raises
    ------
    RankDeficientError
        If some ``|R_ii| < 1e-10 * ||X||_F``.
    """
    Q, R = householder_qr(X)
    tol = 1e-10 * np.linalg.norm(np.asarray(X, dtype=float))
    if np.any(np.abs(np.diag(R)) < tol):
        raise RankDeficientError("design matrix is rank deficient")
    return Q, R


def qr_back_transform(samples_eta, R) -> np.ndarray:
    """Map rows ``eta`` back to ``beta`` by solving ``R beta = eta``."""
    eta = np.atleast_2d(np.asarray(samples_eta, dtype=float))
    R = np.asarray(R, dtype=float)
    if np.any(np.diag(R) == 0):
        raise RankDeficientError("R is singular")
    return solve_triangular(R, eta.T, lower=False).T
