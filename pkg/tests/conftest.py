import numpy as np
import pytest

from hmclab import models
from hmclab.design import build_design, build_response, load_dataset

WARPBREAKS_FORMULA = "breaks ~ wool*tension"
BIRTHWT_FORMULA = "low ~ age + lwt + race2 + smoke + ptd + ht + ui + ftv2"


@pytest.fixture(scope="session")
def warpbreaks():
    table = load_dataset("warpbreaks")
    X, names = build_design(table, WARPBREAKS_FORMULA)
    return table, X, build_response(table, WARPBREAKS_FORMULA), names


@pytest.fixture(scope="session")
def birthwt():
    table = load_dataset("birthwt")
    X, names = build_design(table, BIRTHWT_FORMULA)
    return table, X, build_response(table, BIRTHWT_FORMULA), names


def synthetic_glmm(seed=7, n_groups=10, per_group=3):
    """Poisson counts shaped like the gopher-tortoise survey: intercept,
    two year indicators and a prevalence covariate, one intercept per site."""
    rng = np.random.default_rng(seed)
    n = n_groups * per_group
    year = np.tile(np.arange(per_group), n_groups)
    X = np.column_stack(
        [np.ones(n), year == 1, year == 2, rng.uniform(0, 80, n)]
    ).astype(float)
    Z = np.kron(np.eye(n_groups), np.ones((per_group, 1)))
    u = rng.normal(0, 0.7, n_groups)
    eta = X @ np.array([-0.1, -0.6, -0.4, 0.02]) + Z @ u
    y = rng.poisson(np.exp(eta)).astype(float)
    return models.PoissonGlmmData(y, X, Z)


@pytest.fixture(scope="session")
def glmm_data():
    return synthetic_glmm()


# Acceptance-criterion verdicts, printed at the end of every pytest run.
ACCEPTANCE_RESULTS: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
