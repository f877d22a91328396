import numpy as np
import pytest

from pjstrack.solvers import normalize_atoms

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def accept():
    """Record one pass/fail line per acceptance criterion."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dictionary(rng, m, n):
    return normalize_atoms(rng.standard_normal((m, n)))


def lasso_cd(D, y, lam, sweeps=5000, tol=1e-14):
    """Cyclic coordinate descent for 1/2||y - Dc||^2 + lam ||c||_1."""
    c = np.zeros(D.shape[1])
    r = np.array(y, dtype=float)
    sq = np.sum(D * D, axis=0)
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(D.shape[1]):
            rho = D[:, j] @ r + sq[j] * c[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / sq[j]
            if new != c[j]:
                r += D[:, j] * (c[j] - new)
                biggest = max(biggest, abs(new - c[j]))
                c[j] = new
        if biggest < tol:
            break
    return c


def lasso_objective(D, y, c, lam):
    r = y - D @ c
    return 0.5 * r @ r + lam * np.abs(c).sum()
