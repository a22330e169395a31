"""Fast built-in invariant checks, run by ``mmse-audit verify``."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import approx, bounds, distributions as dist, models, numerics

CHECKS: list[tuple[str, Callable[[], bool]]] = []


def check(fn):
    CHECKS.append((fn.__name__, fn))
    return fn


@check
def sym_eig_reconstructs():
    g = np.random.default_rng(0)
    for d in (1, 3, 7, 20):
        m = g.normal(size=(d, d))
        m = m + m.T
        e = numerics.sym_eig(m)
        q = e.eigenvectors
        scale = np.max(np.abs(m))
        if np.max(np.abs(e.reconstruct() - m)) > 1e-9 * scale:
            return False
        if np.max(np.abs(q.T @ q - np.eye(d))) > 1e-10:
            return False
    return True


@check
def spd_sqrt_squares_back():
    g = np.random.default_rng(1)
    b = g.normal(size=(6, 6))
    m = b @ b.T + 0.5 * np.eye(6)
    r = numerics.spd_sqrt(m)
    return np.max(np.abs(r @ r - m)) <= 1e-9 * np.max(np.abs(m))


@check
def gradients_match_finite_differences():
    g = np.random.default_rng(2)
    xs, ss = g.normal(size=(30, 3)), g.random(30)
    hyps = [
        models.Logistic(g.normal(size=3), 0.2),
        models.ShallowNet(g.normal(size=(5, 3)), g.normal(size=5), g.normal(size=5), -0.1),
    ]
    for h in hyps:
        layout, flat = models._Layout.from_hypothesis(h)
        _, grad = models.loss_and_grad(h, xs, ss)
        _, gflat = models._Layout.from_hypothesis(grad)
        for i in range(flat.size):
            e = np.zeros_like(flat)
            e[i] = 1e-6
            up = models.loss_and_grad(layout.to_hypothesis(flat + e), xs, ss)[0]
            dn = models.loss_and_grad(layout.to_hypothesis(flat - e), xs, ss)[0]
            num = (up - dn) / 2e-6
            if abs(num - gflat[i]) > 1e-5 * max(abs(gflat[i]), 1e-4):
                return False
    return True


@check
def bernstein_variance_is_pairwise():
    w = np.random.default_rng(3).random(200)
    return math.isclose(bounds.sample_variance_pairwise(w), float(np.var(w, ddof=1)), rel_tol=1e-12)


@check
def reference_concentration_values():
    return (
        abs(bounds.eps_c_hoeffding(500, 0.05) - 0.05473) < 1e-4
        and abs(bounds.eps_g_compression(24000, 50000, 0.05) - 0.408) < 1e-3
    )


@check
def ccg_general_matches_diag():
    for p, d, v0, v1, sig in [(0.25, 1, 1.0, 3.0, 1.0), (0.4, 4, 0.5, 2.0, 0.7), (0.6, 9, 2.0, 1.0, 2.5)]:
        mu0 = np.zeros(d)
        mu1 = np.full(d, 2.0 / math.sqrt(d))
        g = approx.eps_a_ccg_general(p, mu0, mu1, v0 * np.eye(d), v1 * np.eye(d), sig)
        if abs(g - approx.eps_a_ccg_diag(p, mu0, mu1, v0, v1, sig, d)) > 1e-9:
            return False
    return True


@check
def closed_form_log_odds_match_densities():
    x = np.linspace(-3.0, 4.0, 9)[:, None]
    for m in (dist.BSC(0.25, 0.25), dist.CCGDiag(0.25, -1.0, 1.0, 1.0, 3.0, 1)):
        ratio = math.log(m.p / (1 - m.p)) + m.class_log_density(x, 1.0, 1) - m.class_log_density(x, 1.0, 0)
        if np.max(np.abs(dist.theta_sigma(m, 1.0, x) - ratio)) > 1e-10:
            return False
    return True


@check
def sampling_is_deterministic():
    m = dist.RingMixture(3, 2.0)
    a, b = dist.sample(m, 100, 2.0, 42), dist.sample(m, 100, 2.0, 42)
    return np.array_equal(a.xs, b.xs) and np.array_equal(a.ss, b.ss)


def run_all(echo: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
        except Exception as exc:  # report every failure, keep going
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        echo(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok &= passed
    return ok
