"""End-to-end acceptance criteria 1 to 9.

Each test prints one ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
numbers, then asserts. Sweeps run at desk scale (10^5 oracle rows, a few runs).
"""

import math

import numpy as np
import pytest

from mmse_audit import checks, numerics
from mmse_audit.approx import (
    ccg_class_moments,
    ccg_quadratic_coeffs,
    eps_a_bsc_series,
    eps_a_ccg_diag,
    eps_a_ccg_diag_forms,
    eps_a_ccg_general,
    eps_a_mc,
)
from mmse_audit.bounds import eps_c_hoeffding, eps_g_compression
from mmse_audit.distributions import CCGDiag, sample
from mmse_audit.experiment import ExperimentConfig, emit_csv, run_audit
from mmse_audit.models import fit_logistic_closed_form

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return _report


def raw(rows):
    assert not [r["error"] for r in rows if r.get("error")]
    return rows


def by_x(rows, key):
    out = {}
    for r in rows:
        out.setdefault(r["x"], []).append(r[key])
    return {x: np.array(v, dtype=float) for x, v in out.items()}


def test_criterion_1_concentration_arithmetic(report):
    h = eps_c_hoeffding(500, 0.05)
    g = eps_g_compression(24000, 50000, 0.05)
    ok = abs(h - 0.05473) <= 1e-4 and abs(g - 0.408) <= 1e-3
    assert report(1, ok, f"eps_c_hoeffding={h:.6f} eps_g={g:.6f}")


def test_criterion_2_equal_covariance_zero_error(report):
    model = CCGDiag(0.25, -1.0, 1.0, 1.0, 1.0, 1)
    h = fit_logistic_closed_form(sample(model, 10**6, 1.0, 2001), model)
    est = eps_a_mc(model, 1.0, h, 10**6, 2002)
    ok = est.value < 1e-4 + 3 * est.se
    assert report(2, ok, f"eps_a_mc={est.value:.3e} se={est.se:.3e}")


def _ccg_grid(n=50, seed=3):
    g = np.random.default_rng(seed)
    for _ in range(n):
        d = int(g.integers(1, 11))
        yield dict(p=float(g.uniform(0.1, 0.9)), mu0=g.normal(size=d), mu1=g.normal(size=d),
                   var0=float(g.uniform(0.2, 4.0)), var1=float(g.uniform(0.2, 4.0)),
                   sigma=float(g.uniform(0.2, 3.0)), d=d)


def test_criterion_3_cross_path_identities(report):
    grid = list(_ccg_grid())
    worst_gd = worst_forms = 0.0
    for q in grid:
        eye = np.eye(q["d"])
        gen = eps_a_ccg_general(q["p"], q["mu0"], q["mu1"], q["var0"] * eye, q["var1"] * eye, q["sigma"])
        diag = eps_a_ccg_diag(q["p"], q["mu0"], q["mu1"], q["var0"], q["var1"], q["sigma"], q["d"])
        rational, poly = eps_a_ccg_diag_forms(q["p"], q["mu0"], q["mu1"], q["var0"], q["var1"], q["sigma"], q["d"])
        worst_gd = max(worst_gd, abs(gen - diag))
        worst_forms = max(worst_forms, abs(rational - poly))

    worst_z = 0.0
    g = np.random.default_rng(4)
    for q in grid[:5]:
        eye = np.eye(q["d"])
        qf = ccg_quadratic_coeffs(q["p"], q["mu0"], q["mu1"], q["var0"] * eye, q["var1"] * eye, q["sigma"])
        for mu, var in ((q["mu0"], q["var0"]), (q["mu1"], q["var1"])):
            cov = (var + q["sigma"] ** 2) * eye
            mom = ccg_class_moments(qf, mu, cov)
            xs = mu + math.sqrt(var + q["sigma"] ** 2) * g.standard_normal((10**6, q["d"]))
            t = qf(xs)
            c = t - t.mean()
            se_mean = t.std(ddof=1) / 1e3
            se_var = math.sqrt(max(np.mean(c**4) - np.mean(c**2) ** 2, 0.0)) / 1e3
            worst_z = max(worst_z, abs(t.mean() - mom.mean) / se_mean, abs(t.var(ddof=1) - mom.var) / se_var)
    ok = worst_gd <= 1e-9 and worst_forms <= 1e-9 and worst_z <= 3.0
    assert report(3, ok, f"max|general-diag|={worst_gd:.2e} max|rational-poly|={worst_forms:.2e} "
                         f"max moment z={worst_z:.2f}")


def test_criterion_4_asymptotic_decay(report):
    sigma, p_noise = 100.0, 0.25
    bsc = eps_a_bsc_series(0.25, p_noise, sigma) * sigma**2
    bsc_target = 3 * (1 - 2 * p_noise) ** 2 / 4
    ccg = eps_a_ccg_diag(0.25, -1.0, 1.0, 1.0, 3.0, sigma, 1) * sigma**4
    ccg_target = 1 * (3.0 - 1.0) ** 2 / 8
    bsc_ok = abs(bsc / bsc_target - 1) <= 0.01
    ccg_ok = abs(ccg / ccg_target - 1) <= 0.01
    report(4, bsc_ok and ccg_ok,
           f"bsc sigma^2*eps_a={bsc:.6f} (target {bsc_target:.6f}, {'ok' if bsc_ok else 'off'}); "
           f"ccg sigma^4*eps_a={ccg:.6f} (target {ccg_target:.6f}, {'ok' if ccg_ok else 'off'})")
    assert ccg_ok
    assert bsc_ok


SWEEP_COMMON = {"axis": "sigma", "hypothesis": "logistic", "n_train": 500, "n_oracle": 10**5, "runs": 10}
SIGMA_SWEEPS = [
    {**SWEEP_COMMON, "model": {"kind": "bsc", "p": 0.25, "p_noise": 0.25},
     "grid": [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0], "seed": 31},
    {**SWEEP_COMMON, "model": {"kind": "ccg_diag", "p": 0.25, "mu0": [-1.0], "mu1": [1.0], "var0": 1.0, "var1": 3.0},
     "grid": [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0], "seed": 32},
]


def test_criterion_5_sigma_sweep_coverage_and_gap(report):
    cells = covered = 0
    worst = (1.0, None)
    ratios = []
    for spec in SIGMA_SWEEPS:
        rows = raw(run_audit(ExperimentConfig.from_dict(spec)))
        for r in rows:
            cells += 1
            covered += r["lb_train"] <= r["mmse_mc"] + 3 * r["mmse_se"]
        gap = by_x([{**r, "g": r["mmse_mc"] - r["lb_train"]} for r in rows], "g")
        slack = by_x([{**r, "s": r["eps_c_b"] + r["eps_a"]} for r in rows], "s")
        for x in gap:
            ratio = gap[x].mean() / slack[x].mean()
            ratios.append(ratio)
            if abs(math.log(ratio)) > abs(math.log(worst[0])):
                worst = (ratio, (spec["model"]["kind"], x))
    coverage = covered / cells
    ok = coverage >= 0.95 and all(0.5 <= q <= 2.0 for q in ratios)
    assert report(5, ok, f"coverage={coverage:.3f} over {cells} cells; gap/(eps_C+eps_A) in "
                         f"[{min(ratios):.3f}, {max(ratios):.3f}], worst {worst[0]:.3f} at {worst[1]}")


def test_criterion_6_dimension_behavior(report):
    base = {
        "model": {"kind": "ccg_diag", "p": 0.25, "mu0": [-1.0], "mu1": [1.0], "var0": 1.0, "var1": 3.0},
        "axis": "dimension", "grid": [1, 5, 10, 15, 20], "n_train": 1000, "n_oracle": 10**5,
        "n_oracle_fit": 20000, "runs": 3, "seed": 61,
    }
    lin = raw(run_audit(ExperimentConfig.from_dict({**base, "hypothesis": "logistic"})))
    net = raw(run_audit(ExperimentConfig.from_dict(
        {**base, "hypothesis": "shallow_net", "train": {"width": 10, "epochs": 5000}})))
    lin_lb = {x: v.mean() for x, v in by_x(lin, "lb_train").items()}
    net_lb = {x: v.mean() for x, v in by_x(net, "lb_train").items()}
    ok = all(v > 0 for v in lin_lb.values()) and net_lb[15.0] <= 0 and net_lb[20.0] <= 0
    fmt = lambda d: " ".join(f"{int(k)}:{v:+.4f}" for k, v in sorted(d.items()))
    assert report(6, ok, f"logistic lb {fmt(lin_lb)} | net lb {fmt(net_lb)}")


def test_criterion_7_overfitting_vs_samples(report):
    common = {
        "model": {"kind": "ring", "n_modes": 3, "radius": 2.0}, "sigma": 2.0, "axis": "n_train",
        "grid": [500, 20000], "n_oracle": 10**5, "n_oracle_fit": 20000, "runs": 5, "seed": 71,
    }
    lin = raw(run_audit(ExperimentConfig.from_dict({**common, "hypothesis": "logistic"})))
    net = raw(run_audit(ExperimentConfig.from_dict({
        **common, "hypothesis": "shallow_net", "train": {"width": 10, "epochs": 10000},
        "lr_search": [0.1, 0.01, 0.001]})))
    lin_lb = {x: v.mean() for x, v in by_x(lin, "lb_train").items()}
    net_lb = {x: v.mean() for x, v in by_x(net, "lb_train").items()}
    mmse = by_x(net, "mmse_mc")[20000.0].mean()
    small_gap = lin_lb[500.0] - net_lb[500.0]
    large_gap = abs(net_lb[20000.0] - mmse)
    small_ok, large_ok = small_gap >= 0.05, large_gap <= 0.05
    report(7, small_ok and large_ok,
           f"n=500 logistic-net={small_gap:.4f} (need >= 0.05, {'ok' if small_ok else 'off'}); "
           f"n=20000 |net-mmse|={large_gap:.4f} (need <= 0.05, {'ok' if large_ok else 'off'}); "
           f"lb logistic {lin_lb[500.0]:.4f}/{lin_lb[20000.0]:.4f} net {net_lb[500.0]:.4f}/{net_lb[20000.0]:.4f} "
           f"mmse {mmse:.4f}")
    assert large_ok
    assert small_ok


def test_criterion_8_validation_vacuity(report):
    cfg = ExperimentConfig.from_dict({
        "model": {"kind": "ring", "n_modes": 3, "radius": 2.0}, "sigma": 2.0, "axis": "n_train",
        "grid": [50000], "m_val": 1000, "hypothesis": "shallow_net",
        "train": {"width": 10, "epochs": 5000}, "n_oracle": 10**5, "n_oracle_fit": 20000,
        "runs": 1, "seed": 81,
    })
    r = raw(run_audit(cfg))[0]
    ok = r["lb_val"] <= 0 < r["lb_train"]
    assert report(8, ok, f"C={r['c_bits']} bits eps_g={r['eps_g']:.4f} lb_val={r['lb_val']:+.4f} "
                         f"lb_train={r['lb_train']:+.4f}")


def test_criterion_9_numerical_hygiene(report, tmp_path):
    grad_ok = checks.gradients_match_finite_differences()
    g = np.random.default_rng(9)
    worst_eig = worst_sqrt = 0.0
    for d in (1, 2, 5, 10, 20):
        m = g.normal(size=(d, d))
        sym = m + m.T
        worst_eig = max(worst_eig, np.max(np.abs(numerics.sym_eig(sym).reconstruct() - sym)) / np.max(np.abs(sym)))
        spd = m @ m.T + 0.1 * np.eye(d)
        r = numerics.spd_sqrt(spd)
        worst_sqrt = max(worst_sqrt, np.max(np.abs(r @ r - spd)) / np.max(np.abs(spd)))
    cfg = ExperimentConfig.from_dict({
        "model": {"kind": "bsc", "p": 0.25, "p_noise": 0.25}, "axis": "sigma", "grid": [0.5, 1.0, 2.0],
        "hypothesis": "shallow_net", "train": {"width": 4, "epochs": 200}, "n_train": 300,
        "n_oracle": 5000, "m_val": 100, "runs": 3, "seed": 91,
    })
    a = emit_csv(run_audit(cfg), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_audit(cfg), tmp_path / "b.csv").read_bytes()
    ok = grad_ok and worst_eig <= 1e-9 and worst_sqrt <= 1e-9 and a == b
    assert report(9, ok, f"gradients {'ok' if grad_ok else 'off'}; eig rel err {worst_eig:.1e}; "
                         f"sqrt rel err {worst_sqrt:.1e}; csv identical {a == b}")
