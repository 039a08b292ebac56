"""Acceptance criteria, one test per criterion.

Each check prints a PASS/FAIL line (collected into the pytest summary, or
printed directly with ``python tests/test_acceptance.py``).
"""

import contextlib
import io
import json
import math
import sys
import time

import numpy as np

from ratexp.cli import main as cli_main
from ratexp.engine import TestConfig
from ratexp.montecarlo import DgpSpec, rejection_rate, write_survey_like
from ratexp.oracle import DiscreteDist, check_mps, construct_martingale_coupling, convolve
from ratexp.variants import beta_lower_bound

RESULTS = []
MC_BAND = 0.05 + 2 * math.sqrt(0.05 * 0.95 / 200)  # 0.0808...
DESK = TestConfig(n_boot=200)


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def cli_json(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main([str(a) for a in argv])
    return code, json.loads(buf.getvalue()) if code == 0 else None


def random_dist(rng, scale=3.0):
    k = int(rng.integers(1, 9))
    return DiscreteDist.from_atoms(np.round(rng.normal(0, scale, k), 2), rng.random(k) + 0.05)


def spread_of(rng, base, steps):
    vals, mass = list(base.support), list(base.mass)
    for _ in range(steps):
        i = int(rng.integers(len(vals)))
        h, lam = rng.uniform(0.1, 2.0), rng.uniform(0.2, 0.8)
        v, m = vals.pop(i), mass.pop(i)
        vals += [v - h * (1 - lam), v + h * lam]
        mass += [m * lam, m * (1 - lam)]
    return DiscreteDist.from_atoms(vals, mass)


# ---------------------------------------------------------------------------


def check_1():
    t0 = time.time()
    code, doc = cli_json(["oracle", "thresholds"])
    elapsed = time.time() - t0
    if code != 0:
        return record(1, "population thresholds", False, f"exit code {code}")
    r = doc["report"]
    no_x = r["covariate_design"]["without_x"]
    checks = [abs(r["rho_star"] - 0.616) <= 0.005, abs(r["rho_var"] - 0.445) <= 0.005,
              abs(no_x - 0.521) <= 0.01, elapsed < 10]
    return record(1, "population thresholds", all(checks),
                  f"rho*={r['rho_star']:.4f} (0.616+-0.005), rho_var={r['rho_var']:.4f} (0.445+-0.005), "
                  f"covariate design without X={no_x:.4f} (0.521+-0.01), {elapsed:.1f}s (<10s)")


def check_2():
    t0 = time.time()
    code, doc = cli_json(["oracle", "thresholds", "--no-covariate-design"])
    elapsed = time.time() - t0
    r = doc["report"]
    ok = abs(r["a_star"] - 1.755) <= 0.005 and abs(r["var_eta_at_a_star"] - 0.616) <= 0.001 and elapsed < 5
    return record(2, "two-point deviation", ok,
                  f"a*={r['a_star']:.4f} (1.755+-0.005), V(eta)={r['var_eta_at_a_star']:.4f} "
                  f"(0.616+-0.001), {elapsed:.1f}s (<5s)")


def check_3():
    rng = np.random.default_rng(20240)
    t0 = time.time()
    agree, holds = 0, 0
    for _ in range(500):
        f_psi = random_dist(rng)
        u = rng.random()
        if u < 0.4:
            f_y = spread_of(rng, f_psi, int(rng.integers(1, 4)))
        elif u < 0.8:
            f_y = random_dist(rng)
            f_y = f_y.shift(f_psi.mean - f_y.mean)
        else:
            f_y = random_dist(rng)
        verdict = check_mps(f_y, f_psi, 1e-7).holds
        holds += verdict
        agree += verdict == (construct_martingale_coupling(f_psi, f_y, 1e-7) is not None)
    elapsed = time.time() - t0
    return record(3, "MPS check vs coupling feasibility", agree == 500 and elapsed < 30,
                  f"{agree}/500 agree ({holds} feasible), {elapsed:.1f}s (<30s)")


def check_4():
    t0 = time.time()
    rate = rejection_rate(DgpSpec(rho=1.0, n=800, seed=404), 200, DESK)
    return record(4, "size at desk scale", rate <= MC_BAND,
                  f"rejection {rate:.3f} (<= {MC_BAND:.3f}), {time.time() - t0:.0f}s")


def check_5():
    t0 = time.time()
    low = rejection_rate(DgpSpec(rho=0.45, n=3200, seed=505), 100, DESK)
    high = rejection_rate(DgpSpec(rho=0.70, n=3200, seed=506), 100, DESK)
    return record(5, "power at desk scale", low >= 0.95 and high <= MC_BAND,
                  f"rho=.45: {low:.3f} (>=0.95), rho=.70: {high:.3f} (<= {MC_BAND:.3f}), "
                  f"{time.time() - t0:.0f}s")


def check_6():
    t0 = time.time()
    spec = DgpSpec("shock_demo", n=1600, seed=606)
    shock = rejection_rate(spec, 200, DESK, test="shock")
    naive = rejection_rate(spec, 200, DESK, test="naive")
    return record(6, "shock robustness", shock <= MC_BAND and naive >= 0.9,
                  f"shock test {shock:.3f} (<= {MC_BAND:.3f}), naive {naive:.3f} (>=0.9), "
                  f"{time.time() - t0:.0f}s")


def check_7():
    t0 = time.time()
    rng = np.random.default_rng(707)
    exact = 0
    for _ in range(200):
        psi = random_dist(rng)
        xi_psi = random_dist(rng, 1.0)
        xi_psi = xi_psi.shift(-xi_psi.mean)
        noise = spread_of(rng, xi_psi, int(rng.integers(1, 4)))  # xi_Y + eps
        exact += check_mps(convolve(psi, noise), convolve(psi, xi_psi), 1e-9).holds
    spec = DgpSpec("meas_error", n=2000, seed=708)
    direct = rejection_rate(spec, 200, DESK, test="direct")
    marginal = rejection_rate(spec, 200, DESK, test="full")
    ok = exact == 200 and direct >= 0.9 and marginal <= MC_BAND
    return record(7, "measurement-error robustness", ok,
                  f"{exact}/200 constructed pairs pass, direct {direct:.3f} (>=0.9), "
                  f"marginal {marginal:.3f} (<= {MC_BAND:.3f}), {time.time() - t0:.0f}s")


def check_8():
    a, b = beta_lower_bound(5), beta_lower_bound(20)
    return record(8, "slope bound arithmetic", round(a, 3) == 0.833 and round(b, 3) == 0.952,
                  f"beta_min(5)={a:.5f}, beta_min(20)={b:.5f}")


def check_9(tmp_dir):
    path = tmp_dir / "det.csv"
    write_survey_like(path, n=200, seed=9)
    outs = []
    for threads in (1, 2, 7):
        code, doc = cli_json(["test", path, "--covariates", "--boot", 200, "--seed", 5,
                              "--threads", threads])
        r = doc["report"]
        outs.append((r["statistic"], r["critical_value"], r["p_value"]))
    return record(9, "bit-exact determinism", code == 0 and len(set(outs)) == 1,
                  f"(T, c*, p) over 1/2/7 threads: {outs[0]}, distinct={len(set(outs))}")


def check_10(tmp_dir):
    path, tsv = tmp_dir / "survey.csv", tmp_dir / "groups.tsv"
    write_survey_like(path, n=600, seed=10, c0=1.03)
    code, doc = cli_json(["test", path, "--shock", "multiplicative", "--boot", 500, "--winsorize", 0.95,
                          "--weights-col", "w", "--group-col", "group", "--tsv", tsv])
    ok = code == 0 and tsv.exists()
    detail = f"exit {code}"
    if ok:
        groups = doc["report"]["groups"]
        c_hats = [g["diagnostics"]["c_hat"] for g in groups]
        rows = tsv.read_text().strip().splitlines()
        ok = len(groups) == 3 and len(rows) == 4 and all(abs(c - 1.03) < 0.1 for c in c_hats)
        detail = (f"{len(groups)} groups, c_hat={[round(c, 4) for c in c_hats]}, "
                  f"p={[round(g['p_value'], 3) for g in groups]}, tsv rows={len(rows) - 1}")
    return record(10, "survey-shaped end-to-end smoke test", ok, detail)


# ---------------------------------------------------------------------------


def test_criterion_1_population_thresholds():
    assert check_1()


def test_criterion_2_two_point_deviation():
    assert check_2()


def test_criterion_3_oracle_equivalence():
    assert check_3()


def test_criterion_4_size():
    assert check_4()


def test_criterion_5_power():
    assert check_5()


def test_criterion_6_shock_robustness():
    assert check_6()


def test_criterion_7_measurement_error():
    assert check_7()


def test_criterion_8_beta_bound():
    assert check_8()


def test_criterion_9_determinism(tmp_path):
    assert check_9(tmp_path)


def test_criterion_10_smoke(tmp_path):
    assert check_10(tmp_path)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        checks = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8,
                  lambda: check_9(Path(d)), lambda: check_10(Path(d))]
        results = [c() for c in checks]
    sys.exit(0 if all(results) else 1)
