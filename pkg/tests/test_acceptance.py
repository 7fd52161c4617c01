"""Acceptance suite.

One test per criterion; each prints a single PASS/FAIL line (collected again
in the terminal summary) and then asserts the same condition, so a failing
criterion also fails the run. Tolerances are the stated ones.

The reference-scale experiments (criteria 5 to 7) run the shipped default
configurations with 20 seeds and take a few minutes in total.
"""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from risloc import experiments as ex
from risloc.errors import SingularFim
from risloc.fim import crlb_of_phases, position_fim
from risloc.geometry import ScenarioGeometry, transform_matrix
from risloc.validation import gradient_check, random_instance

from oracles import aoa_jacobian_fd, numerical_position_fim

N_FAMILY = (1, 4, 9)
L_FAMILY = (1, 2)


def family(seed, count):
    rng = np.random.default_rng(seed)
    for k in range(count):
        yield random_instance(rng, N_FAMILY[k % 3], n_antennas=4, n_slots=L_FAMILY[(k // 3) % 2])


def timed(fun, *args):
    t0 = time.perf_counter()
    out = fun(*args)
    return out, time.perf_counter() - t0


# -- 1 ------------------------------------------------------------------------

def test_criterion_1_gradient_oracle(verdict):
    res, secs = timed(gradient_check, 120, 0)
    worst = max(res["max_entry_rel_error"], res["max_crlb_rel_error"])
    ok = worst < 1e-6 and res["instances"] >= 100 and res["crlb_instances"] > 0
    verdict(1, ok, f"{res['instances']} instances ({res['crlb_instances']} with a CRLB), "
                   f"max rel error entries {res['max_entry_rel_error']:.2e}, "
                   f"CRLB {res['max_crlb_rel_error']:.2e} (< 1e-6), {secs:.1f} s")
    assert ok


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_fim_path_equivalence(verdict):
    worst = 0.0
    count = 0
    for inst in family(2, 60):
        s = inst.scenario
        a, d = s.geometry.aoa(), s.geometry.aod()
        T = transform_matrix(s.geometry)
        ref = numerical_position_fim(a.elevation, a.azimuth, d.elevation, d.azimuth, s.gains,
                                     inst.phases, inst.pilot.X, s.array.n_rx, s.array.k,
                                     inst.noise_variance, T.elev_jac, T.azim_jac)
        J = position_fim(inst.kappa(), inst.phases, inst.noise_variance).matrix
        worst = max(worst, np.abs(J - ref).max() / np.abs(ref).max())
        count += 1
    ok = worst < 1e-6
    verdict(2, ok, f"kappa FIM vs finite-difference FIM on {count} instances, "
                   f"max entrywise error / max|J| = {worst:.2e} (< 1e-6)")
    assert ok


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_exact_invariances(verdict):
    from risloc.channel import PilotMatrix
    from risloc.fim import kappa_tensor, varpi

    rng = np.random.default_rng(3)
    phase_err = sigma_err = slot_err = sym_err = 0.0
    min_eig = math.inf
    checked = 0
    while checked < 60:
        n = (4, 9)[checked % 2]
        inst = random_instance(rng, n, n_antennas=4, n_slots=1)
        s = inst.scenario
        K = inst.kappa()
        try:
            f = crlb_of_phases(K, inst.phases, inst.noise_variance)
        except SingularFim:
            continue
        checked += 1
        shift = rng.uniform(-10, 10)
        phase_err = max(phase_err, abs(crlb_of_phases(K, inst.phases + shift,
                                                      inst.noise_variance) / f - 1))
        c = rng.uniform(0.01, 100)
        sigma_err = max(sigma_err, abs(crlb_of_phases(K, inst.phases, c * inst.noise_variance)
                                       / (c * f) - 1))
        L = int(rng.integers(2, 11))
        rep = PilotMatrix(np.repeat(inst.pilot.X, L, axis=1), inst.pilot.p_bs)
        K_rep = kappa_tensor(varpi(s.true_params(), s.geometry.aod(), rep, s.array),
                             transform_matrix(s.geometry))
        slot_err = max(slot_err, abs(crlb_of_phases(K_rep, inst.phases, inst.noise_variance)
                                     * L / f - 1))
        J = position_fim(K, inst.phases, inst.noise_variance).matrix
        scale = np.linalg.norm(J)
        sym_err = max(sym_err, abs(J[0, 1] - J[1, 0]) / scale)
        min_eig = min(min_eig, np.linalg.eigvalsh(J).min() / scale)
    ok = (phase_err < 1e-10 and sigma_err < 1e-12 and slot_err < 1e-12
          and sym_err <= 1e-9 and min_eig >= -1e-9)
    verdict(3, ok, f"{checked} instances: global phase {phase_err:.1e} (< 1e-10), "
                   f"noise scaling {sigma_err:.1e} (< 1e-12), slot law {slot_err:.1e} (< 1e-12), "
                   f"asymmetry {sym_err:.1e} (<= 1e-9), min eigenvalue / |J| {min_eig:.1e} (>= -1e-9)")
    assert ok


# -- 4 ------------------------------------------------------------------------

def test_criterion_4_aoa_jacobian_oracle(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    count = 0
    while count < 500:
        q = [rng.uniform(-80, 80), rng.uniform(-80, 80), 0.0]
        s = [rng.uniform(-80, 80), rng.uniform(-80, 80), rng.uniform(1, 40)]
        # the azimuth has a kink where the MS is level with the element in y
        if math.hypot(q[0] - s[0], q[1] - s[1]) < 1.0 or abs(q[1] - s[1]) < 1e-2:
            continue
        T = transform_matrix(ScenarioGeometry([200.0, 200.0, 0.0], q, [s]))
        analytic = np.vstack([T.elev_jac[:, 0], T.azim_jac[:, 0]])
        fd = aoa_jacobian_fd(q, s, step=1e-5)
        for row in range(2):
            worst = max(worst, np.abs(analytic[row] - fd[row]).max() / np.abs(fd[row]).max())
        count += 1
    ok = worst < 1e-6
    verdict(4, ok, f"{count} geometries, max relative error of elevation/azimuth "
                   f"Jacobians vs finite differences (step 1e-5 m) {worst:.2e} (< 1e-6)")
    assert ok


# -- 5 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def convergence_run():
    return timed(ex.run_convergence, ex.default_config("convergence"))


def test_criterion_5_convergence(verdict, convergence_run):
    rows, secs = convergence_run
    cfg = ex.default_config("convergence")
    traces = {}
    for r in rows:
        traces.setdefault((r["seed"], r["snr_db"]), []).append(r)
    monotone = all(t[0]["crlb"] <= t[0]["crlb_initial"]
                   and all(b["crlb"] <= a["crlb"] for a, b in zip(t, t[1:]))
                   for t in traces.values())
    final = {key: t[-1]["crlb"] for key, t in traces.items()}
    med30 = float(np.median([v for (s, snr), v in final.items() if snr == 30.0]))
    med40 = float(np.median([v for (s, snr), v in final.items() if snr == 40.0]))
    in30 = 0.1 / 3 <= med30 <= 0.1 * 3
    in40 = 0.01 / 3 <= med40 <= 0.01 * 3
    ratios = [traces[(s, 30.0)][0]["crlb_initial"] / traces[(s, 40.0)][0]["crlb_initial"]
              for s in range(cfg.n_seeds)]
    ratio_err = max(abs(x / 10 - 1) for x in ratios)
    ok = monotone and in30 and in40 and ratio_err < 1e-9 and cfg.n_seeds >= 20 and secs < 120
    verdict(5, ok, f"{cfg.n_seeds} seeds: traces non-increasing {monotone}; median optimised "
                   f"CRLB {med30:.3g} at 30 dB (target 0.1 x/3), {med40:.3g} at 40 dB "
                   f"(target 0.01 x/3); fixed-phase 30/40 dB ratio error {ratio_err:.1e} "
                   f"(< 1e-9); {secs:.0f} s (< 120 s)")
    assert ok


# -- 6 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_run():
    return timed(ex.run_sweep, ex.default_config("sweep"))


def test_criterion_6_sweep_trends(verdict, sweep_run):
    rows, secs = sweep_run
    cfg = ex.default_config("sweep")
    means = {(r["n_elements"], r["snr_db"], r["n_slots"]): r["crlb"]
             for r in rows if r["seed"] == -1}
    complete = all(r["status"] == "mean" for r in rows if r["seed"] == -1)
    Ns, snrs, Ls = cfg.ris_sizes, cfg.snr_db, cfg.slots
    in_L = all(means[(n, p, b)] <= means[(n, p, a)]
               for n in Ns for p in snrs for a, b in zip(Ls, Ls[1:]))
    in_snr = all(means[(n, q, L)] <= means[(n, p, L)]
                 for n in Ns for L in Ls for p, q in zip(snrs, snrs[1:]))
    cells = [(L, p) for L in Ls for p in snrs]
    n_ok = sum(all(means[(b, p, L)] <= means[(a, p, L)] for a, b in zip(Ns, Ns[1:]))
               for L, p in cells)
    frac = n_ok / len(cells)
    ok = complete and in_L and in_snr and frac >= 0.9 and secs < 600
    verdict(6, ok, f"{cfg.n_seeds} seeds over L {Ls[0]}..{Ls[-1]}, N {Ns}, SNR {snrs}: "
                   f"non-increasing in L {in_L}, in SNR {in_snr}, in N for {n_ok}/{len(cells)} "
                   f"cells ({frac:.0%}, need >= 90%); {secs:.0f} s (< 600 s)")
    assert ok


# -- 7 ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def position_run():
    return timed(ex.run_position_sweep, ex.default_config("position-sweep"))


def curve(rows, n, axis):
    pts = [(r["ms_x"] if axis == "x" else r["ms_y"], r["crlb"]) for r in rows
           if r["seed"] == -1 and r["n_elements"] == n and r["axis"] == axis]
    pts.sort()
    return [(c, v) for c, v in pts if v != ""], len(pts)


def test_criterion_7_position_trends(verdict, position_run):
    rows, secs = position_run
    cfg = ex.default_config("position-sweep")
    parts, ok = [], secs < 600
    for axis in ("x", "y"):
        for n in cfg.ris_sizes:
            pts, total = curve(rows, n, axis)
            coords, vals = zip(*pts)
            rho = spearmanr(coords, vals).statistic
            rises = vals[-1] > vals[0]
            good = rises and rho > 0.8
            ok = ok and good
            parts.append(f"{axis} N={n}: {vals[0]:.3g} -> {vals[-1]:.3g}, rho {rho:.2f}"
                         + (f" ({total - len(pts)} undefined)" if total > len(pts) else ""))
    verdict(7, ok, f"{cfg.n_seeds} seeds, endpoint rise and Spearman > 0.8 per curve; "
                   + "; ".join(parts) + f"; {secs:.0f} s (< 600 s)")
    assert ok


# -- 8 ------------------------------------------------------------------------

SMALL = {
    "convergence": {"n_seeds": 3},
    "sweep": {"n_seeds": 2, "slots": [1, 2, 3], "ris_sizes": [16, 25]},
    "position-sweep": {"n_seeds": 2, "position_points": 4, "ris_sizes": [16, 25]},
}


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "risloc.cli", *argv],
                          capture_output=True, text=True)


def test_criterion_8_cli_determinism(verdict, tmp_path):
    parts, ok = [], True
    for name, doc in SMALL.items():
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps(doc))
        outputs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / f"{name}-{tag}.csv"
            res = run_cli(name, "--config", str(cfg), "--seed", "11", "--workers", str(workers),
                          "--out", str(out))
            ok = ok and res.returncode == 0
            outputs.append(out.read_bytes() if out.exists() else b"")
        same = outputs[0] == outputs[1] == outputs[2] and outputs[0] != b""
        ok = ok and same
        parts.append(f"{name} {'identical' if same else 'DIFFERENT'}")
    verdict(8, ok, "two serial runs and one 2-worker run per experiment: " + ", ".join(parts))
    assert ok
