"""One test per acceptance criterion; each prints a single PASS/FAIL line.

The characterization matrices for n = 2 and n = 3 are computed once per module
and shared by the criteria that read verdicts from them.
"""

import json
import time

import numpy as np
import pytest

from finslercheck import axioms as ax
from finslercheck import cli, dsl, jets
from finslercheck import connections as cn
from finslercheck.connections import KINDS, SymmetryW, catalogue, custom
from finslercheck.core import BasePoint, geometry, landsberg_identity_residual
from finslercheck.jets import JetContext

import conftest
import oracles

SAMPLES = 50
RANDERS = {2: dsl.randers_beta(2, 0.3, varying=True), 3: dsl.randers_beta(3, 0.6, varying=True)}


@pytest.fixture(scope="module")
def samples():
    return {n: ax.sample_points(spec, SAMPLES, seed=20 + n) for n, spec in RANDERS.items()}


@pytest.fixture(scope="module")
def matrices(samples):
    return {n: ax.characterization_matrix(RANDERS[n], samples[n]) for n in RANDERS}


def _worst(matrices, kinds, suite, names):
    return max(matrices[n][k][suite][c].residual for n in matrices for k in kinds for c in names)


# -- 1 ---------------------------------------------------------------------------------


def test_criterion_01_jet_derivatives(acceptance_line):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0}
    ad_time = 0.0
    for _ in range(20):
        text = oracles.random_smooth_expression(rng, 2)
        expr = dsl.parse(text, 2)
        z0 = rng.uniform(-0.8, 0.8, 4)
        t = time.perf_counter()
        jet = dsl.evaluate(expr, JetContext(z0, order=4, require_slit=False).seeds())
        ad_time += time.perf_counter() - t

        def f(z):
            return dsl.evaluate(expr, list(z))

        for alpha in oracles.multi_indices(4, 4):
            m = sum(alpha)
            if m == 0:
                continue
            fd = oracles.fd_derivative(f, z0, alpha)
            worst[m] = max(worst[m], abs(jet.derivative(alpha) - fd) / max(1.0, abs(fd)))
    # polynomials of degree <= K are reproduced exactly
    K = jets.DEFAULT_ORDER
    poly_err = 0.0
    for degree in range(K + 1):
        text, coeffs = oracles.random_polynomial(rng, 4, degree)
        z0 = rng.uniform(-1, 1, 4)
        ctx = JetContext(z0, order=K, require_slit=False)
        t = time.perf_counter()
        P = dsl.evaluate(dsl.parse(text, 2), ctx.seeds())
        ad_time += time.perf_counter() - t
        P = P if isinstance(P, jets.Jet) else ctx.constant(P)
        for alpha in oracles.multi_indices(4, K):
            want = oracles.polynomial_derivative(coeffs, alpha, z0)
            poly_err = max(poly_err, abs(P.derivative(alpha) - want) / max(1.0, abs(want)))
    total = time.perf_counter() - start
    ok = (max(worst[1], worst[2]) < 1e-4 and max(worst[3], worst[4]) < 1e-2 and poly_err < 1e-12
          and total < 10.0)
    acceptance_line(1, ok, f"AD vs FD rel err by order {[f'{worst[m]:.1e}' for m in (1, 2, 3, 4)]}, "
                           f"polynomials {poly_err:.1e}, AD {ad_time:.2f} s, with oracle {total:.1f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------------


def _random_quadratic_table(rng, n):
    """Symmetric x-dependent metric entries, diagonally dominant on the unit box."""
    table = [[0] * n for _ in range(n)]
    for a in range(n):
        i = rng.integers(1, n + 1)
        table[a][a] = f"{rng.uniform(2.5, 3.5):.3f} + {rng.uniform(-0.5, 0.5):.3f}*x{i}^2"
        for b in range(a + 1, n):
            j = rng.integers(1, n + 1)
            entry = f"{rng.uniform(-0.3, 0.3):.3f}*x{j}"
            table[a][b] = table[b][a] = entry
    return table


def test_criterion_02_riemannian_oracle(acceptance_line):
    rng = np.random.default_rng(202)
    worst_equal = worst_zero = worst_oracle = 0.0
    points = 0
    for trial in range(5):
        n = 2 + trial % 2
        table = _random_quadratic_table(rng, n)
        spec = dsl.riemannian(table)
        a = oracles.metric_entries(table, n)
        for p in ax.sample_points(spec, 10, seed=trial):
            geom = geometry(spec, p)
            Gam, gam, Gb = geom.Gamma.value, geom.gamma_formal.value, geom.berwald.value
            worst_equal = max(worst_equal, np.abs(Gam - gam).max(), np.abs(Gam - Gb).max())
            worst_zero = max(worst_zero, np.abs(geom.C.value).max(), np.abs(geom.landsberg.value).max())
            worst_oracle = max(worst_oracle, np.abs(Gam - oracles.classical_christoffel(a, p.x)).max())
            points += 1
    ok = worst_equal < 1e-8 and worst_zero < 1e-8 and worst_oracle < 1e-9
    acceptance_line(2, ok, f"{points} points: |Gamma-gamma|,|Gamma-G| {worst_equal:.1e}, |C|,|L| "
                           f"{worst_zero:.1e}, vs classical {worst_oracle:.1e}")
    assert ok


# -- 3 ---------------------------------------------------------------------------------


def test_criterion_03_berwald_minus_gamma_is_landsberg(acceptance_line):
    worst, count = 0.0, 0
    for beta in (0.1, 0.3, 0.6):
        for n in (2, 3):
            spec = dsl.randers_beta(n, beta, varying=True)
            for p in ax.sample_points(spec, SAMPLES, seed=30 + n):
                worst = max(worst, landsberg_identity_residual(spec, p))
                count += 1
    ok = worst < 1e-6
    acceptance_line(3, ok, f"max |G - Gamma - L| = {worst:.1e} over {count} Randers points")
    assert ok


# -- 4 ---------------------------------------------------------------------------------


def test_criterion_04_class_axioms(matrices, acceptance_line):
    axioms_ok = all(matrices[n][k]["class_axioms"].passed for n in matrices for k in KINDS)
    axiom_names = ["beta_Psi_wedge_g_omega", "gamma_Psi_g_y", "delta_Psi_wedge_g_omega_bar", "epsilon_y_Dg"]
    worst_axiom = _worst(matrices, KINDS, "class_axioms", axiom_names)
    worst_N = _worst(matrices, KINDS, "class_axioms", ["induced_N_is_barthel"])
    worst_Lam = _worst(matrices, KINDS, "class_axioms", ["Lambda_symmetric_first_two", "Lambda_y_annihilated"])
    ok = axioms_ok and worst_axiom < 1e-6 and worst_N < 1e-7 and worst_Lam < 1e-7
    acceptance_line(4, ok, f"all four pass, n=2,3: axioms {worst_axiom:.1e}, N vs Barthel {worst_N:.1e}, "
                           f"Lambda structure {worst_Lam:.1e}")
    assert ok


# -- 5 ---------------------------------------------------------------------------------


def test_criterion_05_chern_characterization(matrices, samples, acceptance_line):
    chern_ok = all(matrices[n]["chern"]["chern"].passed for n in matrices)
    prime = max(matrices[n]["chern"]["chern"]["delta_prime_y_D2g"].residual for n in matrices)
    berwald_delta = min(matrices[n]["berwald"]["chern"]["delta_Dg_wedge_Dy"].residual for n in matrices)
    cartan_beta = min(matrices[n]["cartan"]["chern"]["beta_T"].residual for n in matrices)
    cartan_fails = all(not matrices[n]["cartan"]["chern"]["beta_T"].passed for n in matrices)
    probe = ax.uniqueness_probe("chern", RANDERS[2], samples[2], trials=20, seed=5)
    ok = (chern_ok and prime < 1e-6 and berwald_delta >= 1e-3 and cartan_fails
          and probe["detected"] == 20 and probe["passed"])
    acceptance_line(5, ok, f"Chern passes (delta' {prime:.1e}); Berwald delta {berwald_delta:.1e}; "
                           f"Cartan beta {cartan_beta:.1e}; probe {probe['detected']}/20")
    assert ok


# -- 6 ---------------------------------------------------------------------------------


def test_criterion_06_cartan_characterization(matrices, samples, acceptance_line):
    cartan_ok = all(matrices[n]["cartan"]["cartan"].passed for n in matrices)
    dg = max(matrices[n]["cartan"]["cartan"]["delta_Dg"].residual for n in matrices)
    others_fail = all(not matrices[n][k]["cartan"]["delta_Dg"].passed
                      for n in matrices for k in ("chern", "hashiguchi"))
    dist = max(max(ax.canonical_agreement(RANDERS[n], samples[n]).values()) for n in samples)
    ok = cartan_ok and dg < 1e-8 and others_fail and dist <= 1e-7
    acceptance_line(6, ok, f"Cartan passes with Dg {dg:.1e}; Chern/Hashiguchi fail delta: {others_fail}; "
                           f"canonical vs Cartan {dist:.1e}")
    assert ok


# -- 7 ---------------------------------------------------------------------------------


def test_criterion_07_identities(matrices, acceptance_line):
    names = ["g_Psi_is_C_wedge", "g_Psi_bar_is_R_minus_L", "Psi_bar_wedge_g_omega", "Psi_bar_wedge_g_omega_bar_is_R", "y_g_T", "y_g_Psi_bar", "y_D2g_wedge_omega_bar", "y_g_DT_bar_is_R", "chained_Dg_T_bar_D2g_DT"]
    worst = _worst(matrices, KINDS, "identities", names)
    worst_R = _worst(matrices, KINDS, "identities", ["R_cyclic", "R_y_annihilated"])
    ok = worst < 1e-6 and worst_R < 1e-7
    acceptance_line(7, ok, f"identities {worst:.1e}, R cyclic / y-annihilated {worst_R:.1e}")
    assert ok


# -- 8 ---------------------------------------------------------------------------------


def _negative_instances():
    p = BasePoint((0.1, 0.2), (1.0, 0.5))
    # a tilde-basis V that cancels the vertical part of the cobasis: not regular
    Vt = [[[f"-y{a + 1}/(y1^2 + y2^2)" if b == c else 0 for c in range(2)] for b in range(2)] for a in range(2)]
    zero = [[[0] * 2] * 2] * 2
    non_regular = custom(zero, Vt, 2, basis_tag="tilde").evaluate(RANDERS[2], p)
    # a degenerate Lagrangian with a regular connection
    degenerate = custom(zero, zero, 2, basis_tag="coordinate").evaluate(
        dsl.LagrangianSpec.from_text("0.5*y1^2", 2), p)
    return [non_regular, degenerate]


def test_criterion_08_omega_nondegeneracy(matrices, samples, acceptance_line):
    positives = [catalogue(k).evaluate(RANDERS[n], samples[n].points[0])
                 for k, n in (("chern", 2), ("cartan", 3), ("berwald", 2))]
    verdicts = [ax.omega_nondegeneracy(cg) for cg in positives + _negative_instances()]
    expected = [True, True, True, False, False]
    consistent = all(v["consistent"] for v in verdicts)
    matches = [v["omega_nondegenerate"] for v in verdicts] == expected
    closed = _worst(matrices, KINDS, "symplectic", ["d_Omega", "Omega_minus_d_hilbert"])
    ok = consistent and matches and closed < 1e-7
    acceptance_line(8, ok, f"verdicts {[v['omega_nondegenerate'] for v in verdicts]} all consistent: "
                           f"{consistent}; dOmega, Omega - d(theta) {closed:.1e}")
    assert ok


# -- 9 ---------------------------------------------------------------------------------


class _AmplifiedW:
    """W^a_bc = g^ad S_dbc with S symmetric in its first two slots (no y condition)."""

    def __init__(self, S):
        self.S = S

    def __call__(self, geom):
        return jets.einsum("ra,abc->rbc", geom.ginv, self.S)


def test_criterion_09_symmetry_invariance(samples, acceptance_line):
    rng = np.random.default_rng(909)
    worst_sym = worst_amp = 0.0
    verdicts_same = True
    for trial in range(10):
        n = 2 + trial % 2
        spec = RANDERS[n]
        pts = samples[n].points[:3]
        kind = KINDS[trial % 4]
        base = catalogue(kind)
        moved = cn.apply_symmetry(base, ax.random_w(rng, n), spec, pts)
        S = rng.uniform(-1, 1, (n, n, n))
        amplified = cn.apply_symmetry(base, SymmetryW(_AmplifiedW(S + S.transpose(1, 0, 2))), spec, pts,
                                      amplified=True)
        for p in pts:
            geom = geometry(spec, p)
            a, b, c = base.at(geom), moved.at(geom), amplified.at(geom)
            worst_sym = max(worst_sym, (a.Psi_bar - b.Psi_bar).max_abs(), (a.R_tilde - b.R_tilde).max_abs(),
                            (a.omega_bar - b.omega_bar).max_abs())
            worst_amp = max(worst_amp, (a.Psi - c.Psi).max_abs(), (a.R_tilde - c.R_tilde).max_abs())
            verdicts_same &= a.is_strongly_regular() == b.is_strongly_regular()
    ok = worst_sym < 1e-8 and worst_amp < 1e-8 and verdicts_same
    acceptance_line(9, ok, f"10 W: Psi-bar, R-tilde, omega-bar {worst_sym:.1e}; amplified Psi, R-tilde "
                           f"{worst_amp:.1e}; strong regularity unchanged: {verdicts_same}")
    assert ok


# -- 10 --------------------------------------------------------------------------------

_CLI_CONFIG = """
[lagrangian]
builtin = "randers_beta"
params = {{ n = 2, beta = 0.3, varying = true }}
{guard}
[sampling]
seed = 8
count = 4

[run]
suites = {suites}
"""


def test_criterion_10_determinism_and_cli(tmp_path, capsys, acceptance_line):
    def write(name, suites='["class_axioms", "chern"]', guard=""):
        p = tmp_path / name
        p.write_text(_CLI_CONFIG.format(suites=suites, guard=guard))
        return str(p)

    failing = write("fail.toml")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    codes = {"fail": cli.main(["check", failing, "--json", str(a)])}
    cli.main(["check", failing, "--json", str(b)])
    identical = a.read_bytes() == b.read_bytes() and bool(json.loads(a.read_text())["results"])
    codes["ok"] = cli.main(["check", write("ok.toml", suites='["class_axioms", "identities"]')])
    codes["config"] = cli.main(["check", write("bad.toml", suites='["no_such_suite"]')])
    codes["degenerate"] = cli.main(["check", write("deg.toml", guard='guard = "x1 - 0.9"')])
    capsys.readouterr()
    elapsed = time.perf_counter() - conftest.SESSION_START
    want = {"fail": 1, "ok": 0, "config": 2, "degenerate": 3}
    ok = identical and codes == want and elapsed < 120.0
    acceptance_line(10, ok, f"byte-identical JSON: {identical}; exit codes {codes}; "
                            f"suite wall-clock so far {elapsed:.0f} s (limit 120 s)")
    assert ok
