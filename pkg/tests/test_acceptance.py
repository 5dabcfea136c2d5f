"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected in the "acceptance criteria" section of the summary.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from cplinear import assignment as asg
from cplinear import channels as ch
from cplinear import cli
from cplinear import dynamics as dyn
from cplinear import lindblad as lb
from cplinear.linalg import matrix_from_json, random_density, random_hermitian, random_unitary

pytestmark = pytest.mark.acceptance

CLI_FIXTURES = Path(__file__).parent / "fixtures" / "cli"


def random_channel(d, n_kraus, rng):
    """Random CPTP map from the blocks of a Haar isometry."""
    v = random_unitary(d * n_kraus, rng)[:, :d]
    return ch.from_kraus([v[a * d:(a + 1) * d] for a in range(n_kraus)])


def quasi_product_configuration(d_S, d_E, rng):
    """Expand a random correlated state as ``sum_a w_a Q_a (x) sigma_a``.

    The ``sigma_a`` are ``d_E^2`` random environment states (a basis of the
    environment operators); ``Q_a`` are Hermitian but generally not positive.
    """
    rho = random_density(d_S * d_E, seed=rng)
    sigmas = [random_density(d_E, seed=rng) for _ in range(d_E * d_E)]
    frame = np.linalg.pinv(np.array([s.ravel() for s in sigmas]).T)
    blocks = rho.reshape(d_S, d_E, d_S, d_E).transpose(0, 2, 1, 3).reshape(d_S, d_S, d_E * d_E)
    coeffs = blocks @ frame.T  # coeffs[i, j, a]: weight of sigma_a in block (i, j)
    xs = [coeffs[:, :, a] for a in range(len(sigmas))]
    w = np.array([max(abs(np.trace(x).real), 0.1) for x in xs])
    return rho, sigmas, w, [x / wa for x, wa in zip(xs, w)]


def test_c1_product_input_cp(criterion):
    start = time.perf_counter()
    worst_eig, worst_dev, passed = np.inf, 0.0, True
    for k, (d_S, d_E) in enumerate([(2, 2), (2, 3), (3, 2)]):
        rep = dyn.verify_product_input_cp(d_S, d_E, 100, 20, seed=1000 + k, adversarial=False)
        worst_eig = min(worst_eig, rep.min_choi_eig)
        worst_dev = max(worst_dev, rep.max_deviation)
        passed &= rep.passed and rep.n_trials == 100
    elapsed = time.perf_counter() - start
    ok = passed and worst_eig >= -1e-9 and worst_dev <= 1e-10 and elapsed < 30
    criterion(1, ok, f"min Choi eig {worst_eig:.2e}, max deviation {worst_dev:.2e}, {elapsed:.1f} s")


def test_c2_pechukas_equivalence(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for d_S, d_E in [(2, 2), (2, 3), (3, 2), (3, 3)]:
        for _ in range(5):
            omega = random_density(d_E, seed=rng)
            s = asg.product_set([random_density(d_S, seed=rng) for _ in range(d_S * d_S)], omega)
            built = asg.assignment_as_superop(asg.assignment_from_set(s, asg.ProductComplement(omega)))
            ref = asg.assignment_as_superop(asg.pechukas(d_S, omega))
            # transfer matrices agree iff the maps agree on every matrix unit |i><j|
            worst = max(worst, np.max(np.abs(built.transfer - ref.transfer)))
    criterion(2, worst <= 1e-10, f"max |Lambda - pechukas| on operator basis {worst:.2e}")


def test_c3_non_cp_intermediate_map(criterion):
    start = time.perf_counter()
    g = lb.dephasing_generator([(0.0, 1.0, 1.0), (1.0, 2.0, -0.5)])
    e10 = lb.normalized_min_choi_eig(lb.propagate(g, 0, 1, 1000).map)
    e20 = lb.normalized_min_choi_eig(lb.propagate(g, 0, 2, 1000).map)
    phi = lb.normalized_min_choi_eig(lb.intermediate_map(g, 1, 2, 1000))
    oracle = (1 - np.exp(0.5)) / 2  # dephasing factor q = e^{0.5} on [1, 2]
    elapsed = time.perf_counter() - start
    ok = e10 >= -1e-8 and e20 >= -1e-8 and abs(phi - (-0.324)) <= 0.005 and abs(phi - oracle) <= 1e-8
    ok = ok and elapsed < 5
    criterion(3, ok, f"E(1,0) {e10:.2e}, E(2,0) {e20:.2e}, Phi(2,1) {phi:.6f} (oracle {oracle:.6f}), {elapsed:.2f} s")


def test_c4_positive_rate_divisibility(criterion):
    g = lb.dephasing_generator([(0.0, 2.0, 1.0)])
    scan = lb.divisibility_scan(g, np.linspace(0, 2, 10), 100)
    worst = min(scan.min_choi_eig)
    ok = scan.first_violation is None and worst >= -1e-8 and len(scan.pairs) == 45
    criterion(4, ok, f"{len(scan.pairs)} pairs, min Choi eig {worst:.2e}")


def test_c5_u_inconsistency_detection(criterion, golden):
    s = asg.InitialSet.from_json(golden["initial_set"])
    swap = dict(dyn.unitaries_from_spec(golden["unitaries"], 2, 2))["swap"]
    probes = [matrix_from_json(p) for p in golden["probes"]]
    violation = dyn.u_consistency(swap, s).max_violation
    deviation = dyn.linearity_witness(swap, asg.assignment_from_set(s), probes).max_deviation
    sub = s.subset(golden["product_subset"])
    sub_violation = dyn.u_consistency(swap, sub).max_violation
    sub_probes = [probes[i] for i in golden["product_probes"]]
    sub_deviation = dyn.linearity_witness(swap, asg.assignment_from_set(sub), sub_probes).max_deviation
    ok = violation > 0.1 and deviation > 0.1 and sub_violation <= 1e-10 and sub_deviation <= 1e-10
    ok = ok and abs(violation - golden["expected"]["max_violation"]) <= 1e-12
    criterion(
        5,
        ok,
        f"correlated: violation {violation:.4f}, deviation {deviation:.4f}; "
        f"product subset: {sub_violation:.1e}, {sub_deviation:.1e}",
    )


def test_c6_hermitian_decomposition_round_trip(criterion):
    rng = np.random.default_rng(6)
    worst_rec = worst_norm = 0.0
    n_non_cp = 0
    for k in range(50):
        d = 2 + k % 2
        lam = rng.uniform(0.1, 1.0)
        # affine combination of two channels: HP and TP, generically not CP
        a, b = random_channel(d, 3, rng), random_channel(d, 2, rng)
        s = ch.SuperOp(d, d, (1 + lam) * a.transfer - lam * b.transfer)
        dec = ch.hermitian_decomposition(s)
        worst_rec = max(worst_rec, np.max(np.abs(dec.to_superop().transfer - s.transfer)))
        worst_norm = max(worst_norm, np.max(np.abs(dec.normalization() - np.eye(d))))
        n_non_cp += not dec.is_cp
    ok = worst_rec <= 1e-9 and worst_norm <= 1e-9
    criterion(6, ok, f"reconstruction {worst_rec:.2e}, normalization {worst_norm:.2e}, {n_non_cp}/50 non-CP")


def test_c7_cp_family_identity(criterion):
    rng = np.random.default_rng(7)
    worst_dev, worst_eig = 0.0, np.inf
    for k in range(50):
        d_S, d_E = [(2, 2), (2, 3), (3, 2)][k % 3]
        rho, sigmas, w, qs = quasi_product_configuration(d_S, d_E, rng)
        u = random_unitary(d_S * d_E, rng)
        family, out = dyn.cp_family(u, sigmas, w, qs)
        exact = dyn.reduced_dynamics(u, rho, d_S, d_E)
        worst_dev = max(worst_dev, np.max(np.abs(out - exact)))
        worst_eig = min(worst_eig, min(family.min_choi_eigenvalues()))
    ok = worst_dev <= 1e-10 and worst_eig >= -1e-9
    criterion(7, ok, f"max deviation {worst_dev:.2e}, min Choi eig over all maps {worst_eig:.2e}")


def test_c8_convex_route_equals_linear_extension(criterion):
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(100):
        d_S, d_E = [(2, 2), (3, 2)][k % 2]
        basis = [random_density(d_S, seed=rng) for _ in range(d_S * d_S)]
        omega = random_density(d_E, seed=rng)
        u = random_unitary(d_S * d_E, rng)

        def psi(x):
            # a genuinely convex-linear map, evaluated directly on each state
            return dyn.reduced_dynamics(u, np.kron(x, omega), d_S, d_E)

        a = rng.normal(size=d_S * d_S)
        a += (1 - a.sum()) / len(a)  # unit-sum coefficient vector with mixed signs
        rho = sum(c * r for c, r in zip(a, basis))
        split = asg.convex_split(a)
        route = asg.convex_route_value(psi, rho, basis, split)
        linear = sum(c * psi(r) for c, r in zip(a, basis))
        worst = max(worst, np.max(np.abs(route - linear)))
    criterion(8, worst <= 1e-10, f"max |route - linear extension| over 100 bases {worst:.2e}")


def test_c9_canonical_form_round_trip(criterion):
    rng = np.random.default_rng(9)
    worst, signs_ok = 0.0, True
    for k in range(50):
        d = 2 + k % 2
        n = int(rng.integers(2, d * d))
        v = random_unitary(d * d - 1, rng)
        basis = lb.gell_mann(d)
        ops = [sum(v[a, j] * basis[a] for a in range(d * d - 1)) for j in range(n)]
        rates = rng.uniform(0.1, 2.0, size=n) * np.where(np.arange(n) % 2, -1, 1)
        k_gen = lb.gksl_superop(random_hermitian(d, rng), ops, rates)
        form = lb.canonical_form(k_gen)
        worst = max(worst, np.max(np.abs(lb.reassemble(form).transfer - k_gen.transfer)))
        # orthonormal traceless jumps: canonical rates are the inputs padded with zeros
        expected = np.sort(np.concatenate([rates, np.zeros(d * d - 1 - n)]))[::-1]
        got = np.asarray(form.rates)
        nonzero = np.abs(expected) > 1e-6
        signs_ok &= np.allclose(got, expected, atol=1e-9)
        signs_ok &= bool(np.all(np.sign(got[nonzero]) == np.sign(expected[nonzero])))
    criterion(9, worst <= 1e-9 and signs_ok, f"max reassembly error {worst:.2e}, rate signs preserved: {signs_ok}")


def test_c10_cli_determinism(criterion, tmp_path):
    runs = [
        ("classify-map", "classify_transpose", 0),
        ("build-assignment", "build_assignment", 0),
        ("u-consistency", "u_consistency", 0),
        ("verify-prop1", "verify_prop1", 0),
        ("verify-prop1", "verify_prop1_strict", 2),
        ("cp-family", "cp_family", 0),
        ("lindblad-scan", "lindblad_sign_flip", 0),
        ("lindblad-scan", "lindblad_constant", 0),
    ]
    identical, codes_ok = True, True
    for command, name, code in runs:
        outs = [tmp_path / f"{name}-{i}" for i in range(2)]
        for out in outs:
            codes_ok &= cli.main([command, "--config", str(CLI_FIXTURES / f"{name}.json"), "--out", str(out)]) == code
        files = sorted(p.name for p in outs[0].iterdir())
        identical &= files == sorted(p.name for p in outs[1].iterdir()) and len(files) > 0
        identical &= all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    bad = [
        cli.main(["verify-prop1", "--config", str(CLI_FIXTURES / f), "--out", str(tmp_path / "bad")])
        for f in ("malformed.json", "missing_dS.json")
    ]
    codes_ok &= bad == [1, 1] and not (tmp_path / "bad").exists()
    criterion(10, identical and codes_ok, f"{len(runs)} fixtures byte-identical: {identical}, exit codes: {codes_ok}")
