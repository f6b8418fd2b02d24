import json
import math

import numpy as np
import pytest
import scipy.sparse as sp

from ddphase.model import (
    Coupling,
    GTable,
    ModelSpec,
    STRENGTH_ROWS,
    ValidationError,
    assemble_hdd,
    canonical_name,
    g_from_dipoles,
    load_model,
    model_from_dict,
    model_to_dict,
    named_configuration,
    parse_g_row,
    row_entries,
    save_model,
    validate_gtable,
)
from ddphase.operator_algebra import collective_matrix, enumerate_basis


def dense(mat):
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


# ---------------------------------------------------------------------------
# strength table


def test_real_dipole_closure():
    gt = GTable(n=2, entries={(1, 2, 1, 2): 0.1}).complete()
    for key in [(1, 2, 1, 2), (2, 1, 2, 1), (1, 2, 2, 1), (2, 1, 1, 2)]:
        assert gt.get(*key) == pytest.approx(0.1)


def test_complex_closure_without_real_dipoles():
    gt = GTable(
        n=2, entries={(1, 2, 1, 2): 0.2 + 0.1j}, real_dipoles=False
    ).complete()
    assert gt.get(2, 1, 2, 1) == pytest.approx(0.2 - 0.1j)
    # the real-dipole images stay absent
    assert gt.get(1, 2, 2, 1) == 0.0


def test_closure_conflict_detected():
    gt = GTable(n=2, entries={(1, 2, 1, 2): 0.1, (2, 1, 2, 1): 0.2})
    with pytest.raises(ValidationError):
        gt.complete()


def test_exchange_diagonal_must_be_real():
    gt = GTable(n=2, entries={(1, 2, 2, 1): 1.0 + 0.5j}, real_dipoles=False)
    with pytest.raises(ValidationError):
        gt.complete()


def test_real_dipole_table_rejects_complex_entry():
    with pytest.raises(ValidationError):
        GTable(n=2, entries={(1, 2, 1, 2): 1j})


def test_table_key_validation():
    with pytest.raises(ValidationError):
        GTable(n=2, entries={(1, 1, 1, 2): 0.1})
    with pytest.raises(ValidationError):
        GTable(n=2, entries={(1, 3, 1, 2): 0.1})


def test_transition_support_check():
    gt = GTable(n=3, entries={(1, 2, 2, 3): 0.1}).complete()
    validate_gtable(gt, {(1, 2), (2, 3)})
    with pytest.raises(ValidationError):
        validate_gtable(gt, {(1, 2), (1, 3)})


def test_g_from_dipoles_geometry():
    r = 2.0
    # parallel dipoles perpendicular to the separation axis
    gt = g_from_dipoles({(1, 2): [0, 0, 1]}, [r, 0, 0])
    assert gt.get(1, 2, 1, 2) == pytest.approx(1.0 / r**3)
    # dipoles along the axis pick up the -2 factor
    gt = g_from_dipoles({(1, 2): [1, 0, 0]}, [r, 0, 0])
    assert gt.get(1, 2, 1, 2) == pytest.approx(-2.0 / r**3)
    # magic angle: cos^2 theta = 1/3 kills the interaction
    d = np.array([1.0, 0.0, math.sqrt(2.0)]) / math.sqrt(3.0)
    gt = g_from_dipoles({(1, 2): d}, [r, 0, 0])
    assert gt.get(1, 2, 1, 2) == pytest.approx(0.0, abs=1e-15)


def test_g_from_dipoles_cross_terms_and_scaling():
    dip = {(1, 2): [0.0, 0.0, 1.0], (1, 3): [0.0, 1.0, 1.0]}
    gt1 = g_from_dipoles(dip, [1.0, 0.0, 0.0])
    gt2 = g_from_dipoles(dip, [2.0, 0.0, 0.0])
    # 1/R^3 scaling for every entry
    for key, v in gt1.entries.items():
        assert gt2.get(*key) == pytest.approx(v / 8.0)
    # cross entry equals d_a . d_b here (perpendicular separation)
    assert gt1.get(1, 2, 1, 3) == pytest.approx(1.0)
    # and obeys the real-dipole symmetry
    assert gt1.get(1, 2, 3, 1) == pytest.approx(1.0)
    assert gt1.get(1, 3, 1, 2) == pytest.approx(1.0)


def test_g_from_dipoles_rejects_bad_input():
    with pytest.raises(ValidationError):
        g_from_dipoles({(2, 1): [0, 0, 1]}, [1, 0, 0])
    with pytest.raises(ValidationError):
        g_from_dipoles({(1, 2): [0, 0, 1]}, [0, 0, 0])


# ---------------------------------------------------------------------------
# strength rows


def test_row_values_closed_forms():
    v1, v2, v3 = STRENGTH_ROWS[1]
    assert (v1, v2) == (0.1, 0.04)
    assert v3 == pytest.approx(14.0 * math.sqrt(1e-5))
    v1, v2, v3 = STRENGTH_ROWS[2]
    assert (v1, v2) == (0.3, 0.2)
    assert v3 == pytest.approx(14.0 * math.sqrt(1.5) / 100.0)
    v1, v2, v3 = STRENGTH_ROWS[3]
    assert (v1, v2) == (1.0, 0.4)
    assert v3 == pytest.approx(140.0 * math.sqrt(1e-5))


@pytest.mark.parametrize(
    "label,expect",
    [
        ("g1", (1, 1)),
        ("g+2", (1, 2)),
        ("gp3", (1, 3)),
        ("g-1", (-1, 1)),
        ("gm3", (-1, 3)),
        ("G+1", (1, 1)),
    ],
)
def test_parse_g_row(label, expect):
    assert parse_g_row(label) == expect


@pytest.mark.parametrize("label", ["g4", "h1", "g", "g+4", "gg1"])
def test_parse_g_row_rejects(label):
    with pytest.raises(ValidationError):
        parse_g_row(label)


def test_row_entries_signs():
    ent = row_entries("g-2", (1, 2, 2, 3))
    assert ent[(1, 2, 1, 2)] == pytest.approx(-0.3)
    assert ent[(2, 3, 2, 3)] == pytest.approx(-0.2)
    assert ent[(1, 2, 2, 3)] == pytest.approx(-14.0 * math.sqrt(1.5) / 100.0)


# ---------------------------------------------------------------------------
# named configurations


def test_canonical_names():
    assert canonical_name("Xi") == "xi"
    assert canonical_name("two-level") == "two_level"
    assert canonical_name("V") == "v"
    with pytest.raises(ValidationError):
        canonical_name("W")


def test_xi_configuration_layout():
    spec = named_configuration("Xi", g="g1", x=(1.0, 1.0))
    assert spec.omegas == (0.0, 0.75, 1.0)
    assert spec.mode_freqs == (0.75, 0.25)
    assert spec.allowed_pairs == frozenset({(1, 2), (2, 3)})
    # double resonance: mu_c = omega_jk / 2, so mu_12 = 0.375 at x = 1
    assert spec.couplings[0].mu == pytest.approx(0.375)
    assert spec.couplings[1].mu == pytest.approx(0.125)
    assert spec.x_values() == pytest.approx((1.0, 1.0))
    keys = {k for k in spec.gtable.entries if spec.gtable.entries[k] != 0}
    assert (1, 2, 1, 2) in keys and (2, 3, 2, 3) in keys
    assert (1, 2, 2, 3) in keys and (1, 2, 3, 2) in keys
    # prohibited transition (1, 3) never appears
    assert not any(
        {(min(a, b), max(a, b)) for a, b in [(k[0], k[1]), (k[2], k[3])]} & {(1, 3)}
        for k in keys
    )


def test_lambda_and_v_layout():
    lam = named_configuration("Lambda")
    assert lam.omegas == (0.0, 0.25, 1.0)
    assert lam.mode_freqs == (1.0, 0.75)
    assert lam.allowed_pairs == frozenset({(1, 3), (2, 3)})
    vee = named_configuration("V", g="g3")
    assert vee.omegas == (0.0, 0.75, 1.0)
    assert vee.mode_freqs == (0.75, 1.0)
    assert vee.gtable.get(1, 2, 1, 2) == pytest.approx(1.0)
    assert vee.gtable.get(1, 3, 1, 3) == pytest.approx(0.4)
    assert vee.gtable.get(1, 2, 1, 3) == pytest.approx(140.0 * math.sqrt(1e-5))


def test_two_level_scalar_strength_is_split():
    spec = named_configuration("two_level", g=0.5, x=1.0)
    assert spec.gtable.get(1, 2, 1, 2) == pytest.approx(0.25)
    assert spec.gtable.get(1, 2, 2, 1) == pytest.approx(0.25)
    assert spec.couplings[0].mu == pytest.approx(0.5)  # mu_c = 1/2 at x = 1


def test_omega2_override_and_bounds():
    spec = named_configuration("Xi", omega2=0.5)
    assert spec.mode_freqs == (0.5, 0.5)
    with pytest.raises(ValidationError):
        named_configuration("Xi", omega2=1.5)
    with pytest.raises(ValidationError):
        named_configuration("two_level", omega2=0.5)


def test_named_rejects_wrong_table_pairs():
    # a Xi strength row references (2, 3), prohibited in the V configuration
    with pytest.raises(ValidationError):
        named_configuration("V", g={(2, 3, 2, 3): 0.1})


def test_named_rejects_complex_strengths():
    with pytest.raises(ValidationError):
        named_configuration("Xi", g={(1, 2, 1, 2): 0.1 + 0.1j})


def test_four_level_structures():
    lam4 = named_configuration("lambda4")
    assert lam4.n == 4
    assert lam4.allowed_pairs == frozenset({(1, 3), (2, 3), (3, 4)})
    dia = named_configuration("diamond4", g={(1, 2, 3, 4): 0.05})
    assert dia.allowed_pairs == frozenset({(1, 2), (1, 3), (2, 4), (3, 4)})
    assert dia.gtable.get(1, 2, 3, 4) == pytest.approx(0.05)
    # isolated-dipole entry is impossible for the chain: (2, 4) carries no dipole
    with pytest.raises(ValidationError):
        named_configuration("lambda4", g={(1, 3, 2, 4): 0.05})


def test_model_validation_errors():
    good = named_configuration("V")
    with pytest.raises(ValidationError):
        ModelSpec(
            n=3,
            omegas=(0.1, 0.75, 1.0),
            mode_freqs=good.mode_freqs,
            couplings=good.couplings,
            allowed_pairs=good.allowed_pairs,
            gtable=good.gtable,
        )
    with pytest.raises(ValidationError):
        ModelSpec(
            n=3,
            omegas=(0.0, 0.75, 0.75),
            mode_freqs=good.mode_freqs,
            couplings=good.couplings,
            allowed_pairs=good.allowed_pairs,
            gtable=good.gtable,
        )
    with pytest.raises(ValidationError):
        ModelSpec(
            n=3,
            omegas=(0.0, 0.75, 1.0),
            mode_freqs=(0.75, -1.0),
            couplings=good.couplings,
            allowed_pairs=good.allowed_pairs,
            gtable=good.gtable,
        )


def test_with_x_round_trip():
    spec = named_configuration("Lambda", g="g2", x=(0.7, 1.3))
    spec2 = spec.with_x((1.4, 2.6))
    assert spec2.x_values() == pytest.approx((1.4, 2.6))
    assert spec2.gtable.entries == spec.gtable.entries


# ---------------------------------------------------------------------------
# model files


def test_model_file_round_trip(tmp_path):
    spec = named_configuration("Xi", g="g2", x=(1.2, 0.4))
    path = tmp_path / "model.json"
    save_model(spec, path)
    back = load_model(path)
    assert back.n == spec.n
    assert back.omegas == spec.omegas
    assert back.mode_freqs == spec.mode_freqs
    assert back.couplings == spec.couplings
    assert back.allowed_pairs == spec.allowed_pairs
    assert back.scan_pairs == spec.scan_pairs
    for key, v in spec.gtable.entries.items():
        assert back.gtable.get(*key) == pytest.approx(v)


def test_model_parser_rejects_unknown_keys():
    data = model_to_dict(named_configuration("V"))
    data["extra"] = 1
    with pytest.raises(ValidationError):
        model_from_dict(data)
    data = model_to_dict(named_configuration("V"))
    data["atoms"]["spin"] = 2
    with pytest.raises(ValidationError):
        model_from_dict(data)
    data = model_to_dict(named_configuration("V"))
    del data["modes"]
    with pytest.raises(ValidationError):
        model_from_dict(data)


def test_model_parser_rejects_complex_mu(tmp_path):
    data = model_to_dict(named_configuration("V", x=(1.0, 1.0)))
    data["couplings"][0]["mu"] = [0.3, 0.1]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ValidationError):
        load_model(path)


def test_complex_table_round_trip(tmp_path):
    gt = GTable(
        n=3,
        entries={(1, 2, 1, 2): 0.2 + 0.1j, (1, 2, 2, 1): 0.3},
        real_dipoles=False,
    ).complete()
    spec = ModelSpec(
        n=3,
        omegas=(0.0, 0.5, 1.0),
        mode_freqs=(0.5,),
        couplings=(Coupling(1, 2, 1, 0.1),),
        allowed_pairs=frozenset({(1, 2)}),
        gtable=gt,
    )
    path = tmp_path / "model.json"
    save_model(spec, path)
    back = load_model(path)
    assert back.gtable.get(1, 2, 1, 2) == pytest.approx(0.2 + 0.1j)
    assert back.gtable.get(2, 1, 2, 1) == pytest.approx(0.2 - 0.1j)


# ---------------------------------------------------------------------------
# dipole-dipole Hamiltonian assembly


def triples_oracle(gtable, basis):
    """Independent regrouping of the interaction by ordered index triples.

    For every ordered pair (j, k) the second transition attaches through one
    extra level l in four ways; only the (k, l) attachment shares the inner
    index and picks up the contraction -A_jl.  Disjoint transitions keep the
    plain product.  Summing ordered tuples reproduces the double sum exactly.
    """
    full = gtable.complete()
    na = basis.n_atoms
    n = basis.n
    A = {
        (j, k): dense(collective_matrix(basis, j, k)).astype(complex)
        for j in range(1, n + 1)
        for k in range(1, n + 1)
    }
    g = full.get
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    pref = 1.0 / (2.0 * (na - 1))
    lv = range(1, n + 1)
    for j in lv:
        for k in lv:
            if j == k:
                continue
            H += pref * g(j, k, j, k) * A[j, k] @ A[j, k]
            H += pref * g(j, k, k, j) * (A[j, k] @ A[k, j] - A[j, j])
            for l in lv:
                if l in (j, k):
                    continue
                H += pref * g(j, k, j, l) * A[j, k] @ A[j, l]
                H += pref * g(j, k, l, j) * A[j, k] @ A[l, j]
                H += pref * g(j, k, l, k) * A[j, k] @ A[l, k]
                H += pref * g(j, k, k, l) * (A[j, k] @ A[k, l] - A[j, l])
                for m in lv:
                    if m in (j, k, l):
                        continue
                    H += pref * g(j, k, l, m) * A[j, k] @ A[l, m]
    return H


def anticommutator_oracle(gtable, basis):
    """Grouping by unordered transition pairs with anticommutators.

    Cross terms between transitions (j, k) and (l, k) that enter the upper
    level together appear as anticommutators; the j -> k -> l ladder keeps
    the contraction -A_jl.  (A contraction on the k -> j, l -> k ladder term
    would be wrong: its inner indices j and l never coincide.)
    """
    full = gtable.complete()
    na = basis.n_atoms
    n = basis.n
    A = {
        (j, k): dense(collective_matrix(basis, j, k)).astype(complex)
        for j in range(1, n + 1)
        for k in range(1, n + 1)
    }
    g = full.get
    H = np.zeros((basis.dim, basis.dim), dtype=complex)
    c2 = 1.0 / (2.0 * (na - 1))
    c1 = 1.0 / (na - 1)

    def anti(x, y):
        return x @ y + y @ x

    def w2(j, k):
        return (
            c2 * (g(j, k, j, k) * A[j, k] @ A[j, k] + g(k, j, k, j) * A[k, j] @ A[k, j])
            + c1 * g(j, k, k, j) * (A[j, k] @ A[k, j] - A[j, j])
        )

    def w3(j, k, l):
        # k is the intermediate level
        out = c2 * (
            g(j, k, l, k) * anti(A[j, k], A[l, k])
            + g(k, j, k, l) * anti(A[k, j], A[k, l])
        )
        out += c1 * (
            g(j, k, k, l) * (A[j, k] @ A[k, l] - A[j, l])
            + g(k, j, l, k) * A[k, j] @ A[l, k]
        )
        return out

    def w4(j, k, l, m):
        quads = [
            (j, k, l, m),
            (j, k, m, l),
            (j, l, k, m),
            (j, l, m, k),
            (j, m, k, l),
            (j, m, l, k),
            (k, j, l, m),
            (k, j, m, l),
            (k, l, m, j),
            (k, m, l, j),
            (l, j, m, k),
            (l, k, m, j),
        ]
        return c1 * sum(g(a, b, c, d) * A[a, b] @ A[c, d] for a, b, c, d in quads)

    lv = range(1, n + 1)
    for j in lv:
        for k in lv:
            if j != k:
                H += 0.5 * w2(j, k)
    for j in lv:
        for k in lv:
            for l in lv:
                if len({j, k, l}) == 3:
                    H += 0.5 * w3(j, k, l)
    for j in lv:
        for k in lv:
            for l in lv:
                for m in lv:
                    if len({j, k, l, m}) == 4:
                        H += w4(j, k, l, m) / 24.0
    return H


def random_real_dipole_table(n, rng):
    # one generator per symmetry orbit: (j,k,k,j) and (j,k,m,l) images are
    # implied for real dipoles, so only (j,k,j,k) and sorted cross keys seed it
    pairs = [(j, k) for j in range(1, n + 1) for k in range(j + 1, n + 1)]
    entries = {}
    for a, (j, k) in enumerate(pairs):
        entries[(j, k, j, k)] = rng.normal()
        for l, m in pairs[a + 1 :]:
            entries[(j, k, l, m)] = rng.normal()
    return GTable(n=n, entries=entries).complete()


def random_hermitian_table(n, rng):
    pairs = [(j, k) for j in range(1, n + 1) for k in range(j + 1, n + 1)]
    entries = {}
    for a, (j, k) in enumerate(pairs):
        entries[(j, k, j, k)] = rng.normal() + 1j * rng.normal()
        entries[(j, k, k, j)] = rng.normal()
        for l, m in pairs[a + 1 :]:
            entries[(j, k, l, m)] = rng.normal() + 1j * rng.normal()
            entries[(j, k, m, l)] = rng.normal() + 1j * rng.normal()
    return GTable(n=n, entries=entries, real_dipoles=False).complete()


def test_hdd_single_atom_is_zero():
    spec = named_configuration("Xi", g="g3")
    basis = enumerate_basis(3, 1)
    assert np.max(np.abs(dense(assemble_hdd(spec.gtable, basis)))) == 0.0


def test_hdd_two_level_closed_form():
    g = 0.37
    gt = GTable(n=2, entries={(1, 2, 1, 2): g, (1, 2, 2, 1): g}).complete()
    basis = enumerate_basis(2, 2)
    a12 = dense(collective_matrix(basis, 1, 2))
    a21 = dense(collective_matrix(basis, 2, 1))
    a11 = dense(collective_matrix(basis, 1, 1))
    a22 = dense(collective_matrix(basis, 2, 2))
    expect = 0.5 * g * ((a12 + a21) @ (a12 + a21) - a11 - a22)
    assert np.allclose(dense(assemble_hdd(gt, basis)), expect, atol=1e-12)


def test_hdd_hermitian():
    rng = np.random.default_rng(5)
    gt = random_hermitian_table(3, rng)
    basis = enumerate_basis(3, 3)
    H = dense(assemble_hdd(gt, basis))
    assert np.allclose(H, H.conj().T, atol=1e-12)


@pytest.mark.parametrize("n,na", [(2, 2), (3, 2), (3, 3), (3, 4), (4, 2), (4, 3)])
def test_hdd_matches_triple_regrouping_real(n, na):
    rng = np.random.default_rng(100 * n + na)
    gt = random_real_dipole_table(n, rng)
    basis = enumerate_basis(n, na)
    H = dense(assemble_hdd(gt, basis)).astype(complex)
    assert np.max(np.abs(H - triples_oracle(gt, basis))) < 1e-12


@pytest.mark.parametrize("n,na", [(3, 2), (3, 4), (4, 3)])
def test_hdd_matches_triple_regrouping_complex(n, na):
    rng = np.random.default_rng(17 * n + na)
    gt = random_hermitian_table(n, rng)
    basis = enumerate_basis(n, na)
    H = dense(assemble_hdd(gt, basis)).astype(complex)
    assert np.max(np.abs(H - triples_oracle(gt, basis))) < 1e-12


@pytest.mark.parametrize("n,na", [(3, 3), (4, 2), (4, 4)])
def test_hdd_matches_anticommutator_grouping(n, na):
    rng = np.random.default_rng(9 * n + na)
    gt = random_real_dipole_table(n, rng)
    basis = enumerate_basis(n, na)
    H = dense(assemble_hdd(gt, basis)).astype(complex)
    assert np.max(np.abs(H - anticommutator_oracle(gt, basis))) < 1e-12


def test_named_strength_rows_on_configurations():
    # table supports only the configuration's own transitions for every row
    for name in ["Xi", "Lambda", "V"]:
        for row in ["g1", "g2", "g3", "g-1", "g-2", "g-3"]:
            spec = named_configuration(name, g=row)
            validate_gtable(spec.gtable, set(spec.allowed_pairs))
