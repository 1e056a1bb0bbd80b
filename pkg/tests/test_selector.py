import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from framedisc import spaces
from framedisc.operators import Subspace, op_norm, weighted_gram
from framedisc.selector import (
    HypothesisError, Pairing, WeightedOpFamily, absolute_constant, block_constrained_select,
    compute_beta_block, max_admissible_level, pair_by_block, pair_by_proximity, recursion_B,
    search_signs, select_level, select_to_level, selection_deviation, selector_constant,
    two_sided_margin, uniform_constant,
)

from conftest import random_subspace


def rank_one_family(rng, m, n, delta, exponents=None):
    F = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    F *= np.sqrt(delta * rng.uniform(0.3, 1.0, m))[:, None]
    ell = np.zeros(m, dtype=int) if exponents is None else np.asarray(exponents)
    top = np.linalg.eigvalsh(weighted_gram(F, 2.0 ** -ell))[-1]
    if top > 1:
        F /= math.sqrt(top)
    return WeightedOpFamily(F, ell, delta)


def brute_force_level(F, pairs, target):
    best = math.inf
    for pick in itertools.product(*pairs):
        best = min(best, op_norm(2 * weighted_gram(F[list(pick)]) - target))
    return best


# ---- constants


def test_recursion_first_step():
    assert recursion_B(0.01, 1)[1] == pytest.approx(1.42, abs=1e-15)


def test_selector_constant_examples():
    assert selector_constant(0.01, 1) == 0
    assert selector_constant(0.01, 2) == pytest.approx(2.1, abs=1e-12)
    with pytest.raises(HypothesisError):
        selector_constant(0.3, 2)
    with pytest.raises(ValueError):
        selector_constant(0.0, 1)


def test_uniform_and_absolute_constants():
    assert max_admissible_level(0.05) == 4
    assert uniform_constant(0.05) == selector_constant(0.05, 4)
    assert math.isnan(uniform_constant(0.6))
    C = absolute_constant()
    assert C == pytest.approx(44.0717397, abs=1e-6)
    for d in (0.3, 0.01, 1e-6, 1e-12, 2.0 ** -30 * 1.999):
        assert uniform_constant(d) <= C + 1e-9


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 60), frac=st.floats(1.0, 2.0, exclude_max=True))
def test_absolute_constant_dominates(k, frac):
    assert uniform_constant(2.0 ** -k * frac) <= absolute_constant() + 1e-9


def test_selector_constant_monotone():
    for delta in (0.001, 0.004, 0.01, 0.03):
        vals = [selector_constant(delta, N) for N in range(1, max_admissible_level(delta) + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    for N in (2, 3, 4):
        ds = [d for d in np.linspace(1e-4, 0.9 / 2 ** N, 12)]
        vals = [selector_constant(d, N) for d in ds]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_beta_block_examples():
    # eps^2 / (C^2 delta) = x with C = delta = 1
    assert compute_beta_block(math.sqrt(0.3), 1, 1) == 2
    assert compute_beta_block(1.0, 1, 1) == 1
    assert compute_beta_block(math.sqrt(1.5 * 2 ** -10), 1, 1) == 10
    with pytest.raises(HypothesisError):
        compute_beta_block(2.0, 1, 1)


@given(x=st.floats(1e-12, 1.99))
def test_beta_block_bracket(x):
    eps = math.sqrt(x)
    beta = compute_beta_block(eps, 1, 1)
    assert 1 < 2 ** beta * eps ** 2 <= 2


# ---- pairings


def test_pair_by_block_examples():
    p = pair_by_block([1, 2, 3], {1: "a", 2: "a", 3: "b"})
    assert p.pairs == ((1, 2),) and p.phantoms == (3,)
    p = pair_by_block([0, 1, 2, 3], lambda i: i)
    assert len(p.pairs) == 2 and p.phantoms == ()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=8))
def test_same_block_pairs_come_first(labels):
    p = pair_by_block(range(len(labels)), lambda i: labels[i])
    assert sorted(p.indices()) == list(range(len(labels)))
    cross = [q for q in p.pairs if labels[q[0]] != labels[q[1]]]
    loose = [i for q in cross for i in q] + list(p.phantoms)
    # after the first pass each block has at most one index left over
    left = [labels[i] for i in loose]
    assert len(left) == len(set(left))


def test_pairing_rejects_duplicates():
    with pytest.raises(ValueError):
        Pairing(((0, 1),), (1,))


def test_pair_by_proximity_examples():
    E = spaces.euclidean(1)
    p = pair_by_proximity([[0.0], [0.5]], E, 1.0)
    assert p.pairs == ((0, 1),)
    p = pair_by_proximity([[0.0], [2.0], [4.0]], E, 1.0)
    assert p.pairs == () and p.phantoms == (0, 1, 2)
    p = pair_by_proximity([[0.0], [0.1], [0.15]], E, 1.0)
    assert len(p.pairs) == 1 and len(p.phantoms) == 1


# ---- order-1 selection


def test_identical_pair_gives_zero():
    f = np.array([[0.1, 0.2j], [0.1, 0.2j]])
    fam = WeightedOpFamily.uniform(f, 0.1)
    cert = select_level(fam, Pairing(((0, 1),)))
    assert cert.deviation < 1e-15


def test_orthogonal_pair_gives_one():
    fam = WeightedOpFamily.uniform(np.eye(2), 1.0)
    for strategy in ("exhaustive", "greedy"):
        cert = select_level(fam, Pairing(((0, 1),)), strategy, C=1.0)
        assert cert.deviation == pytest.approx(1.0)


def test_exhaustive_matches_brute_force(rng):
    fam = rank_one_family(rng, 8, 4, 0.05)
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7)]
    cert = select_level(fam, Pairing(tuple(pairs)))
    assert cert.deviation == pytest.approx(brute_force_level(fam.factors, pairs, fam.target.entries))
    assert cert.deviation <= uniform_constant(0.05) * math.sqrt(0.1)
    assert cert.satisfied


def test_greedy_never_beats_exhaustive(rng):
    for _ in range(10):
        fam = rank_one_family(rng, 12, 5, 0.05)
        pairing = pair_by_block(range(12), lambda i: 0)
        ex = select_level(fam, pairing, "exhaustive")
        gr = select_level(fam, pairing, "greedy")
        rd = select_level(fam, pairing, "randomized", rng=rng)
        assert gr.deviation >= ex.deviation - 1e-12
        assert rd.deviation >= ex.deviation - 1e-12


def test_phantom_slots(rng):
    fam = rank_one_family(rng, 5, 3, 0.05)
    pairing = Pairing(((0, 1), (2, 3)), (4,))
    cert = select_level(fam, pairing)
    best = math.inf
    for pick in itertools.product((0, 1), (2, 3), (4, None)):
        idx = [i for i in pick if i is not None]
        best = min(best, op_norm(2 * weighted_gram(fam.factors[idx]) - fam.target.entries))
    assert cert.deviation == pytest.approx(best)


def test_pairing_must_cover_family(rng):
    fam = rank_one_family(rng, 4, 2, 0.1)
    with pytest.raises(ValueError):
        select_level(fam, Pairing(((0, 1),)))


def test_trace_hypothesis_checked():
    with pytest.raises(HypothesisError):
        WeightedOpFamily.uniform(np.ones((2, 2)), 0.5)


def test_exhaustive_limit():
    D = np.zeros((25, 2, 2))
    with pytest.raises(ValueError):
        search_signs(D, np.zeros((2, 2)), "exhaustive")


def test_search_deterministic_ties():
    D = np.zeros((3, 2, 2))
    s, val, _ = search_signs(D, np.eye(2), "exhaustive")
    assert val == 1.0 and np.all(s == 1)


# ---- nested selection


def test_nested_identical_family():
    f = np.tile([[0.1, 0.1]], (8, 1))
    fam = WeightedOpFamily.uniform(f, 0.05)
    cert = select_to_level(fam, 3)
    assert len(cert.chosen) == 1 and cert.deviation < 1e-14


def test_nested_level_two(rng):
    fam = rank_one_family(rng, 12, 4, 0.02)
    cert = select_to_level(fam, 2, strategy="exhaustive")
    assert len(cert.chosen) == 3
    assert cert.satisfied
    assert cert.deviation == pytest.approx(
        selection_deviation(fam.factors, cert.chosen, 4.0, fam.target))


def test_nested_greedy_runs_levelwise(rng):
    fam = rank_one_family(rng, 32, 4, 0.02)
    cert = select_to_level(fam, 3, strategy="greedy")
    assert len(cert.chosen) == 4
    assert len(cert.search_stats["levels"]) == 3


# ---- block-constrained selection


def test_margin_zero_subspace():
    E = np.diag([0.1, -0.2])
    K = Subspace.zero(2)
    assert two_sided_margin(E, K, 0.3, 0.0) == pytest.approx(0.1)
    assert two_sided_margin(E, K, 0.15, 0.0) < 0


def test_block_single_operator():
    f = np.array([[0.5, 0.0]])
    fam = WeightedOpFamily(f, [1], 0.25)
    sel = block_constrained_select(fam, [0], Subspace.zero(2), 0.5, C=1.0)
    assert sel.chosen == (0,)
    eps, C, delta = 0.5, 1.0, 0.25
    assert 1 < 2 ** sel.beta * eps ** 2 / (C ** 2 * delta) <= 2
    assert sel.certificate.deviation == pytest.approx(
        op_norm(2.0 ** -sel.beta * weighted_gram(f) - fam.target.entries))


def test_block_zero_subspace_reduces_to_plain_bound(rng):
    fam = rank_one_family(rng, 6, 3, 0.05, exponents=[3] * 6)
    sel = block_constrained_select(fam, [0, 0, 1, 1, 2, 2], Subspace.zero(3), 0.5, C=1.0, beta=2)
    if sel.certificate.satisfied:
        assert sel.certificate.deviation <= 0.5 + 1e-8


def test_block_exhaustive_small_case(rng):
    fam = rank_one_family(rng, 6, 4, 0.05, exponents=[2, 2, 2, 2, 2, 2])
    blocks = [0, 0, 1, 1, 2, 2]
    K = Subspace(4, random_subspace(rng, 4, 2))
    sel = block_constrained_select(fam, blocks, K, 1.0, C=1.0, beta=1, strategy="exhaustive")
    picked_blocks = [blocks[i] for i in sel.chosen]
    assert len(picked_blocks) == len(set(picked_blocks))
    assert sel.certificate.satisfied
    assert sel.certificate.search_stats["two_sided_margin"] >= -1e-8


def test_block_mass_hypothesis(rng):
    fam = rank_one_family(rng, 4, 2, 0.05, exponents=[0, 0, 0, 0])
    with pytest.raises(HypothesisError):
        block_constrained_select(fam, [0, 0, 1, 1], Subspace.zero(2), 0.1, C=1.0, beta=1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 10), nb=st.integers(1, 4))
def test_block_multiplicity_property(seed, m, nb):
    rng = np.random.default_rng(seed)
    blocks = rng.integers(0, nb, m)
    mass = np.bincount(blocks, minlength=nb).max()
    ell = int(math.ceil(math.log2(mass))) + 2
    fam = rank_one_family(rng, m, 3, 0.1, exponents=[ell] * m)
    sel = block_constrained_select(fam, blocks, Subspace.zero(3), 1.0, C=1.0, beta=2)
    picked = [blocks[i] for i in sel.chosen]
    assert len(picked) == len(set(picked))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), pairs=st.integers(1, 6))
def test_exhaustive_is_optimal_property(seed, pairs):
    rng = np.random.default_rng(seed)
    fam = rank_one_family(rng, 2 * pairs, 3, 0.05)
    pr = [(2 * k, 2 * k + 1) for k in range(pairs)]
    cert = select_level(fam, Pairing(tuple(pr)))
    assert cert.deviation == pytest.approx(brute_force_level(fam.factors, pr, fam.target.entries), abs=1e-12)
