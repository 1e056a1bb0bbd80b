import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from framedisc import spaces
from framedisc.discretize import (
    DiscretizationReport, PipelineError, build_schedule, compute_radius, diameter_target,
    discretize, distinct_select, dyadic_decompose, eta, log2_C1, practical_beta,
    refine_cells_by_image, sample_weighted, theory_beta, theory_constants, uniform_select,
    verify_report,
)
from framedisc.frames import FrameModel, exponential_frame
from framedisc.operators import op_norm, weighted_gram
from framedisc.selector import absolute_constant
from framedisc.spaces import Region, euclidean


def toy_frame(values, lower=0.0, upper=1.0):
    """Frame on a 1-D grid whose vector at grid point k is ``values[k]``."""
    V = np.asarray(values, dtype=complex)
    space = euclidean(1)
    region = Region(space, (lower,), (upper,), (V.shape[0],))
    pts = region.points[:, 0]

    def evaluate(P):
        x = np.atleast_2d(P)[:, 0]
        k = np.argmin(np.abs(x[:, None] - pts[None, :]), axis=1)
        return V[k]

    D = float(np.max(np.sum(np.abs(V) ** 2, axis=1)))
    return FrameModel("toy", space, region, V.shape[1], evaluate, D=D, tight_bound=None)


# ---- sampling


def test_dyadic_examples():
    assert dyadic_decompose(0.75, 0.3) == [1, 2]
    assert dyadic_decompose(0.75, 1e-9) == [1, 2]
    assert dyadic_decompose(0.0, 0.1) == []
    assert dyadic_decompose(1 / 3, 1e-4) == [2, 4, 6, 8, 10, 12, 14]
    assert 1 / 3 - sum(2.0 ** -e for e in dyadic_decompose(1 / 3, 1e-4)) < 1e-4
    assert dyadic_decompose(2.5, 0.1) == [0, 0, 1]
    with pytest.raises(ValueError):
        dyadic_decompose(-1, 0.1)


@settings(max_examples=80, deadline=None)
@given(m=st.floats(0, 8), cap=st.floats(1e-9, 0.5))
def test_dyadic_remainder_below_cap(m, cap):
    exps = dyadic_decompose(m, cap)
    rem = m - sum(2.0 ** -e for e in exps)
    assert -1e-12 <= rem < cap
    frac = [e for e in exps if e > 0]
    assert frac == sorted(set(frac))


def test_diameter_targets():
    assert diameter_target(4.0, 0.6, n=1) == pytest.approx(0.6 / 12 / 2)
    assert diameter_target(1.0, 0.6, total_measure=2.0) == pytest.approx(0.05)
    assert diameter_target(1.0, 0.6, total_measure=0.5) == pytest.approx(0.1)


def test_constant_psi_keeps_cells_whole():
    frame = toy_frame(np.tile([[0.3, 0.1]], (8, 1)))
    part = spaces.partition(frame.space, frame.region, 1.0)
    labels, _ = refine_cells_by_image(frame, part, 0.1)
    assert np.unique(labels).size == part.n_cells


def test_far_images_are_split():
    frame = toy_frame([[1.0, 0.0], [0.0, 1.0]], upper=0.5)
    part = spaces.partition(frame.space, frame.region, 1.0)
    assert part.n_cells == 1
    labels, _ = refine_cells_by_image(frame, part, 0.1)
    assert labels.tolist() == [0, 1]


def test_refined_pieces_meet_diameter_target():
    frame = exponential_frame(n=8, grid=128)
    part = spaces.partition(frame.space, frame.region, 0.25)
    labels, targets = refine_cells_by_image(frame, part, 0.2)
    V = frame.vectors
    for s in np.unique(labels):
        piece = np.flatnonzero(labels == s)
        W = V[piece]
        diam = np.linalg.norm(W[:, None, :] - W[None, :, :], axis=2).max()
        assert diam <= targets[part.cell_of[s]] + 1e-12


def test_constant_frame_single_representative():
    frame = toy_frame(np.tile([[0.5]], (4, 1)))
    samples = sample_weighted(frame, 0.01, 1.0)
    assert np.unique(samples.grid_index).size == 1
    S = weighted_gram(frame.vectors[samples.grid_index], samples.weights)
    assert op_norm(frame.operator.entries - S) <= samples.tail_mass * frame.D + 1e-12


def test_sampling_accuracy_exponential():
    frame = exponential_frame(n=16)
    s = sample_weighted(frame, 0.3, 0.125)
    assert s.achieved_deviation < 0.3
    for c, m in s.cell_mass().items():
        assert m <= s.cell_measures[c] + 1e-9


def test_sampling_converges_with_epsilon():
    frame = exponential_frame(n=16)
    devs = [sample_weighted(frame, e, 0.125).achieved_deviation for e in (0.4, 0.2, 0.1, 0.05)]
    assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))
    assert devs[-1] < 0.05


# ---- schedule


def test_eta_values():
    assert eta(0, 1.0, 0.5) == 0
    assert eta(1, 1.0, 0.5) == pytest.approx(0.25 / 64)
    assert eta(1, 0.01, 0.5) == 1.0


def test_schedule_one_dimensional():
    frame = exponential_frame(n=1, grid=32)
    s = sample_weighted(frame, 0.2, 0.125)
    sched = build_schedule(s, frame.vectors[s.grid_index], 0.2, 1.0)
    assert sched.K[1] == 1
    assert sched.H[0].rank == 0
    assert sched.H[1].rank == 1
    assert sched.n_blocks <= 3 or sched.K[-1] == s.size


def test_schedule_tail_bounds():
    frame = exponential_frame(n=8, grid=64)
    s = sample_weighted(frame, 0.3, 0.125)
    V = frame.vectors[s.grid_index]
    sched = build_schedule(s, V, 0.3, 1.0)
    assert sched.K[0] == 0 and sched.K[1] == 1 and sched.K[-1] == s.size
    assert all(b > a for a, b in zip(sched.K, sched.K[1:]))
    for k in range(1, sched.n_blocks):
        # blocks end at a cell change or once the tail is small
        assert sched.tails[k + 1] <= sched.eta[k + 1] + 1e-15 or sched.K[k + 1] == s.size \
            or s.cells[sched.K[k + 1] - 1] != s.cells[sched.K[k + 1]]
    ranks = [H.rank for H in sched.H]
    assert sum(ranks) <= frame.dim
    for i in range(len(sched.H)):
        for j in range(i + 1, len(sched.H)):
            G = sched.H[i].basis.conj().T @ sched.H[j].basis
            assert np.abs(G).max(initial=0) < 1e-9


# ---- distinct selection


def test_theory_beta_brackets():
    for x in (0.3, 1.0, 1.5 * 2 ** -10, 2.0):
        b = theory_beta(math.log2(x))
        assert 2.0 ** -b < x <= 2.0 ** (1 - b)
    assert theory_beta(math.log2(0.3)) == 2


def test_distinct_select_multiplicity():
    frame = exponential_frame(n=8, grid=64)
    s = sample_weighted(frame, 0.3, 0.125)
    V = frame.vectors[s.grid_index]
    sched = build_schedule(s, V, 0.3, 1.0)
    sel = distinct_select(s, sched, frame, 0.3, 1.0, rng=np.random.default_rng(0))
    assert sel.multiplicity <= 2
    assert sel.beta == practical_beta(s)
    _, counts = np.unique(s.cells[sel.indices], return_counts=True)
    assert counts.max() == sel.multiplicity


def test_practical_beta_rejects_heavy_cells():
    frame = exponential_frame(n=4, grid=16, lam_box=(-8, 8))
    s = sample_weighted(frame, 0.3, 1.0)
    if max(s.cell_mass().values()) > 1:
        with pytest.raises(PipelineError):
            practical_beta(s)


# ---- cycles


def test_separated_input_needs_no_cycle():
    E = euclidean(1)
    P = np.array([[0.0], [1.0], [2.0]])
    V = np.eye(3) * 0.5
    res = uniform_select(P, V, 2, E, 0.5)
    assert res.L == 0 and res.keep.tolist() == [0, 1, 2] and res.separated


def test_coincident_points_one_cycle():
    E = euclidean(1)
    P = np.array([[0.0], [0.0]])
    V = np.array([[0.5], [0.5]])
    res = uniform_select(P, V, 3, E, 0.5)
    assert res.L == 1 and res.keep.size == 1
    # the weight 2^(2L - beta) is four times the input weight
    assert 2.0 ** (2 * res.L - 3) == 4 * 2.0 ** -3


def test_cycle_budget_exhaustion_is_reported():
    E = euclidean(1)
    P = np.zeros((8, 1))
    V = np.full((8, 1), 0.1)
    res = uniform_select(P, V, 6, E, 0.5, max_cycles=1)
    assert not res.separated


# ---- constants and radius


def test_log2_C1_exponent_term():
    C = absolute_constant()
    assert log2_C1(C, 4.0) - (2 + 2 * math.log2(C)) == 4096.0
    tc = theory_constants(0.1, 1.0, 1.0, euclidean(2))
    assert tc["doubling_exponent_term"] == 4096.0
    assert tc["log2_C1"] == log2_C1(C, 4.0)


def test_beta_shifts_by_two_when_epsilon_halves():
    a = theory_constants(0.2, 1.0, 1.0, spaces.hyperbolic_half_plane())
    b = theory_constants(0.1, 1.0, 1.0, spaces.hyperbolic_half_plane())
    assert b["beta_uniform"] - a["beta_uniform"] == 2
    assert b["beta_distinct"] - a["beta_distinct"] == 2


def test_theory_radius_formula():
    sp = euclidean(1)
    tc = theory_constants(0.25, 1.0, 1.0, sp)
    C1 = tc["log2_C1"]
    want = -3 + (2 * math.log2(0.25) - 1 - math.log2(sp.ahlfors_alpha) - C1) / sp.ahlfors_exponent
    assert tc["log2_r_theory"] == pytest.approx(min(want, math.log2(sp.R_A / 4)))
    frame = exponential_frame()
    assert compute_radius("theory", 0.25, frame, frame.space) == tc["r_theory"]


def test_compute_radius_practical():
    frame = exponential_frame()
    assert compute_radius("practical", 0.2, frame, frame.space, r=0.3) == 0.3
    r = compute_radius("practical", 0.2, frame, frame.space, trial=lambda r: r < 0.2)
    assert r == frame.space.R_A / 4 / 8
    assert compute_radius("practical", 0.2, frame, frame.space, trial=lambda r: False, r_min=0.1) is None
    with pytest.raises(ValueError):
        compute_radius("other", 0.2, frame, frame.space)


# ---- verification


def synthetic_report(frame, points, weight, deviation, **kw):
    ev = np.linalg.eigvalsh(weight * weighted_gram(frame.evaluate(np.asarray(points))))
    base = dict(mode="practical", epsilon=0.3, epsilon_abs=0.3, points=points, weight=weight,
                L=0, beta=int(-math.log2(weight)), r=0.5,
                separation=1.0, deviation=deviation, A_ref=frame.reference_bounds[0],
                B_ref=frame.reference_bounds[1], A_out=ev[0], B_out=ev[-1], ratio=ev[-1] / ev[0],
                stage_deviations={}, counts={}, certificates=[], multiplicity=1, L_max=16.0,
                constants={})
    base.update(kw)
    return DiscretizationReport(**base)


def test_zero_deviation_report():
    frame = toy_frame(np.eye(2) * math.sqrt(2))
    # two grid points, each of measure 1/2, with vectors sqrt(2) e_k: S = I
    rep = synthetic_report(frame, frame.region.points.tolist(), 0.5, 0.0)
    v = verify_report(rep, frame)
    assert v.ok, v.failures
    assert v.recomputed["B_out"] / v.recomputed["A_out"] == pytest.approx(
        frame.reference_bounds[1] / frame.reference_bounds[0])


def test_tight_reference_ratio_bound():
    A, eps = 1.0, 0.2
    assert (A + eps) / (A - eps) == pytest.approx((1 + eps / A) / (1 - eps / A))


def test_verify_catches_bad_weight_and_deviation():
    frame = toy_frame(np.eye(2) * math.sqrt(2))
    rep = synthetic_report(frame, frame.region.points.tolist(), 0.5, 0.0, L=1)
    v = verify_report(rep, frame)
    assert not v.ok and any("weight" in f for f in v.failures)
    rep = synthetic_report(frame, frame.region.points.tolist(), 0.5, 0.1)
    assert any("replay" in f for f in verify_report(rep, frame).failures)


# ---- pipeline


def test_exponential_small_run():
    frame = exponential_frame(n=16)
    rep = discretize(frame, 0.3, seed=1)
    assert rep.verdict, rep.failures
    assert rep.deviation < 0.3 * rep.B_ref
    P = np.asarray(rep.points)
    assert spaces.separation(frame.space, P) >= rep.r
    assert rep.multiplicity <= 2
    assert rep.weight == 2.0 ** (2 * rep.L - rep.beta)


def test_fixed_radius_and_stagewise_anchor():
    frame = exponential_frame(n=16)
    rep = discretize(frame, 0.3, r=0.25, anchor="stagewise")
    assert rep.r == 0.25
    assert rep.separation >= 0.25


def test_theory_mode_report():
    frame = exponential_frame(n=8, grid=64)
    rep = discretize(frame, 0.25, mode="theory")
    assert rep.verdict
    assert rep.points == []
    assert rep.constants["log2_C1"] > 4 * frame.space.C_RA ** 5
    assert rep.r == rep.constants["r_theory"]


def test_pipeline_input_errors():
    frame = exponential_frame(n=8, grid=64)
    with pytest.raises(ValueError):
        discretize(frame, 1.5)
    with pytest.raises(ValueError):
        discretize(frame, 0.2, mode="fast")


def test_numpy_fallback_gives_same_report():
    frame = exponential_frame(n=8, grid=64)
    a = discretize(frame, 0.3, jit=True).to_dict()
    b = discretize(frame, 0.3, jit=False).to_dict()
    assert a == b
