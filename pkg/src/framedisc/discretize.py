"""From a continuous frame to a uniformly discrete, nearly tight one.

Stages:

1. ``sample_weighted``: partition the parameter grid into net cells, split
   cells until the frame image of each piece is small, and give every piece
   dyadic weights ``2^-l`` summing to (almost) its measure.
2. ``build_schedule`` / ``distinct_select``: cut the sample list into blocks
   with nested subspaces and select, block by block, at most one sample per
   cell with a common weight ``2^-beta``.
3. ``uniform_select``: pairing cycles (proximity pairs at ``2r``, then a
   singleton guard at ``r``) each consisting of two binary selections, so the
   weight grows by 4 per cycle, until the points are ``r``-separated.

``practical`` mode runs the stages with measured certificates; ``theory``
mode only evaluates the worst-case constants (in log2, since they overflow).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import spaces
from .frames import FrameModel
from .kernels import image_clusters
from .operators import HermitianOp, Subspace, op_norm, weighted_gram
from .selector import (
    Pairing, SelectorCertificate, WeightedOpFamily, _level_select, block_constrained_select,
    absolute_constant, pair_by_proximity,
)

log = logging.getLogger(__name__)

MODES = ("practical", "theory")


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


# ----------------------------------------------------------------- sampling


@dataclass
class WeightedSampleSet:
    points: np.ndarray
    exponents: np.ndarray
    cells: np.ndarray
    grid_index: np.ndarray
    cell_offsets: np.ndarray
    cell_measures: np.ndarray
    achieved_deviation: float
    tail_mass: float = 0.0
    subcells: int = 0

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return 2.0 ** -self.exponents.astype(float)

    def cell_mass(self) -> dict:
        out: dict = {}
        for c, w in zip(self.cells, self.weights):
            out[int(c)] = out.get(int(c), 0.0) + w
        return out


def dyadic_decompose(m: float, tail_cap: float) -> list[int]:
    """Exponents of the binary expansion of ``m`` truncated at the first
    digit ``L`` with ``2^-L <= tail_cap``; ``floor(m)`` zeros come first."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not tail_cap > 0:
        raise ValueError("tail_cap must be positive")
    whole = int(math.floor(m))
    out = [0] * whole
    rem = m - whole
    L = max(1, math.ceil(-math.log2(tail_cap)))
    for ell in range(1, L + 1):
        if rem >= 2.0 ** -ell:
            out.append(ell)
            rem -= 2.0 ** -ell
    return out


def diameter_target(D: float, epsilon: float, n: int | None = None, total_measure=None) -> float:
    """Largest admissible image diameter of a sub-cell.

    With ``n`` (1-based cell number) this is ``D^-1/2 6^-1 2^-n eps``;
    otherwise the budget ``eps`` is spread evenly over ``total_measure``.
    """
    if n is not None:
        return epsilon / (6 * math.sqrt(D)) * 2.0 ** -n
    return epsilon / (6 * math.sqrt(D) * max(total_measure, 1.0))


def refine_cells_by_image(frame: FrameModel, part: spaces.Partition, epsilon: float,
                          rule: str = "uniform", jit=None):
    """Split each cell into pieces whose ``Psi``-image has small diameter.

    Returns ``(labels, targets)``: for each grid point the seed index of its
    piece, and the diameter target per cell. ``epsilon`` is absolute.
    """
    V = frame.vectors
    targets = np.empty(part.n_cells)
    for n in range(part.n_cells):
        if rule == "dyadic":
            targets[n] = diameter_target(frame.D, epsilon, n=n + 1)
        elif rule == "uniform":
            targets[n] = diameter_target(frame.D, epsilon, total_measure=frame.region.measure())
        else:
            raise ValueError(f"unknown diameter rule {rule!r}")
    if np.all(targets == targets[0]):
        labels = image_clusters(V, part.cell_of, targets[0] / 2, jit=jit)
    else:
        labels = -np.ones(V.shape[0], dtype=np.int64)
        for n in range(part.n_cells):
            idx = part.members(n)
            sub = image_clusters(V[idx], np.zeros(idx.size, dtype=np.int64), targets[n] / 2, jit=jit)
            labels[idx] = idx[sub]
    return labels, targets


def sample_weighted(frame: FrameModel, epsilon: float, net_radius: float,
                    rule: str = "uniform", jit=None) -> WeightedSampleSet:
    """Weighted dyadic sampling of ``frame`` (``epsilon`` absolute)."""
    region, space = frame.region, frame.space
    part = spaces.partition(space, region, net_radius)
    labels, _ = refine_cells_by_image(frame, part, epsilon, rule, jit=jit)
    w = region.weights
    seeds = np.unique(labels)
    cap = epsilon / (3 * frame.D * max(seeds.size, 1))
    pts, ell, cells, gidx = [], [], [], []
    tail = 0.0
    for c in range(part.n_cells):
        members = part.members(c)
        for seed in np.unique(labels[members]):
            piece = members[labels[members] == seed]
            mu = float(w[piece].sum())
            exps = dyadic_decompose(mu, cap)
            tail += mu - sum(2.0 ** -e for e in exps)
            for k, e in enumerate(exps):
                g = piece[k % piece.size]
                pts.append(region.points[g])
                ell.append(e)
                cells.append(c)
                gidx.append(g)
    if not pts:
        raise PipelineError("sampling", "no samples produced")
    cells = np.asarray(cells, dtype=np.int64)
    offsets = np.concatenate([[0], np.flatnonzero(np.diff(cells)) + 1, [cells.size]])
    gidx = np.asarray(gidx, dtype=np.int64)
    ell = np.asarray(ell, dtype=np.int64)
    S = weighted_gram(frame.vectors[gidx], 2.0 ** -ell.astype(float))
    dev = op_norm(frame.operator.entries - S)
    out = WeightedSampleSet(np.asarray(pts), ell, cells, gidx, offsets, part.measures.copy(),
                            dev, tail, int(seeds.size))
    for c, m in out.cell_mass().items():
        if m > part.measures[c] + 1e-9:
            raise PipelineError("sampling", f"cell {c} weight {m} exceeds its measure")
    return out


# ----------------------------------------------------------------- schedule


@dataclass
class SubspaceSchedule:
    K: list
    H: list
    eta: list
    tails: list

    @property
    def n_blocks(self) -> int:
        return len(self.K) - 1

    def block(self, k: int) -> np.ndarray:
        return np.arange(self.K[k], self.K[k + 1])

    def M(self, k: int) -> Subspace:
        """``(H_{k+1} + H_{k+2})^perp``; ``H`` is stored from ``H_1``."""
        n = self.H[0].dim_ambient
        a = self.H[k] if k < len(self.H) else Subspace.zero(n)
        b = self.H[k + 1] if k + 1 < len(self.H) else Subspace.zero(n)
        return a.direct_sum(b).complement()


def eta(k: int, B: float, epsilon: float) -> float:
    if k == 0:
        return 0.0
    return min(B ** -2 * 4.0 ** -(k + 2) * epsilon ** 2, 1.0)


def build_schedule(samples: WeightedSampleSet, vectors: np.ndarray, epsilon: float,
                   B: float) -> SubspaceSchedule:
    """Block boundaries ``K_k`` and orthogonal subspaces ``H_k``.

    ``vectors`` are the normalized sample vectors (rows); ``epsilon`` and
    ``B`` enter only through the thresholds ``eta_k``.
    """
    V = np.asarray(vectors, dtype=complex)
    m, n = V.shape
    if m == 0:
        raise PipelineError("schedule", "no samples")
    w = samples.weights
    cells = samples.cells
    K = [0, 1]
    H = [Subspace.zero(n)]
    U = Subspace.zero(n)
    etas = [0.0, eta(1, B, epsilon)]
    tails = [0.0, 0.0]
    k = 1
    while K[-1] < m:
        Hn = Subspace.span(U.project_out(V[:K[k]].T), n)
        H.append(Hn)
        U = U.direct_sum(Hn)
        e = eta(k + 1, B, epsilon)
        t = w * (np.abs(V @ U.basis.conj()) ** 2).sum(axis=1)
        suffix = np.concatenate([np.cumsum(t[::-1])[::-1], [0.0]])
        start = K[k]
        diff = np.flatnonzero(cells[start:] != cells[start])
        first = start + int(diff[0]) + 1 if diff.size else m
        ok = np.flatnonzero(suffix[start + 1:] <= e + 1e-15)
        by_tail = start + 1 + int(ok[0]) if ok.size else m
        nxt = min(max(first, by_tail), m)
        K.append(nxt)
        etas.append(e)
        tails.append(float(suffix[nxt]))
        k += 1
    # close out: the span of everything is one more subspace
    Hn = Subspace.span(U.project_out(V.T), n)
    H.append(Hn)
    return SubspaceSchedule(K, H, etas, tails)


# --------------------------------------------------------- distinct select


@dataclass
class DistinctSelection:
    indices: np.ndarray
    beta: int
    certificates: list
    deviation: float
    multiplicity: int
    C_eff: float


def practical_beta(samples: WeightedSampleSet) -> int:
    """``beta`` with ``m_max <= 2^-beta < 2 m_max`` for the heaviest cell."""
    m_max = max(samples.cell_mass().values())
    beta = int(math.floor(-math.log2(m_max) + 1e-12))
    if beta < 0:
        raise PipelineError("distinct", f"cell mass {m_max:.4g} exceeds 1; use a smaller net radius")
    return beta


def theory_beta(log2_x: float) -> int:
    """Integer ``beta`` with ``2^-beta < x <= 2^(1-beta)`` given ``log2 x``."""
    return int(math.floor(-log2_x)) + 1


def distinct_select(samples: WeightedSampleSet, schedule: SubspaceSchedule, frame: FrameModel,
                    epsilon: float, Bn: float, strategy="greedy", rng=None,
                    beta: int | None = None) -> DistinctSelection:
    """Per-block selection of at most one sample per cell (``epsilon`` absolute)."""
    V = frame.vectors[samples.grid_index] / math.sqrt(Bn)
    delta = float(np.max(np.einsum("ij,ij->i", V, V.conj()).real))
    if beta is None:
        beta = practical_beta(samples)
    eps_blk = epsilon / (4 * Bn)
    C_eff = eps_blk / math.sqrt(delta * 2.0 ** (1 - beta))
    chosen, certs = [], []
    for k in range(schedule.n_blocks):
        idx = schedule.block(k)
        fam = WeightedOpFamily(V[idx], samples.exponents[idx], delta)
        sel = block_constrained_select(fam, samples.cells[idx], schedule.M(k), eps_blk,
                                       C=C_eff, beta=beta, strategy=strategy, rng=rng)
        certs.append(sel.certificate)
        chosen.extend(int(idx[i]) for i in sel.chosen)
    chosen = np.asarray(sorted(chosen), dtype=np.int64)
    S = 2.0 ** -beta * weighted_gram(frame.vectors[samples.grid_index[chosen]])
    dev = op_norm(frame.operator.entries - S)
    _, counts = np.unique(samples.cells[chosen], return_counts=True)
    mult = int(counts.max()) if counts.size else 0
    if mult > 2:
        raise PipelineError("distinct", f"cell multiplicity {mult} > 2")
    return DistinctSelection(chosen, beta, certs, dev, mult, C_eff)


# ------------------------------------------------------------ uniform select


@dataclass
class CycleResult:
    keep: np.ndarray
    L: int
    certificates: list
    increments: list
    separated: bool


def _guard_pairing(space, pts, members, unpaired, r):
    """Second selection of a cycle: pair isolated survivors that still have a
    neighbour within ``r``, then pair the rest by proximity and index order."""
    local = {int(m): i for i, m in enumerate(members)}
    P = pts[members]
    Dm = spaces.distances(space, P, P)
    np.fill_diagonal(Dm, np.inf)
    free = np.ones(len(members), dtype=bool)
    pairs = []
    guard = [local[u] for u in unpaired if u in local and np.any(Dm[local[u]] < r)]
    for i in guard:
        if not free[i]:
            continue
        row = np.where(free, Dm[i], np.inf)
        j = int(np.argmin(row))
        if row[j] < r:
            free[i] = free[j] = False
            pairs.append((members[i], members[j]))
    rest = np.flatnonzero(free)
    if rest.size:
        sub = pair_by_proximity(P[rest], space, 2 * r, indices=members[rest])
        pairs.extend(sub.pairs)
        left = list(sub.phantoms)
        k = len(left) // 2 * 2
        pairs.extend(zip(left[0:k:2], left[1:k:2]))
        phantoms = tuple(left[k:])
    else:
        phantoms = ()
    return Pairing(tuple(pairs), phantoms), len(guard)


def uniform_select(points: np.ndarray, vectors: np.ndarray, beta: int, space, r: float,
                   target: np.ndarray | None = None, strategy="greedy", rng=None,
                   max_cycles: int | None = None) -> CycleResult:
    """Pairing cycles on ``points`` (rows, weight ``2^-beta`` each) until the
    survivors are ``r``-separated.

    ``target`` anchors every selection (default: the current weighted sum,
    i.e. each selection only tracks its predecessor).
    """
    V = np.asarray(vectors, dtype=complex)
    keep = np.arange(points.shape[0])
    w = 2.0 ** -beta
    if max_cycles is None:
        max_cycles = int(2 * space.C_RA ** 5)
    certs, incs = [], []
    L = 0

    def separated(idx):
        return idx.size < 2 or spaces.separation(space, points[idx]) >= r

    def select(pairing, idx, scale, name):
        nonlocal certs, incs
        cur = scale * weighted_gram(V[idx])
        tgt = cur if target is None else target
        chosen, _, st = _level_select(V, list(idx), pairing, scale, tgt, strategy, rng)
        new = np.asarray(chosen, dtype=np.int64)
        nxt = 2 * scale * weighted_gram(V[new]) if new.size else np.zeros_like(cur)
        inc = op_norm(nxt - cur)
        incs.append(inc)
        certs.append((name, SelectorCertificate(1, tuple(int(i) for i in new), inc, math.nan,
                                                True, strategy, st)))
        return new

    while not separated(keep):
        if L >= max_cycles:
            return CycleResult(keep, L, certs, incs, False)
        pairing = pair_by_proximity(points[keep], space, 2 * r, indices=keep)
        unpaired = set(pairing.phantoms)
        n1 = select(pairing, keep, w, f"cycle{L + 1}.pair")
        pairing2, n_guard = _guard_pairing(space, points, n1, unpaired, r)
        keep = select(pairing2, n1, 2 * w, f"cycle{L + 1}.guard")
        w *= 4
        L += 1
    return CycleResult(keep, L, certs, incs, True)


# ------------------------------------------------------------------ radius


def log2_C1(C: float, C_RA: float) -> float:
    """``log2(4 C^2 2^{4 C_RA^5})``."""
    return 2 + 2 * math.log2(C) + 4 * C_RA ** 5


def theory_constants(epsilon: float, frame_B: float, D: float, space) -> dict:
    """Worst-case constants, all in log2 where they overflow."""
    C = absolute_constant()
    lc1 = log2_C1(C, space.C_RA)
    l2e = 2 * math.log2(epsilon)
    alpha, gamma = space.ahlfors_alpha, space.ahlfors_exponent
    log2_r_first = -3 + (l2e - 1 - math.log2(alpha) - lc1 - math.log2(frame_B) - math.log2(D)) / gamma
    log2_r = min(log2_r_first, math.log2(space.R_A / 4))
    beta_35 = theory_beta(l2e - lc1 - math.log2(frame_B) - math.log2(D))
    beta_34 = theory_beta(l2e - 4 - math.log2(frame_B) - 2 * math.log2(C) - math.log2(D))
    return {
        "C": C, "log2_C1": lc1, "doubling_exponent_term": 4 * space.C_RA ** 5,
        "beta_distinct": beta_34, "beta_uniform": beta_35, "log2_r_theory": log2_r,
        "r_theory": 2.0 ** log2_r, "L_max": 2 * space.C_RA ** 5,
    }


def compute_radius(mode: str, epsilon: float, frame: FrameModel, space,
                   r: float | None = None, trial=None, r_min: float | None = None):
    """Separation radius.

    ``theory``: the worst-case formula (returned as a float, possibly 0.0 on
    underflow; the log2 value is in :func:`theory_constants`).
    ``practical``: ``r`` if given, else the largest ``R_A/4 * 2^-j`` for which
    ``trial(r)`` returns True (``None`` if none down to ``r_min``).
    """
    if mode == "theory":
        B = frame.reference_bounds[1]
        return theory_constants(epsilon, B, frame.D, space)["r_theory"]
    if mode != "practical":
        raise ValueError(f"unknown mode {mode!r}")
    if r is not None:
        return float(r)
    if trial is None:
        raise ValueError("adaptive radius needs a trial function")
    cand = space.R_A / 4
    r_min = r_min if r_min is not None else cand * 2.0 ** -12
    while cand >= r_min:
        if trial(cand):
            return cand
        cand /= 2
    return None


# ------------------------------------------------------------------ report


@dataclass
class DiscretizationReport:
    mode: str
    epsilon: float
    epsilon_abs: float
    points: list
    weight: float
    L: int
    beta: int
    r: float
    separation: float
    deviation: float
    A_ref: float
    B_ref: float
    A_out: float
    B_out: float
    ratio: float
    stage_deviations: dict
    counts: dict
    certificates: list
    multiplicity: int
    L_max: float
    constants: dict
    seed: int | None = None
    separated: bool = True
    verdict: bool | None = None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["points"] = [list(map(float, p)) for p in self.points]
        return d


@dataclass
class Verdict:
    ok: bool
    failures: list
    recomputed: dict


def verify_report(report: DiscretizationReport, frame: FrameModel) -> Verdict:
    """Recompute bounds and separation of the final frame and check every
    stated inequality."""
    fails = []
    P = np.asarray(report.points, dtype=float).reshape(-1, frame.region.points.shape[1])
    A, B = report.A_ref, report.B_ref
    dev = report.deviation
    if P.shape[0] == 0:
        return Verdict(False, ["no output points"], {})
    S = report.weight * weighted_gram(frame.evaluate(P))
    ev = np.linalg.eigvalsh(S)
    A_out, B_out = float(ev[0]), float(ev[-1])
    dev_re = op_norm(frame.operator.entries - S)
    sep = spaces.separation(frame.space, P) if P.shape[0] > 1 else math.inf
    rec = {"A_out": A_out, "B_out": B_out, "deviation": dev_re, "separation": sep}
    if abs(dev_re - dev) > 1e-9 * max(1.0, B):
        fails.append(f"deviation {dev} does not replay ({dev_re})")
    if not dev < report.epsilon_abs:
        fails.append(f"deviation {dev:.6g} >= epsilon {report.epsilon_abs:.6g}")
    if A - dev <= 0:
        fails.append("A_ref - deviation is not positive")
    else:
        if A_out < A - dev - 1e-9:
            fails.append(f"A_out {A_out:.6g} < A_ref - deviation {A - dev:.6g}")
        if B_out > B + dev + 1e-9:
            fails.append(f"B_out {B_out:.6g} > B_ref + deviation {B + dev:.6g}")
        if A_out > 0 and B_out / A_out > (B + dev) / (A - dev) + 1e-9:
            fails.append("frame-bound ratio exceeds (B+dev)/(A-dev)")
        if A_out <= 0:
            fails.append("output is not a frame")
    if sep < report.r - 1e-12:
        fails.append(f"separation {sep:.6g} < r {report.r:.6g}")
    if report.weight != 2.0 ** (2 * report.L - report.beta):
        fails.append("weight differs from 2^(2L - beta)")
    if report.L > report.L_max:
        fails.append(f"L = {report.L} exceeds {report.L_max}")
    if report.multiplicity > 2:
        fails.append(f"cell multiplicity {report.multiplicity} > 2")
    tele = report.stage_deviations.get("telescoped_bound")
    if tele is not None and dev > tele + 1e-8:
        fails.append("final deviation exceeds the telescoped stage bound")
    if not report.separated:
        fails.append("cycle budget exhausted before separation")
    return Verdict(not fails, fails, rec)


# ---------------------------------------------------------------- pipeline


def discretize(frame: FrameModel, epsilon: float, mode: str = "practical", r: float | None = None,
               net_radius: float | None = None, strategy: str = "greedy", seed: int | None = 0,
               anchor: str = "global", diameter_rule: str = "uniform", jit=None,
               ) -> DiscretizationReport:
    """Run the whole pipeline on ``frame`` with relative accuracy ``epsilon``
    (the absolute target is ``epsilon * B_ref``)."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    space = frame.space
    A_ref, B_ref = frame.reference_bounds
    eps_abs = epsilon * B_ref
    if A_ref <= eps_abs:
        raise PipelineError("setup", f"A_ref = {A_ref:.4g} does not exceed the target {eps_abs:.4g}")
    consts = theory_constants(eps_abs, B_ref, frame.D, space)
    if mode == "theory":
        return _theory_report(frame, epsilon, eps_abs, consts, seed)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if net_radius is None:
        net_radius = min(space.R_A / 4, frame.region.resolution())
    samples = sample_weighted(frame, eps_abs, net_radius, diameter_rule, jit=jit)
    Sig = weighted_gram(frame.vectors[samples.grid_index], samples.weights)
    Bn = max(B_ref, op_norm(Sig))
    Vn = frame.vectors[samples.grid_index] / math.sqrt(Bn)
    sched = build_schedule(samples, Vn, eps_abs, Bn)
    dsel = distinct_select(samples, sched, frame, eps_abs, Bn, strategy, rng)

    pts = samples.points[dsel.indices]
    vecs = frame.vectors[samples.grid_index[dsel.indices]]
    target = frame.operator.entries if anchor == "global" else None
    if anchor not in ("global", "stagewise"):
        raise ValueError("anchor must be 'global' or 'stagewise'")
    S_quad = frame.operator.entries

    trials: dict = {}

    def run(rr):
        sub = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed or 0, len(trials)])))
        res = uniform_select(pts, vecs, dsel.beta, space, rr, target, strategy, sub)
        wt = 2.0 ** (2 * res.L - dsel.beta)
        S = wt * weighted_gram(vecs[res.keep]) if res.keep.size else np.zeros_like(S_quad)
        trials[rr] = (res, op_norm(S_quad - S))
        return res.separated and trials[rr][1] < eps_abs

    if r is None:
        r_min = frame.region.resolution() / 2
        r_used = compute_radius("practical", eps_abs, frame, space, trial=run, r_min=r_min)
        if r_used is None:
            r_used = min(trials)
    else:
        r_used = float(r)
        run(r_used)
    res, dev = trials[r_used]
    weight = 2.0 ** (2 * res.L - dsel.beta)
    final = pts[res.keep]
    S = weight * weighted_gram(vecs[res.keep]) if res.keep.size else np.zeros_like(S_quad)
    ev = np.linalg.eigvalsh(S)
    sep = spaces.separation(space, final) if final.shape[0] > 1 else math.inf

    stage = {
        "sampling": samples.achieved_deviation,
        "distinct": dsel.deviation,
        "distinct_increment": op_norm(
            weighted_gram(frame.vectors[samples.grid_index], samples.weights)
            - 2.0 ** -dsel.beta * weighted_gram(vecs)),
        "cycle_increments": [float(x) for x in res.increments],
        "quadrature_gap": _tight_gap(frame),
    }
    stage["telescoped_bound"] = (stage["sampling"] + stage["distinct_increment"]
                                 + sum(stage["cycle_increments"]))
    certs = [c.as_row(f"distinct.block{k}") for k, c in enumerate(dsel.certificates)]
    certs += [c.as_row(name) for name, c in res.certificates]
    consts = dict(consts, C_eff=dsel.C_eff, r_used=r_used, net_radius=net_radius,
                  schedule_blocks=sched.n_blocks, normalization=Bn,
                  radii_tried=[{"r": k, "deviation": v[1], "L": v[0].L, "separated": v[0].separated}
                               for k, v in sorted(trials.items(), reverse=True)])
    rep = DiscretizationReport(
        mode=mode, epsilon=epsilon, epsilon_abs=eps_abs, points=final.tolist(), weight=weight,
        L=res.L, beta=dsel.beta, r=r_used, separation=float(sep), deviation=float(dev),
        A_ref=A_ref, B_ref=B_ref, A_out=float(ev[0]), B_out=float(ev[-1]),
        ratio=float(ev[-1] / ev[0]) if ev[0] > 0 else math.inf,
        stage_deviations=stage,
        counts={"grid": frame.region.size, "subcells": samples.subcells, "samples": samples.size,
                "distinct": int(dsel.indices.size), "final": int(res.keep.size),
                "cells": int(samples.cell_measures.size)},
        certificates=certs, multiplicity=dsel.multiplicity, L_max=2 * space.C_RA ** 5,
        constants=consts, seed=seed, separated=res.separated,
    )
    v = verify_report(rep, frame)
    rep.verdict, rep.failures = v.ok, v.failures
    return rep


def _tight_gap(frame: FrameModel):
    if frame.tight_bound is None:
        return None
    return op_norm(frame.operator.entries - frame.tight_bound * np.eye(frame.dim))


def _theory_report(frame, epsilon, eps_abs, consts, seed):
    A_ref, B_ref = frame.reference_bounds
    finite = all(math.isfinite(v) for v in (consts["C"], consts["log2_C1"], consts["log2_r_theory"]))
    ok = finite and consts["beta_uniform"] >= 1 and consts["beta_distinct"] >= 1
    fails = [] if ok else ["constant accounting is not finite or beta < 1"]
    return DiscretizationReport(
        mode="theory", epsilon=epsilon, epsilon_abs=eps_abs, points=[], weight=math.nan, L=0,
        beta=consts["beta_uniform"], r=consts["r_theory"], separation=math.nan,
        deviation=math.nan, A_ref=A_ref, B_ref=B_ref, A_out=math.nan, B_out=math.nan,
        ratio=math.nan, stage_deviations={}, counts={"grid": frame.region.size},
        certificates=[], multiplicity=0, L_max=consts["L_max"], constants=consts,
        seed=seed, verdict=ok, failures=fails,
    )
