"""Binary selectors for families of rank-one operators.

A binary selector of order 1 picks exactly one index from each pair of a
pairing; a pair whose second member is a phantom (zero operator) picks the
real index or nothing. Selection error at scale ``c`` is
``||2 c sum_{chosen} T_i - target||``. Existence of good selectors is only
known nonconstructively, so selectors are searched for and certified after
the fact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import pair_close
from .operators import HermitianOp, Subspace, batched_op_norm, op_norm, weighted_gram

STRATEGIES = ("exhaustive", "greedy", "randomized")
EXHAUSTIVE_MAX_PAIRS = 24
PSD_SLACK = 1e-8


class HypothesisError(ValueError):
    pass


@dataclass(frozen=True)
class WeightedOpFamily:
    """Rank-one operators ``T_i = f_i f_i^*`` with weights ``2^-l_i``."""

    factors: np.ndarray
    exponents: np.ndarray
    delta: float
    target: HermitianOp = None

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.factors, dtype=complex))
        ell = np.asarray(self.exponents, dtype=np.int64).reshape(-1)
        if ell.shape[0] != F.shape[0]:
            raise ValueError("one exponent per factor is required")
        if np.any(ell < 0):
            raise ValueError("exponents must be nonnegative")
        tr = np.einsum("ij,ij->i", F, F.conj()).real
        if np.any(tr > self.delta * (1 + 1e-9)):
            raise HypothesisError(f"trace {tr.max():.6g} exceeds delta = {self.delta:.6g}")
        object.__setattr__(self, "factors", F)
        object.__setattr__(self, "exponents", ell)
        if self.target is None:
            object.__setattr__(self, "target", HermitianOp(weighted_gram(F, 2.0 ** -ell)))

    @property
    def size(self) -> int:
        return self.factors.shape[0]

    @property
    def dim(self) -> int:
        return self.factors.shape[1]

    def below_identity(self, tol: float = 1e-9) -> bool:
        return self.target.eigvalsh()[-1] <= 1 + tol

    @classmethod
    def uniform(cls, factors, delta: float) -> WeightedOpFamily:
        """Unit weights, target ``sum_i T_i``."""
        F = np.atleast_2d(np.asarray(factors, dtype=complex))
        return cls(F, np.zeros(F.shape[0], dtype=np.int64), delta)


@dataclass(frozen=True)
class Pairing:
    """Disjoint index pairs; each phantom index is paired with a zero operator."""

    pairs: tuple
    phantoms: tuple = ()

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        phantoms = tuple(int(i) for i in self.phantoms)
        flat = [i for p in pairs for i in p] + list(phantoms)
        if len(flat) != len(set(flat)):
            raise ValueError("an index appears twice in the pairing")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "phantoms", phantoms)

    def indices(self) -> list[int]:
        return sorted([i for p in self.pairs for i in p] + list(self.phantoms))

    def slots(self) -> list[tuple[int, int]]:
        """All pairs with phantoms encoded as ``(i, -1)``."""
        return list(self.pairs) + [(i, -1) for i in self.phantoms]


@dataclass
class SelectorCertificate:
    level: int
    chosen: tuple
    deviation: float
    theoretical_bound: float
    satisfied: bool
    strategy: str
    search_stats: dict = field(default_factory=dict)

    def as_row(self, stage: str = "") -> dict:
        return {
            "stage": stage, "level": self.level, "chosen": len(self.chosen),
            "deviation": self.deviation, "theoretical_bound": self.theoretical_bound,
            "satisfied": self.satisfied, "strategy": self.strategy,
        }


# ------------------------------------------------------------------ constants


def selector_constant(delta: float, N_max: int) -> float:
    """Smallest ``C`` with ``sum_{j<N} (B_j - 1) <= C sqrt(2^N delta)`` for
    ``1 <= N <= N_max``, where ``B_0 = 1`` and
    ``B_{j+1} = B_j + 4 sqrt(2^j delta B_j) + 2^{j+1} delta``."""
    if not delta > 0 or N_max < 1:
        raise ValueError("need delta > 0 and N_max >= 1")
    if 2.0 ** N_max * delta >= 1:
        raise HypothesisError(f"2^N delta = {2.0 ** N_max * delta:.4g} is not below 1")
    B = recursion_B(delta, N_max)
    partial = np.cumsum(B[:-1] - 1.0)
    N = np.arange(1, N_max + 1)
    return float(np.max(partial / np.sqrt(2.0 ** N * delta)))


def recursion_B(delta: float, n: int) -> np.ndarray:
    """``B_0, ..., B_n`` of the selector recursion."""
    B = np.empty(n + 1)
    B[0] = 1.0
    for j in range(n):
        B[j + 1] = B[j] + 4 * math.sqrt(2.0 ** j * delta * B[j]) + 2.0 ** (j + 1) * delta
    return B


def max_admissible_level(delta: float) -> int:
    """Largest ``N`` with ``2^N delta < 1`` (0 if none)."""
    N = 0
    while 2.0 ** (N + 1) * delta < 1:
        N += 1
    return N


def uniform_constant(delta: float) -> float:
    """Selector constant valid for every admissible level at this ``delta``."""
    N = max_admissible_level(delta)
    if N == 0:
        return math.nan
    return selector_constant(delta, N)


def absolute_constant() -> float:
    """Selector constant valid for all ``delta``.

    The uniform constant is largest when ``2^N delta`` approaches 1 from
    below and grows as ``delta -> 0``; both limits have converged to about
    1e-9 at ``delta = 2^-100 (2 - 2^-40)``.
    """
    return uniform_constant(2.0 ** -100 * (2 - 2.0 ** -40))


def compute_beta_block(epsilon: float, C: float, delta: float) -> int:
    """The integer ``beta >= 0`` with ``1 < 2^beta eps^2 / (C^2 delta) <= 2``."""
    if not (C > 0 and delta > 0 and epsilon > 0):
        raise ValueError("epsilon, C and delta must be positive")
    x = epsilon ** 2 / (C ** 2 * delta)
    if x > 2:
        raise HypothesisError(f"eps^2/(C^2 delta) = {x:.4g} > 2 leaves no admissible beta")
    beta = 0
    while x * 2.0 ** beta <= 1:
        beta += 1
    return beta


# ------------------------------------------------------------------ pairings


def pair_by_block(indices, block_of) -> Pairing:
    """Pair indices inside each block (in the given order), then the
    leftovers across blocks; a final odd index becomes a phantom.

    ``block_of`` maps an index to its block id; ``None`` marks an index that
    belongs to no block (such indices are only paired in the second pass).
    """
    groups: dict = {}
    loose = []
    for i in indices:
        b = block_of(i) if callable(block_of) else block_of[i]
        if b is None:
            loose.append(int(i))
        else:
            groups.setdefault(b, []).append(int(i))
    pairs, rest = [], []
    for members in groups.values():
        k = len(members) // 2 * 2
        pairs.extend(zip(members[0:k:2], members[1:k:2]))
        if len(members) % 2:
            rest.append(members[-1])
    rest.extend(loose)
    k = len(rest) // 2 * 2
    pairs.extend(zip(rest[0:k:2], rest[1:k:2]))
    return Pairing(tuple(pairs), tuple(rest[k:]))


def pair_by_proximity(points, space, threshold: float, indices=None, eligible=None,
                      jit=None) -> Pairing:
    """Greedy proximity pairing in fixed index order: each free point is
    paired with its nearest free neighbour at distance ``< threshold``;
    unpaired points become phantoms."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    idx = np.arange(n) if indices is None else np.asarray(indices)
    partner = pair_close(space.code, pts, threshold, eligible=eligible, jit=jit)
    pairs, phantoms = [], []
    for i in range(n):
        j = partner[i]
        if j < 0:
            phantoms.append(idx[i])
        elif i < j:
            pairs.append((idx[i], idx[j]))
    return Pairing(tuple(pairs), tuple(phantoms))


# ------------------------------------------------------------------ search


def _sign_norms(D, R, S):
    """Operator norms of ``R + sum_p S[k, p] D[p]`` for each sign row ``k``."""
    P, n, _ = D.shape
    X = (S @ D.reshape(P, n * n)).reshape(-1, n, n) + R
    return batched_op_norm(X)


def _descend(D, R, s, max_sweeps):
    """Single-flip descent on the operator norm with batched evaluation."""
    X = R + np.tensordot(s, D, axes=1)
    best = op_norm(X)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        cand = batched_op_norm(X[None] - 2 * s[:, None, None] * D)
        p = int(np.argmin(cand))
        if cand[p] >= best - 1e-13:
            break
        X = X - 2 * s[p] * D[p]
        s[p] = -s[p]
        best = float(cand[p])
    return s, best, sweeps


def _frobenius_descent(D, R, s, max_iter=10_000):
    # ||X - 2 s_p D_p||_F^2 = ||X||^2 - 4 s_p <X, D_p> + 4 ||D_p||^2
    P = D.shape[0]
    Df = D.reshape(P, -1)
    sq = np.einsum("ij,ij->i", Df, Df.conj()).real
    X = (R + np.tensordot(s, D, axes=1)).reshape(-1)
    for _ in range(max_iter):
        gain = 4 * s * (Df.conj() @ X).real - 4 * sq
        p = int(np.argmax(gain))
        if gain[p] <= 1e-15:
            break
        X = X - 2 * s[p] * Df[p]
        s[p] = -s[p]
    return s


def _greedy_signs(D, R, use_opnorm):
    P = D.shape[0]
    s = np.ones(P)
    X = R.copy()
    for p in range(P):
        if use_opnorm:
            a = batched_op_norm(np.stack([X + D[p], X - D[p]]))
            s[p] = 1.0 if a[0] <= a[1] else -1.0
        else:
            s[p] = 1.0 if np.vdot(X, D[p]).real <= 0 else -1.0
        X = X + s[p] * D[p]
    return s


def search_signs(D, R, strategy="greedy", rng=None, restarts=4, max_sweeps=200,
                 tie_key=None):
    """Minimize ``||R + sum_p s_p D_p||`` over signs ``s in {-1, 1}^P``.

    Returns ``(signs, norm, stats)``. ``tie_key(signs) -> tuple`` orders
    equally good exhaustive optima (smaller wins).
    """
    D = np.asarray(D, dtype=complex)
    R = np.asarray(R, dtype=complex)
    P = D.shape[0]
    if P == 0:
        return np.ones(0), op_norm(R), {"evaluated": 1}
    if strategy == "exhaustive":
        if P > EXHAUSTIVE_MAX_PAIRS:
            raise ValueError(f"exhaustive search over {P} pairs is infeasible (max {EXHAUSTIVE_MAX_PAIRS})")
        best, best_rows = math.inf, []
        chunk = 1 << min(P, 12)
        total = 1 << P
        for start in range(0, total, chunk):
            codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
            S = 1.0 - 2.0 * ((codes[:, None] >> np.arange(P)) & 1)
            norms = _sign_norms(D, R, S)
            m = float(norms.min())
            if m < best - 1e-12:
                best, best_rows = m, []
            if m <= best + 1e-12:
                best_rows.extend(S[norms <= best + 1e-12])
        key = tie_key or (lambda s: tuple(s < 0))
        s = min(best_rows, key=key)
        return s.copy(), float(best), {"evaluated": total}
    if strategy == "greedy":
        s = _greedy_signs(D, R, use_opnorm=P * D.shape[1] ** 3 < 5e7)
        s = _frobenius_descent(D, R, s)
        s, val, sweeps = _descend(D, R, s, max_sweeps)
        return s, val, {"evaluated": P * (sweeps + 1), "sweeps": sweeps}
    if strategy == "randomized":
        if rng is None:
            raise ValueError("randomized search needs a generator")
        best_s, best, evals = None, math.inf, 0
        starts = [_greedy_signs(D, R, use_opnorm=False)]
        starts += [rng.choice([-1.0, 1.0], size=P) for _ in range(max(restarts - 1, 0))]
        for s0 in starts:
            s = _frobenius_descent(D, R, s0.copy())
            s, val, sweeps = _descend(D, R, s, max_sweeps)
            evals += P * (sweeps + 1)
            if val < best - 1e-13:
                best_s, best = s, val
        return best_s, best, {"evaluated": evals, "restarts": len(starts)}
    raise ValueError(f"unknown strategy {strategy!r}")


def _pair_differences(F, slots, scale):
    """Stack ``scale (T_a - T_b)`` for slots ``(a, b)`` with ``b = -1`` a phantom."""
    a = np.array([p[0] for p in slots], dtype=np.int64)
    b = np.array([p[1] for p in slots], dtype=np.int64)
    Fa = F[a]
    Fb = np.where((b >= 0)[:, None], F[np.maximum(b, 0)], 0.0)
    D = np.einsum("pi,pj->pij", Fa, Fa.conj()) - np.einsum("pi,pj->pij", Fb, Fb.conj())
    return scale * D


def _chosen_from_signs(slots, s):
    out = []
    for (a, b), sg in zip(slots, s):
        if sg > 0:
            out.append(a)
        elif b >= 0:
            out.append(b)
    return tuple(sorted(out))


def _level_select(F, survivors, pairing, scale, target, strategy, rng, **kw):
    """One binary selection of ``survivors`` (weight ``scale`` each).

    Slots whose two members are identical vectors contribute nothing and are
    resolved to their first member without search.
    """
    slots = pairing.slots()
    assert sorted(pairing.indices()) == sorted(survivors)
    live, fixed = [], []
    for a, b in slots:
        if b >= 0 and np.array_equal(F[a], F[b]):
            fixed.append(a)
        elif b < 0 and not np.any(F[a]):
            continue
        else:
            live.append((a, b))
    # with fixed slots resolved, R = scale * (sum_{surv} - 2 sum_{fixed} ... )
    # is written directly as the residual of the selection
    base = 2 * scale * weighted_gram(F[fixed]) if fixed else 0.0
    if live:
        s_all = np.array([p[0] for p in live])
        b_all = np.array([p[1] for p in live])
        tot = weighted_gram(F[s_all])
        if np.any(b_all >= 0):
            tot = tot + weighted_gram(F[b_all[b_all >= 0]])
        R = base + scale * tot - target
        D = _pair_differences(F, live, scale)
        key = lambda s: _chosen_from_signs(live, s)
        s, val, stats = search_signs(D, R, strategy, rng, tie_key=key, **kw)
        chosen = tuple(sorted(fixed + list(_chosen_from_signs(live, s))))
    else:
        chosen = tuple(sorted(fixed))
        val = op_norm(base - target) if fixed else op_norm(-target)
        stats = {"evaluated": 1}
    stats["live_pairs"] = len(live)
    return chosen, float(val), stats


def selection_deviation(F, chosen, weight, target) -> float:
    F = np.asarray(F, dtype=complex)
    T = np.asarray(getattr(target, "entries", target))
    if len(chosen) == 0:
        return op_norm(-T)
    return op_norm(weight * weighted_gram(F[list(chosen)]) - T)


def _certificate(family, chosen, level, C, strategy, stats):
    dev = selection_deviation(family.factors, chosen, 2.0 ** level * _unit_weight(family),
                              family.target)
    bound = C * math.sqrt(2.0 ** level * family.delta) if math.isfinite(C) else math.nan
    applicable = 2.0 ** level * family.delta < 1 and family.below_identity()
    stats = dict(stats, guarantee_applicable=applicable)
    return SelectorCertificate(level, tuple(int(i) for i in chosen), dev, bound,
                               bool(dev <= bound), strategy, stats)


def _unit_weight(family):
    ell = np.unique(family.exponents)
    if ell.size != 1:
        raise ValueError("level selection needs a family with a common weight")
    return 2.0 ** -int(ell[0])


def select_level(family: WeightedOpFamily, pairing: Pairing, strategy="exhaustive",
                 rng=None, C=None, **kw) -> SelectorCertificate:
    """Order-1 binary selector for ``pairing`` certified against
    ``C sqrt(2 delta)`` (``C`` defaults to the uniform selector constant)."""
    w = _unit_weight(family)
    if sorted(pairing.indices()) != list(range(family.size)):
        raise ValueError("pairing must cover every index of the family exactly once")
    chosen, _, stats = _level_select(family.factors, list(range(family.size)), pairing, w,
                                     family.target.entries, strategy, rng, **kw)
    C = uniform_constant(family.delta) if C is None else C
    return _certificate(family, chosen, 1, C, strategy, stats)


def _nested_exhaustive(F, survivors, N, scale, target, policy):
    # exhaustive over all nested selectors; fine for tiny families only
    best = (math.inf, ())

    def rec(surv, level, w):
        nonlocal best
        pairing = policy(surv)
        slots = pairing.slots()
        for bits in itertools.product((1.0, -1.0), repeat=len(slots)):
            chosen = list(_chosen_from_signs(slots, bits))
            if level == N:
                dev = selection_deviation(F, chosen, 2 * w, target)
                key = (dev, tuple(chosen))
                if key[0] < best[0] - 1e-12 or (abs(key[0] - best[0]) <= 1e-12 and key[1] < best[1]):
                    best = key
            else:
                rec(chosen, level + 1, 2 * w)

    rec(list(survivors), 1, scale)
    return best


def select_to_level(family: WeightedOpFamily, N: int, pairing_policy=None,
                    strategy="exhaustive", rng=None, C=None, **kw) -> SelectorCertificate:
    """Iterate order-1 selection ``N`` times, re-pairing the survivors with
    ``pairing_policy(survivors) -> Pairing`` (index order by default)."""
    if N < 1:
        raise ValueError("N must be positive")
    w = _unit_weight(family)
    policy = pairing_policy or (lambda surv: pair_by_block(surv, lambda i: 0))
    T = family.target.entries
    stats = {"levels": []}
    enum_size = sum(2 ** math.ceil(family.size / 2 ** k) for k in range(1, N + 1))
    if strategy == "exhaustive" and family.size <= 16 and enum_size <= 1 << 16:
        _, chosen = _nested_exhaustive(family.factors, range(family.size), N, w, T, policy)
        stats["nested"] = True
    else:
        survivors = list(range(family.size))
        for level in range(1, N + 1):
            pairing = policy(survivors)
            target = T
            chosen, dev, st = _level_select(family.factors, survivors, pairing,
                                            w * 2.0 ** (level - 1), target, strategy, rng, **kw)
            stats["levels"].append({"level": level, "deviation": dev, **st})
            survivors = list(chosen)
        chosen = tuple(survivors)
    C = uniform_constant(family.delta) if C is None else C
    return _certificate(family, chosen, N, C, strategy, stats)


# ------------------------------------------------------- block-constrained


@dataclass
class BlockSelection:
    chosen: tuple
    beta: int
    certificate: SelectorCertificate


def two_sided_margin(E: np.ndarray, K: Subspace, epsilon: float, gamma: float) -> float:
    """Smallest eigenvalue of ``eps P_{K^perp} + 4 sqrt(gamma) I -/+ E``; the
    two-sided bound holds iff this is ``>= -1e-8``."""
    n = E.shape[0]
    base = epsilon * (np.eye(n) - K.projector()) + 4 * math.sqrt(max(gamma, 0.0)) * np.eye(n)
    lo = np.linalg.eigvalsh(base - E)[0]
    hi = np.linalg.eigvalsh(base + E)[0]
    return float(min(lo, hi))


def block_constrained_select(family: WeightedOpFamily, blocks, K: Subspace, epsilon: float,
                             C: float | None = None, beta: int | None = None,
                             strategy="greedy", rng=None, candidates: int = 3,
                             **kw) -> BlockSelection:
    """Select at most one index per block with common weight ``2^-beta``.

    Each operator is expanded into ``2^(r - l_i)`` copies of weight ``2^-r``
    with ``r = max(l_i, beta) + 1``, padded with the fewest zero operators
    making the total weight an integer, and halved ``r - beta`` times,
    pairing inside blocks first. At most one copy per block survives.
    ``beta`` may be supplied directly (then ``C`` is only reported).
    """
    blocks = np.asarray(blocks)
    F, ell, delta = family.factors, family.exponents, family.delta
    T = family.target.entries
    if blocks.shape != (family.size,):
        raise ValueError("one block label per operator is required")
    if C is None:
        C = uniform_constant(delta)
    if beta is None:
        beta = compute_beta_block(epsilon, C, delta)
        limit = epsilon ** 2 / (2 * C ** 2 * delta)
    else:
        limit = 2.0 ** -beta
    mass = {}
    for b, l in zip(blocks, ell):
        mass[b] = mass.get(b, 0.0) + 2.0 ** -int(l)
    worst = max(mass.values()) if mass else 0.0
    if worst > limit * (1 + 1e-12):
        raise HypothesisError(f"block weight {worst:.6g} exceeds {limit:.6g}")
    gamma = float(np.trace(K.projector() @ T).real)
    if gamma > 1 + 1e-9:
        raise HypothesisError(f"compression trace {gamma:.6g} exceeds 1")

    r = int(max(int(ell.max()), beta)) + 1
    copies = (2 ** (r - ell)).astype(np.int64)
    owner = np.repeat(np.arange(family.size), copies)
    total = int(copies.sum())
    n_phantom = (-total) % (2 ** r)
    N = r - beta
    Fx = np.vstack([F[owner], np.zeros((n_phantom, family.dim), dtype=complex)])
    xblock = list(blocks[owner]) + [None] * n_phantom
    policy = lambda surv: pair_by_block(surv, lambda i: xblock[i])

    cands = []
    n_runs = 1 if strategy in ("exhaustive", "greedy") else max(candidates, 1)
    for run in range(n_runs):
        survivors = list(range(Fx.shape[0]))
        level_stats = []
        for level in range(1, N + 1):
            scale = 2.0 ** (level - 1 - r)
            pairing = policy(survivors)
            live = sum(1 for a, b in pairing.slots() if b >= 0 or np.any(Fx[a]))
            strat = strategy if not (strategy == "exhaustive" and live > EXHAUSTIVE_MAX_PAIRS) else "greedy"
            chosen, dev, st = _level_select(Fx, survivors, pairing, scale, T, strat, rng, **kw)
            level_stats.append({"level": level, "deviation": dev, "strategy": strat, **st})
            survivors = list(chosen)
        picked = tuple(sorted({int(owner[i]) for i in survivors if i < total}))
        cands.append((picked, level_stats))

    PK = K.projector()
    scored = []
    for picked, level_stats in cands:
        S = 2.0 ** -beta * weighted_gram(F[list(picked)]) if picked else np.zeros_like(T)
        E = S - T
        margin = two_sided_margin(E, K, epsilon, gamma)
        trK = float(np.trace(PK @ S).real)
        dev = op_norm(E)
        scored.append(((margin < -PSD_SLACK, trK > gamma + 1e-9, dev, picked),
                       picked, margin, trK, dev, level_stats))
    scored.sort(key=lambda t: t[0])
    _, picked, margin, trK, dev, level_stats = scored[0]

    counts = {}
    for i in picked:
        counts[blocks[i]] = counts.get(blocks[i], 0) + 1
    assert all(c <= 1 for c in counts.values()), "two indices selected in one block"

    bound = C * math.sqrt(2.0 ** -beta * delta) if math.isfinite(C) else math.nan
    cert = SelectorCertificate(
        N, picked, dev, bound, bool(margin >= -PSD_SLACK), strategy,
        {"beta": beta, "r": r, "phantoms": n_phantom, "expanded": total, "gamma": gamma,
         "trace_K": trK, "two_sided_margin": margin, "candidates": len(cands),
         "levels": level_stats},
    )
    return BlockSelection(picked, beta, cert)
