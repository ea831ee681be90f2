"""Candidate selection rules for growing the active set.

Five rules are supported:

``greedy``        per block, the ``P`` most violated pairs outside the active set
``random``        ``K`` pairs sampled uniformly from outside the active set
``random-block``  per block, ``P`` pairs sampled uniformly
``rtg``           sample ``M`` pairs, keep the ``K`` most violated
``block-rtg``     sample ``G`` blocks, keep the ``P`` most violated in each

A block is a row ``{(i, j): j != i}`` or a column ``{(i, j): i != j}`` of the
pair grid.  Only the greedy rule ever scans all pairs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ExhaustedCandidates
from .problem import ActiveSet, PrimalPoint, ProblemData, _slack, pair_from_flat


class Rule(str, enum.Enum):
    GREEDY = "greedy"
    RANDOM = "random"
    RANDOM_BLOCK = "random-block"
    RTG = "rtg"
    BLOCK_RTG = "block-rtg"


class Orientation(str, enum.Enum):
    ROW = "row"
    COL = "col"


RULE_NUMBER = {Rule.GREEDY: 1, Rule.RANDOM: 2, Rule.RANDOM_BLOCK: 3, Rule.RTG: 4, Rule.BLOCK_RTG: 5}


@dataclass
class RuleConfig:
    """Rule choice and its size parameters.  ``None`` means the n-dependent default."""

    rule: Rule = Rule.RTG
    P: int | None = None
    K: int | None = None
    M: int | None = None
    G: int | None = None
    orientation: Orientation = Orientation.ROW
    tau: float = 1e-4

    def __post_init__(self):
        self.rule = Rule(self.rule)
        self.orientation = Orientation(self.orientation)
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        for name in ("P", "K", "M", "G"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ValueError(f"{name} must be at least 1")

    def resolved(self, n: int) -> "RuleConfig":
        """Fill unset parameters with defaults for an instance of size ``n``."""
        root = math.ceil(math.sqrt(n))
        if self.rule is Rule.BLOCK_RTG:
            P = self.P or root
        else:
            P = self.P or 1
        K = self.K or n
        M = self.M or 4 * n
        G = self.G or root
        if self.rule is Rule.RTG and K > M:
            raise ValueError("rtg needs K <= M")
        return RuleConfig(self.rule, P, K, M, G, self.orientation, self.tau)

    def max_selected(self, n: int) -> int:
        """Upper bound on the number of candidates one call can return."""
        c = self.resolved(n)
        return {
            Rule.GREEDY: n * c.P,
            Rule.RANDOM: c.K,
            Rule.RANDOM_BLOCK: n * c.P,
            Rule.RTG: c.K,
            Rule.BLOCK_RTG: c.G * c.P,
        }[c.rule]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _smallest(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest entries, ordered by (value, index)."""
    m = len(values)
    if k >= m:
        return np.argsort(values, kind="stable")
    kth = np.partition(values, k - 1)[k - 1]
    cand = np.flatnonzero(values <= kth)
    return cand[np.argsort(values[cand], kind="stable")][:k]


class _Engine:
    """Implements the rules given a way to score pairs.

    ``score_pairs(i, j)`` scores explicit pairs; ``score_blocks(b)`` returns a
    ``len(b) x n`` matrix for whole blocks (the within-block coordinate is the
    column for row blocks and the row for column blocks).  Smaller scores are
    preferred by greedy steps.  Pairs in ``W`` are never returned.
    """

    def __init__(self, n, W, score_pairs, score_blocks, rng, orientation):
        self.n = n
        self.N = n * (n - 1)
        self.W = W
        self.score_pairs = score_pairs
        self.score_blocks = score_blocks
        self.rng = rng
        self.row_blocks = orientation is Orientation.ROW
        self.scanned = 0

    def _block_members(self, b: int) -> set[int]:
        W = self.W
        if W is None:
            return set()
        return W.row(b) if self.row_blocks else W.col(b)

    def _block_count(self, b: int) -> int:
        W = self.W
        if W is None:
            return 0
        return int(W.row_count[b] if self.row_blocks else W.col_count[b])

    def _pairs_of_block(self, b: int, other: np.ndarray):
        b_arr = np.full(len(other), b, dtype=np.int64)
        return (b_arr, other) if self.row_blocks else (other, b_arr)

    def _complement(self):
        """Row-major list of all pairs outside ``W``."""
        n = self.n
        w = np.arange(self.N, dtype=np.int64)
        i, j = pair_from_flat(w, n)
        if self.W is not None and len(self.W):
            keep = ~self.W.contains_keys(i * n + j)
            i, j = i[keep], j[keep]
        return i, j

    def sample_uniform(self, k: int):
        """``k`` distinct pairs drawn uniformly from outside ``W``."""
        n, N = self.n, self.N
        w_size = len(self.W) if self.W is not None else 0
        free = N - w_size
        if free <= 0:
            raise ExhaustedCandidates("every pair is already in the active set")
        if free <= k:
            return self._complement()
        if w_size > N // 2:
            i, j = self._complement()
            pick = self.rng.choice(len(i), size=k, replace=False)
            return i[pick], j[pick]
        chosen_i, chosen_j = [], []
        seen: set[int] = set()
        need = k
        while need > 0:
            batch = int(math.ceil(1.25 * need * N / free)) + 16
            flat = self.rng.integers(0, N, size=batch)
            i, j = pair_from_flat(flat, n)
            keys = i * n + j
            ok = ~self.W.contains_keys(keys) if w_size else np.ones(batch, dtype=bool)
            for a, b, key, good in zip(i.tolist(), j.tolist(), keys.tolist(), ok.tolist()):
                if not good or key in seen:
                    continue
                seen.add(key)
                chosen_i.append(a)
                chosen_j.append(b)
                need -= 1
                if need == 0:
                    break
        return np.array(chosen_i, dtype=np.int64), np.array(chosen_j, dtype=np.int64)

    def sample_in_block(self, b: int, k: int) -> np.ndarray:
        """``k`` distinct within-block coordinates outside ``W`` (fewer if unavailable)."""
        n = self.n
        members = self._block_members(b)
        taken = len(members)
        free = n - 1 - taken
        if free <= 0:
            return np.empty(0, dtype=np.int64)
        if free <= k or taken > (n - 1) // 2:
            others = np.array([c for c in range(n) if c != b and c not in members], dtype=np.int64)
            if free <= k:
                return others
            return others[self.rng.choice(free, size=k, replace=False)]
        out: list[int] = []
        while len(out) < k:
            r = self.rng.integers(0, n - 1, size=2 * (k - len(out)) + 4)
            for c in (r + (r >= b)).tolist():
                if c in members or c in out:
                    continue
                out.append(c)
                if len(out) == k:
                    break
        return np.array(out, dtype=np.int64)

    def greedy_blocks(self, blocks: np.ndarray, k: int, tile: int = 256):
        """Per block, the ``k`` best-scored pairs outside ``W``."""
        out_i, out_j, out_s = [], [], []
        for start in range(0, len(blocks), tile):
            bt = blocks[start:start + tile]
            S = np.array(self.score_blocks(bt), dtype=float)
            self.scanned += len(bt) * (self.n - 1)
            S[np.arange(len(bt)), bt] = np.inf
            for a, b in enumerate(bt.tolist()):
                members = self._block_members(b)
                if members:
                    S[a, list(members)] = np.inf
            if k == 1:
                best = np.argmin(S, axis=1)
                vals = S[np.arange(len(bt)), best]
                ok = np.isfinite(vals)
                if self.row_blocks:
                    out_i.append(bt[ok])
                    out_j.append(best[ok])
                else:
                    out_i.append(best[ok])
                    out_j.append(bt[ok])
                out_s.append(vals[ok])
                continue
            for a, b in enumerate(bt.tolist()):
                row = S[a]
                idx = _smallest(row, k)
                idx = idx[np.isfinite(row[idx])]
                bi, bj = self._pairs_of_block(b, idx)
                out_i.append(bi)
                out_j.append(bj)
                out_s.append(row[idx])
        if not out_i:
            return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
        return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_s)

    def top_k(self, i, j, s, k):
        """Keep the ``k`` smallest scores, ties broken by (i, j)."""
        order = np.lexsort((j, i, s))[:k]
        return i[order], j[order], s[order]

    def select(self, cfg: RuleConfig):
        n = self.n
        rule = cfg.rule
        if rule is Rule.GREEDY:
            return self.greedy_blocks(np.arange(n, dtype=np.int64), cfg.P)
        if rule is Rule.BLOCK_RTG:
            blocks = self.rng.choice(n, size=min(cfg.G, n), replace=False).astype(np.int64)
            return self.greedy_blocks(blocks, cfg.P)
        if rule is Rule.RANDOM_BLOCK:
            out_i, out_j = [], []
            for b in range(n):
                other = self.sample_in_block(b, cfg.P)
                if len(other):
                    bi, bj = self._pairs_of_block(b, other)
                    out_i.append(bi)
                    out_j.append(bj)
            if not out_i:
                raise ExhaustedCandidates("every pair is already in the active set")
            i, j = np.concatenate(out_i), np.concatenate(out_j)
            self.scanned += len(i)
            return i, j, self.score_pairs(i, j)
        if rule is Rule.RANDOM:
            i, j = self.sample_uniform(cfg.K)
            self.scanned += len(i)
            return i, j, self.score_pairs(i, j)
        if rule is Rule.RTG:
            i, j = self.sample_uniform(cfg.M)
            self.scanned += len(i)
            return self.top_k(i, j, self.score_pairs(i, j), cfg.K)
        raise ValueError(f"unknown rule {rule}")


def _primal_scorers(p: ProblemData, prim: PrimalPoint, orientation: Orientation):
    X, phi, xi = p.X, prim.phi, prim.xi
    offset = phi - np.einsum("ij,ij->i", X, xi)

    def score_pairs(i, j):
        return _slack(X, phi, xi, i, j)

    if orientation is Orientation.ROW:
        def score_blocks(rows):
            # v[a, j] = phi_j - <x_j, xi_i> - (phi_i - <x_i, xi_i>)
            return phi[None, :] - xi[rows] @ X.T - offset[rows, None]
    else:
        def score_blocks(cols):
            # v[b, i] = phi_j - <x_j, xi_i> - (phi_i - <x_i, xi_i>)
            return phi[cols, None] - X[cols] @ xi.T - offset[None, :]
    return score_pairs, score_blocks


def select_candidates(
    p: ProblemData,
    prim: PrimalPoint,
    W: ActiveSet,
    cfg: RuleConfig,
    rng: np.random.Generator,
    stats: dict | None = None,
):
    """Pairs proposed by the configured rule and their violations.

    Returns ``(pairs, v)`` where ``pairs`` is a ``k x 2`` integer array of
    0-based pairs outside ``W``.  When ``stats`` is given, ``stats["scanned"]``
    is incremented by the number of pair violations evaluated.
    """
    cfg = cfg.resolved(p.n)
    if len(W) >= p.n_pairs:
        raise ExhaustedCandidates("every pair is already in the active set")
    score_pairs, score_blocks = _primal_scorers(p, prim, cfg.orientation)
    eng = _Engine(p.n, W, score_pairs, score_blocks, rng, cfg.orientation)
    i, j, v = eng.select(cfg)
    if stats is not None:
        stats["scanned"] = stats.get("scanned", 0) + eng.scanned
    return np.column_stack([i, j]).astype(np.int64), np.asarray(v, dtype=float)


def filter_violated(candidates, v, tau: float):
    """Keep candidates with ``v < -tau``, preserving order."""
    candidates = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    v = np.asarray(v, dtype=float)
    return candidates[v < -tau]


# Norm-equivalence constants (alpha, beta) for each rule, W empty.
def rule_constants(cfg: RuleConfig, n: int) -> tuple[float, float]:
    c = cfg.resolved(n)
    N = n * (n - 1)
    return {
        Rule.GREEDY: ((n - 1) / c.P, 1.0),
        Rule.RANDOM: (N / c.K, N / c.K),
        Rule.RANDOM_BLOCK: ((n - 1) / c.P, (n - 1) / c.P),
        Rule.RTG: (N / c.K, N / c.M),
        Rule.BLOCK_RTG: (N / (c.G * c.P), n / c.G),
    }[c.rule]


def rule_norm_sq(theta, cfg: RuleConfig, rng: np.random.Generator, mc_samples: int = 10_000):
    """Monte Carlo estimate of the rule-induced squared norm of ``theta``.

    ``theta`` is indexed by pairs in row-major order (see
    :func:`cvxreg.problem.all_pairs`).  The selection uses the rule with an
    empty active set and prefers large ``|theta|``.  The greedy rule is
    deterministic and evaluated exactly.  Returns ``(estimate, std_err)``.
    """
    theta = np.asarray(theta, dtype=float)
    N = len(theta)
    n = int(round((1 + math.sqrt(1 + 4 * N)) / 2))
    if n * (n - 1) != N:
        raise ValueError(f"length {N} is not n(n-1) for any n")
    cfg = cfg.resolved(n)
    grid = np.full((n, n), np.inf)
    i_all, j_all = pair_from_flat(np.arange(N), n)
    grid[i_all, j_all] = -np.abs(theta)
    sq = np.zeros((n, n))
    sq[i_all, j_all] = theta ** 2

    def score_pairs(i, j):
        return grid[i, j]

    if cfg.orientation is Orientation.ROW:
        def score_blocks(b):
            return grid[b]
    else:
        def score_blocks(b):
            return grid[:, b].T

    def draw():
        eng = _Engine(n, None, score_pairs, score_blocks, rng, cfg.orientation)
        i, j, _ = eng.select(cfg)
        return float(sq[i, j].sum())

    if cfg.rule is Rule.GREEDY:
        return draw(), 0.0
    samples = np.array([draw() for _ in range(int(mc_samples))])
    if samples.std() == 0.0:
        return float(samples.mean()), 0.0
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(len(samples)))
