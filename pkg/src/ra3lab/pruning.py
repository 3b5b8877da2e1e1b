"""Action-subset quality, suboptimal-action detection, and demo-driven pruning.

All quantities are computed exactly over finite, explicit task distributions:
subset values come from value iteration (classical gamma^0 reward indexing),
candidate subsets are enumerated exhaustively below a configurable cap, and
the only randomness is the i.i.d. task sample standing in for the expert
demonstrations.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .mdp import optimal_value, greedy_policy, policy_value, TaskDistribution, Mdp
from .util import rng_stream

EXHAUSTIVE_CAP = 16


@dataclass
class PruneOutcome:
    """Result of one demonstration-driven pruning run."""

    surviving: frozenset
    n_demos: int
    per_action_survival: dict
    pruning_error: float
    surviving_subsets: tuple
    sampled_tasks: tuple


class DeltaCache:
    """Memoizes restricted optimal values per (task, subset) for a fixed
    distribution, so replication loops amortize every value iteration."""

    def __init__(self, dist):
        self.dist = dist
        self.universe = frozenset(dist.universe)
        self._v0 = {}
        self._full = {}

    def _check(self, subset):
        subset = frozenset(subset)
        unknown = subset - self.universe
        if unknown:
            raise ValueError(f"unknown action ids {sorted(unknown)}")
        return subset

    def value(self, task_i, subset):
        """V*(s0) of task task_i restricted to subset; empty subset counts 0."""
        subset = self._check(subset)
        if not subset:
            return 0.0
        key = (task_i, subset)
        if key not in self._v0:
            task = self.dist.tasks[task_i]
            v = optimal_value(task, subset, options=self.dist.options)
            self._v0[key] = float(v[task.initial_state])
        return self._v0[key]

    def full_value(self, task_i):
        if task_i not in self._full:
            self._full[task_i] = self.value(task_i, self.universe)
        return self._full[task_i]

    def delta(self, task_i, subset):
        return self.full_value(task_i) - self.value(task_i, subset)

    def expected_delta(self, subset):
        subset = self._check(subset)
        return float(sum(w * self.delta(i, subset)
                         for i, w in enumerate(self.dist.weights)))


def delta(mdp, subset, options=None):
    """Optimal-value loss at s0 from restricting to `subset`.

    The reference optimal value uses the mdp's full action universe (all
    option ids when `options` is given, else all primitive actions).
    """
    universe = set(options) if options is not None else set(mdp.actions)
    subset = set(subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    if subset - universe:
        raise ValueError(f"unknown action ids {sorted(subset - universe)}")
    s0 = mdp.initial_state
    v_full = optimal_value(mdp, universe, options=options)[s0]
    v_sub = optimal_value(mdp, subset, options=options)[s0]
    return float(v_full - v_sub)


def _subsets(ids, size):
    return itertools.combinations(sorted(ids), size)


def _require_cap(n, cap):
    if n > cap:
        raise ValueError(
            f"action universe of size {n} exceeds the exhaustive-search cap {cap}; "
            "shrink the universe or raise the cap explicitly")


def min_eps_subset_size(dist, eps, cap=EXHAUSTIVE_CAP):
    """Smallest k with a k-subset eps-optimal for every task, plus the
    lexicographically first witness subset."""
    cache = DeltaCache(dist)
    ids = sorted(cache.universe)
    _require_cap(len(ids), cap)
    for k in range(1, len(ids) + 1):
        for sub in _subsets(ids, k):
            if all(cache.delta(i, sub) <= eps for i in range(len(dist.tasks))):
                return k, frozenset(sub)
    raise AssertionError("full universe must be 0-optimal")  # unreachable


def eps_optimal_actions(dist, task_i, eps, cap=EXHAUSTIVE_CAP, cache=None):
    """Union of inclusion-minimal eps-optimal subsets of one task.

    Monotonicity makes "eps-optimal" upward closed, so the full universe is
    always eps-optimal and membership in *some* eps-optimal subset would be
    vacuous; an action belongs here iff it is pivotal in some minimal subset.
    """
    cache = cache or DeltaCache(dist)
    ids = sorted(cache.universe)
    _require_cap(len(ids), cap)
    ok = {}
    for k in range(1, len(ids) + 1):
        for sub in _subsets(ids, k):
            ok[frozenset(sub)] = cache.delta(task_i, sub) <= eps
    members = set()
    for sub, good in ok.items():
        if not good:
            continue
        if any(ok[sub - {z}] for z in sub if len(sub) > 1):
            continue  # some proper subset already eps-optimal -> not minimal
        members |= sub
    return frozenset(members)


def is_suboptimal_action(z, dist, eps, sigma, cap=EXHAUSTIVE_CAP, cache=None):
    """True iff P_{M~p}[z outside the task's eps-optimal action union] >= sigma."""
    cache = cache or DeltaCache(dist)
    if z not in cache.universe:
        raise ValueError(f"unknown action id {z!r}")
    if not (0.0 <= sigma <= 1.0):
        raise ValueError("sigma must lie in [0, 1]")
    p_out = sum(w for i, w in enumerate(dist.weights)
                if z not in eps_optimal_actions(dist, i, eps, cap, cache))
    return bool(p_out >= sigma - 1e-15)


def prune_from_demos(dist, eps, n_demos, subset_size, seed, cap=EXHAUSTIVE_CAP,
                     cache=None):
    """Reject candidate subsets that lose more than eps on any sampled task.

    Samples n_demos tasks i.i.d. from the distribution (a demonstration
    reveals its task), keeps every size-`subset_size` subset whose regret is
    <= eps on all sampled tasks, and returns the union of survivors. The
    rejection test is Delta(M_i, Z') > eps. Deterministic given the seed;
    demo samples are prefix-nested in n_demos for a fixed seed.
    """
    cache = cache or DeltaCache(dist)
    ids = sorted(cache.universe)
    _require_cap(len(ids), cap)
    if subset_size < 1 or subset_size > len(ids):
        raise ValueError("subset_size out of range")
    if n_demos < 0:
        raise ValueError("n_demos must be >= 0")

    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed, "pruning")
    cum = np.cumsum(dist.weights)
    u = rng.random(n_demos)
    sampled = tuple(int(np.searchsorted(cum, x, side="right")) for x in u)
    sampled = tuple(min(i, len(dist.tasks) - 1) for i in sampled)

    unique = sorted(set(sampled))
    survivors = []
    for sub in _subsets(ids, subset_size):
        if all(cache.delta(i, sub) <= eps for i in unique):
            survivors.append(frozenset(sub))
    surviving = frozenset().union(*survivors) if survivors else frozenset()
    return PruneOutcome(
        surviving=surviving,
        n_demos=n_demos,
        per_action_survival={z: z in surviving for z in ids},
        pruning_error=cache.expected_delta(surviving) if surviving
        else float(sum(w * cache.full_value(i) for i, w in enumerate(dist.weights))),
        surviving_subsets=tuple(survivors),
        sampled_tasks=sampled,
    )


def sample_complexity(z_bar_size, z_size, delta_, sigma, constant=1.0):
    """ceil( constant * |Zbar| * ln(|Z| / delta) / sigma )."""
    if z_bar_size <= 0 or z_size <= 0 or constant <= 0:
        raise ValueError("sizes and constant must be positive")
    if not (0.0 < delta_ < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if not (0.0 < sigma <= 1.0):
        raise ValueError("sigma must lie in (0, 1]")
    return math.ceil(constant * z_bar_size * math.log(z_size / delta_) / sigma)


def regret_decompose(dist, subset, policy_ids, policy):
    """Split E[V* - V^pi] into pruning error + in-subset RL error.

    `policy` is a (S, len(policy_ids)) row-stochastic table over the option
    ids `policy_ids`, which must all lie in `subset` (admissibility in both
    the full and the restricted task). Returns (pruning_error, rl_error,
    total_regret), each an exact expectation over the distribution.
    """
    subset = frozenset(subset)
    if set(policy_ids) - subset:
        raise ValueError("policy uses actions outside the subset")
    cache = DeltaCache(dist)
    cache._check(subset)
    pruning = rl = total = 0.0
    for i, (task, w) in enumerate(zip(dist.tasks, dist.weights)):
        s0 = task.initial_state
        v_pi = policy_value(task, list(policy_ids), policy, options=dist.options)[s0]
        v_full = cache.full_value(i)
        v_sub = cache.value(i, subset)
        pruning += w * (v_full - v_sub)
        rl += w * (v_sub - v_pi)
        total += w * (v_full - v_pi)
    return float(pruning), float(rl), float(total)


# ---------------------------------------------------------------------------
# Replication experiment for the sample-complexity bound


def default_prune_distribution(n_useless=5, gamma=0.9, lenient_weight=0.5):
    """8-action distribution with needed actions {0,1,2} and useless tail.

    Pair tasks (j, k) demand both actions of the pair (alternating two-state
    machine); the lenient task accepts anything. The minimal globally
    eps-optimal subset is exactly {0, 1, 2} and every useless action is
    (eps, lenient_weight)-suboptimal for eps below the pair-task value gap.
    """
    ids = tuple(range(3 + n_useless))
    n_a = len(ids)

    def pair_task(j, k):
        reward = np.zeros((2, n_a))
        trans = np.zeros((2, n_a, 2))
        reward[0, j] = 1.0
        reward[1, k] = 1.0
        for a in range(n_a):
            trans[0, a, 0] = 1.0
            trans[1, a, 1] = 1.0
        trans[0, j] = [0.0, 1.0]
        trans[1, k] = [1.0, 0.0]
        return Mdp(actions=ids, reward=reward, transition=trans, gamma=gamma)

    reward = np.ones((2, n_a))
    trans = np.zeros((2, n_a, 2))
    trans[:, :, 0] = 1.0
    lenient = Mdp(actions=ids, reward=reward, transition=trans, gamma=gamma)

    tasks = (lenient, pair_task(0, 1), pair_task(0, 2), pair_task(1, 2))
    pair_w = (1.0 - lenient_weight) / 3.0
    return TaskDistribution(tasks=tasks, weights=(lenient_weight, pair_w, pair_w, pair_w))


def prune_experiment(dist, eps, sigma, delta_, constant, replications, seed,
                     cap=EXHAUSTIVE_CAP):
    """Replicated pruning runs at the theorem's demo count.

    Returns (rows, summary): one row per replication with the action-level
    and subset-level suboptimal-survival flags, plus a summary with the
    survival rates and the binomial tolerance delta + 3 sqrt(delta(1-delta)/R).
    """
    cache = DeltaCache(dist)
    ids = sorted(cache.universe)
    z_bar, witness = min_eps_subset_size(dist, eps, cap)
    n_demos = sample_complexity(z_bar, len(ids), delta_, sigma, constant)

    bad_actions = frozenset(
        z for z in ids if is_suboptimal_action(z, dist, eps, sigma, cap, cache))
    n_tasks = len(dist.tasks)
    bad_subsets = frozenset(
        frozenset(sub) for sub in _subsets(ids, z_bar)
        if sum(w for i, w in enumerate(dist.weights)
               if cache.delta(i, sub) > eps) >= sigma - 1e-15)

    rows = []
    for rep in range(replications):
        out = prune_from_demos(dist, eps, n_demos, z_bar,
                               rng_stream(seed, "pruning", rep), cap, cache)
        rows.append({
            "replication": rep,
            "n_demos": n_demos,
            "survived_suboptimal": int(bool(bad_actions & out.surviving)),
            "survived_suboptimal_subset": int(
                any(s in bad_subsets for s in out.surviving_subsets)),
            "pruning_error": out.pruning_error,
        })
    rate = sum(r["survived_suboptimal"] for r in rows) / max(len(rows), 1)
    rate_sub = sum(r["survived_suboptimal_subset"] for r in rows) / max(len(rows), 1)
    summary = {
        "n_demos": n_demos,
        "z_bar": z_bar,
        "witness": sorted(witness),
        "suboptimal_actions": sorted(bad_actions),
        "survival_rate": rate,
        "survival_rate_subset": rate_sub,
        "tolerance": delta_ + 3.0 * math.sqrt(delta_ * (1 - delta_) / max(replications, 1)),
        "max_pruning_error": max((r["pruning_error"] for r in rows), default=0.0),
        "eps": eps,
    }
    return rows, summary
