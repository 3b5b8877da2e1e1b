"""Finite MDPs, task distributions, and temporally extended actions.

Everything downstream (planning, pruning, post-training) works off the two
compiled tables of an (mdp, option set) pair:

* ``rew[z, s]``  -- expected discounted reward of executing option z from s,
* ``ker[z, s, s']`` -- E[gamma^tau * 1(s_tau = s')], the discounted
  transition kernel; each row sums to E[gamma^tau | s, z] <= gamma.

A primitive action is the option with a single length-1 sequence. Two reward
discounting conventions are supported: the classical one starting at
gamma^0 (``discount_from_step_one=False``, default here) and the variant
starting at gamma^1 used by the planner's convergence verification. Both
share the same kernel and hence the same contraction factor.
"""

from dataclasses import dataclass, field

import json
import numpy as np

from . import kernels

ROW_SUM_TOL = 1e-12
VALUE_TOL = 1e-10
MAX_ITER = 10**6


@dataclass(frozen=True)
class Mdp:
    """Finite task (S, A, R, P, gamma, s0) with explicit tables.

    reward: (S, A) array; transition: (S, A, S) row-stochastic array.
    ``actions`` holds the primitive-action ids; tables are indexed by
    position in that tuple.
    """

    actions: tuple
    reward: np.ndarray
    transition: np.ndarray
    gamma: float
    initial_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "reward", np.asarray(self.reward, dtype=float))
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=float))
        object.__setattr__(self, "actions", tuple(self.actions))
        s, a = self.reward.shape
        if self.transition.shape != (s, a, s):
            raise ValueError(f"transition shape {self.transition.shape} != {(s, a, s)}")
        if len(self.actions) != a:
            raise ValueError("actions / reward width mismatch")
        if len(set(self.actions)) != a:
            raise ValueError("duplicate action ids")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not np.all(np.isfinite(self.reward)):
            raise ValueError("rewards must be finite")
        rows = self.transition.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if np.any(self.transition < 0):
            raise ValueError("negative transition probabilities")
        if not (0 <= self.initial_state < s):
            raise ValueError("initial_state out of range")

    @property
    def n_states(self):
        return self.reward.shape[0]

    @property
    def r_max(self):
        return float(self.reward.max())

    def action_index(self, action_id):
        return self.actions.index(action_id)


@dataclass(frozen=True)
class OptionSpec:
    """Abstract action: per-state distribution over primitive sequences.

    body[s] is a tuple of (prob, actions) pairs, actions a nonempty tuple of
    primitive-action ids; the option is admissible in every state.
    """

    id: int
    body: tuple

    def __post_init__(self):
        norm = []
        for s, seqs in enumerate(self.body):
            seqs = tuple((float(p), tuple(a)) for p, a in seqs)
            tot = sum(p for p, _ in seqs)
            if abs(tot - 1.0) > ROW_SUM_TOL:
                raise ValueError(f"option {self.id}: state {s} sequence probs sum to {tot}")
            for p, acts in seqs:
                if len(acts) < 1:
                    raise ValueError(f"option {self.id}: zero-length sequence in state {s}")
                if p < 0:
                    raise ValueError(f"option {self.id}: negative sequence prob")
            norm.append(seqs)
        object.__setattr__(self, "body", tuple(norm))

    def max_duration(self):
        return max(len(a) for seqs in self.body for _, a in seqs)


def primitive_option(action_id, n_states):
    """Wrap a primitive action as the length-1 option with the same id."""
    return OptionSpec(action_id, tuple(((1.0, (action_id,)),) for _ in range(n_states)))


def primitive_options(mdp):
    return {a: primitive_option(a, mdp.n_states) for a in mdp.actions}


def compile_tables(mdp, options, discount_from_step_one=False):
    """Compile (rew, ker) tables for an ordered list of OptionSpec.

    Walks each primitive sequence through the transition tensor exactly.
    With discount_from_step_one the k-th reward in a sequence is weighted
    gamma^k (k = 1..tau); otherwise gamma^(k-1).
    """
    n_s = mdp.n_states
    gamma = mdp.gamma
    idx = {a: i for i, a in enumerate(mdp.actions)}
    rew = np.zeros((len(options), n_s))
    ker = np.zeros((len(options), n_s, n_s))
    for zi, opt in enumerate(options):
        if len(opt.body) != n_s:
            raise ValueError(f"option {opt.id} body does not cover all {n_s} states")
        for s in range(n_s):
            for prob, acts in opt.body[s]:
                d = np.zeros(n_s)
                d[s] = 1.0
                r_seq = 0.0
                disc = gamma if discount_from_step_one else 1.0
                for a in acts:
                    ai = idx[a]
                    r_seq += disc * float(d @ mdp.reward[:, ai])
                    d = d @ mdp.transition[:, ai, :]
                    disc *= gamma
                tau = len(acts)
                rew[zi, s] += prob * r_seq
                ker[zi, s] += prob * (gamma ** tau) * d
    return rew, ker


def _resolve(mdp, action_set, options):
    """Map an id subset to an ordered (ids, OptionSpec list) pair."""
    if options is None:
        options = primitive_options(mdp)
    ids = sorted(action_set)
    if not ids:
        raise ValueError("action_set must be nonempty")
    missing = [z for z in ids if z not in options]
    if missing:
        raise ValueError(f"unknown action ids {missing}")
    return ids, [options[z] for z in ids]


def optimal_value(mdp, action_set, options=None, tol=VALUE_TOL,
                  discount_from_step_one=False, max_iter=MAX_ITER):
    """Fixed point of the semi-MDP Bellman operator restricted to action_set.

    ``options`` maps ids to OptionSpec; omitted means the primitive actions.
    Converges to sup-norm residual <= tol (default 1e-10).
    """
    _, opts = _resolve(mdp, action_set, options)
    rew, ker = compile_tables(mdp, opts, discount_from_step_one)
    v, _, ok = kernels.vi_solve(rew, ker, tol, max_iter)
    if not ok:
        raise RuntimeError(f"value iteration did not reach residual {tol} in {max_iter} iters")
    return v


def greedy_policy(mdp, action_set, options=None, discount_from_step_one=False):
    """Deterministic policy (as a (S, |ids|) row-stochastic array) greedy
    wrt the restricted optimal value; returns (ids, policy)."""
    ids, opts = _resolve(mdp, action_set, options)
    rew, ker = compile_tables(mdp, opts, discount_from_step_one)
    v, _, _ = kernels.vi_solve(rew, ker, VALUE_TOL, MAX_ITER)
    q = rew + ker @ v
    pol = np.zeros((mdp.n_states, len(ids)))
    pol[np.arange(mdp.n_states), np.argmax(q, axis=0)] = 1.0
    return ids, pol


def policy_value(mdp, ids, policy, options=None, discount_from_step_one=False):
    """Exact value of a stationary policy over option ids (linear solve)."""
    ids2, opts = _resolve(mdp, set(ids), options)
    if list(ids2) != sorted(ids):
        raise ValueError("ids must be unique")
    rew, ker = compile_tables(mdp, opts, discount_from_step_one)
    pol = np.asarray(policy, dtype=float)[:, np.argsort(ids)]
    r_pi = np.einsum("sz,zs->s", pol, rew)
    k_pi = np.einsum("sz,zst->st", pol, ker)
    return np.linalg.solve(np.eye(mdp.n_states) - k_pi, r_pi)


def rollout(mdp, policy, horizon, seed):
    """Roll a (S, A) primitive policy for `horizon` steps from s0.

    Deterministic given the seed (or Generator). Returns (states, action_ids,
    rewards) arrays of length horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pol = np.asarray(policy, dtype=float)
    states = np.empty(horizon, dtype=np.int64)
    action_ids = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    s = mdp.initial_state
    for t in range(horizon):
        a = rng.choice(len(mdp.actions), p=pol[s])
        states[t] = s
        action_ids[t] = mdp.actions[a]
        rewards[t] = mdp.reward[s, a]
        s = rng.choice(mdp.n_states, p=mdp.transition[s, a])
    return states, action_ids, rewards


def rollout_returns(mdp, policy, horizon, n_rollouts, rng):
    """Vectorized discounted returns of n_rollouts seeded rollouts."""
    pol = np.asarray(policy, dtype=float)
    s = np.full(n_rollouts, mdp.initial_state, dtype=np.int64)
    ret = np.zeros(n_rollouts)
    disc = 1.0
    pol_cum = np.cumsum(pol, axis=1)
    trans_cum = np.cumsum(mdp.transition, axis=2)
    for _ in range(horizon):
        a = (pol_cum[s] <= rng.random(n_rollouts)[:, None]).sum(axis=1)
        a = np.minimum(a, pol.shape[1] - 1)
        ret += disc * mdp.reward[s, a]
        nxt = (trans_cum[s, a] <= rng.random(n_rollouts)[:, None]).sum(axis=1)
        s = np.minimum(nxt, mdp.n_states - 1)
        disc *= mdp.gamma
    return ret


@dataclass(frozen=True)
class TaskDistribution:
    """Finite explicit distribution over tasks sharing one action universe."""

    tasks: tuple
    weights: np.ndarray = None
    options: dict = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        w = (np.full(len(self.tasks), 1.0 / len(self.tasks))
             if self.weights is None else np.asarray(self.weights, dtype=float))
        if len(w) != len(self.tasks) or abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise ValueError("weights must be a probability vector over tasks")
        object.__setattr__(self, "weights", w)
        universes = {t.actions for t in self.tasks}
        if len(universes) != 1:
            raise ValueError("all tasks must share one action-id universe")

    @property
    def universe(self):
        if self.options is not None:
            return tuple(sorted(self.options))
        return tuple(sorted(self.tasks[0].actions))

    def expect(self, fn):
        return float(sum(w * fn(t) for t, w in zip(self.tasks, self.weights)))

    def sample_indices(self, n, rng):
        return rng.choice(len(self.tasks), size=n, p=self.weights)


# ---------------------------------------------------------------------------
# JSON interfaces


def mdp_from_dict(d):
    return Mdp(actions=tuple(d["actions"]), reward=np.array(d["reward"], dtype=float),
               transition=np.array(d["transition"], dtype=float), gamma=float(d["gamma"]),
               initial_state=int(d.get("initial_state", 0)))


def mdp_to_dict(mdp):
    return {"states": mdp.n_states, "actions": list(mdp.actions),
            "gamma": mdp.gamma, "reward": mdp.reward.tolist(),
            "transition": mdp.transition.tolist(), "initial_state": mdp.initial_state}


def option_from_dict(d, n_states):
    body = [None] * n_states
    for s_key, seqs in d["body"].items():
        body[int(s_key)] = tuple((float(e["prob"]), tuple(e["actions"])) for e in seqs)
    if any(b is None for b in body):
        raise ValueError(f"option {d['id']}: body must cover states 0..{n_states - 1}")
    return OptionSpec(int(d["id"]), tuple(body))


def load_mdp(path):
    with open(path) as f:
        return mdp_from_dict(json.load(f))


def load_options(path, n_states):
    with open(path) as f:
        raw = json.load(f)
    raw = raw["options"] if isinstance(raw, dict) else raw
    opts = {}
    for d in raw:
        opt = option_from_dict(d, n_states)
        opts[opt.id] = opt
    return opts


def load_task_distribution(path):
    with open(path) as f:
        raw = json.load(f)
    tasks = tuple(mdp_from_dict(d) for d in raw["tasks"])
    weights = np.array(raw["weights"], dtype=float) if "weights" in raw else None
    options = None
    if "options" in raw:
        options = {}
        for d in raw["options"]:
            opt = option_from_dict(d, tasks[0].n_states)
            options[opt.id] = opt
    return TaskDistribution(tasks=tasks, weights=weights, options=options)
