"""Reward-optimality facet: finite episodic environments, an exact
backward-induction optimum, and gap evaluation of candidate policies
against rollouts of the optimal one under the reward distinguisher.

Returns are undiscounted sums over a fixed horizon; rewards live in
[0,1], so per-step normalization keeps distinguisher outputs in range
without ever clamping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Distinguisher,
    DistinguisherFamily,
    Sample,
    SampleSet,
    ScoringFunction,
    DeltaReport,
    delta as core_delta,
)
from .errors import MalformedEnv

ROW_SUM_TOL = 1e-12
TIE_TOL = 1e-10


@dataclass
class FiniteEnv:
    """Tabular MDP with a fixed horizon.

    transition[s, a] is a probability row over next states; reward[s, a, s2]
    lies in [0,1]. States and actions are referenced by their list index
    internally and by id at the interfaces.
    """

    id: str
    states: list[str]
    actions: list[str]
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A, S)
    horizon: int
    initial_state: str

    def __post_init__(self):
        S, A = len(self.states), len(self.actions)
        if S < 1 or A < 1:
            raise MalformedEnv("need at least one state and one action")
        if len(set(self.states)) != S or len(set(self.actions)) != A:
            raise MalformedEnv("duplicate state or action ids")
        if self.horizon < 1:
            raise MalformedEnv("horizon must be positive")
        if self.initial_state not in self.states:
            raise MalformedEnv(f"unknown initial state {self.initial_state!r}")
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        if self.transition.shape != (S, A, S) or self.reward.shape != (S, A, S):
            raise MalformedEnv("transition/reward tensors have the wrong shape")
        if np.any(self.transition < 0):
            raise MalformedEnv("negative transition probability")
        sums = self.transition.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
            raise MalformedEnv(
                f"transition row ({self.states[bad[0]]}, {self.actions[bad[1]]}) "
                f"sums to {sums[bad[0], bad[1]]!r}"
            )
        if np.any((self.reward < 0.0) | (self.reward > 1.0)):
            raise MalformedEnv("rewards must lie in [0,1]")

    @property
    def initial_index(self) -> int:
        return self.states.index(self.initial_state)


@dataclass
class TabularPolicy:
    """Action choice per (state, timestep): either a fixed action id or a
    distribution over action ids."""

    entries: dict[tuple[str, int], str | dict[str, float]]

    def decide(self, state: str, t: int, rng: np.random.Generator | None, env: FiniteEnv) -> int:
        try:
            choice = self.entries[(state, t)]
        except KeyError:
            raise MalformedEnv(f"policy undefined at state {state!r}, step {t}") from None
        if isinstance(choice, str):
            return env.actions.index(choice)
        names = sorted(choice)
        probs = np.array([choice[a] for a in names])
        if abs(probs.sum() - 1.0) > ROW_SUM_TOL:
            raise MalformedEnv(f"policy distribution at {state!r},{t} does not sum to 1")
        if rng is None:
            raise MalformedEnv("stochastic policy needs a seeded rollout")
        idx = int(rng.choice(len(names), p=probs))
        return env.actions.index(names[idx])


def uniform_random_policy(env: FiniteEnv) -> TabularPolicy:
    dist = {a: 1.0 / len(env.actions) for a in env.actions}
    entries = {(s, t): dist for s in env.states for t in range(env.horizon)}
    return TabularPolicy(entries)


@dataclass
class Trajectory:
    steps: list[tuple[str, str, float]]
    ret: float = field(init=False)
    normalized_return: float = field(init=False)

    def __post_init__(self):
        self.ret = math.fsum(r for _, _, r in self.steps)
        self.normalized_return = self.ret / len(self.steps)


def value_iteration(env: FiniteEnv) -> tuple[TabularPolicy, float]:
    """Finite-horizon backward induction; ties go to the lowest action index."""
    S, A = len(env.states), len(env.actions)
    expected = np.einsum("sat,sat->sa", env.transition, env.reward)
    V = np.zeros(S)
    entries: dict[tuple[str, int], str] = {}
    plan = []
    for t in reversed(range(env.horizon)):
        Q = expected + np.einsum("sat,t->sa", env.transition, V)
        best = Q.max(axis=1)
        choice = (Q >= best[:, None] - TIE_TOL).argmax(axis=1)
        plan.append((t, choice))
        V = best
    for t, choice in plan:
        for si in range(S):
            entries[(env.states[si], t)] = env.actions[int(choice[si])]
    return TabularPolicy(entries), float(V[env.initial_index])


def _episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(episode,)))


def rollout(env: FiniteEnv, policy: TabularPolicy, episodes: int, seed: int) -> SampleSet:
    """Seeded stochastic rollouts, one sample per episode in episode order."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    S = len(env.states)
    samples = []
    for i in range(episodes):
        rng = _episode_rng(seed, i)
        si = env.initial_index
        steps = []
        payload = []
        for t in range(env.horizon):
            ai = policy.decide(env.states[si], t, rng, env)
            row = env.transition[si, ai]
            ni = int(rng.choice(S, p=row))
            r = float(env.reward[si, ai, ni])
            steps.append((env.states[si], env.actions[ai], r))
            payload.extend((si, ai))
            si = ni
        traj = Trajectory(steps)
        samples.append(
            Sample(
                id=f"ep{i:06d}",
                payload=tuple(payload),
                codec="symbol-sequence",
                features={"normalized_return": traj.normalized_return},
            )
        )
    return SampleSet(samples, role="generated")


def reward_distinguisher(env: FiniteEnv) -> Distinguisher:
    """Normalized episode return; in [0,1] whenever the env invariants hold."""

    def fn(x: Sample) -> float:
        v = x.features["normalized_return"]
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"normalized return {v!r} escaped [0,1]")
        return v

    return Distinguisher(key=f"reward[{env.id}]", kind="reward", fn=fn)


def agent_delta(
    env: FiniteEnv,
    policy: TabularPolicy,
    episodes: int,
    sigma: ScoringFunction,
    seed: int,
) -> DeltaReport:
    """Gap between optimal-policy rollouts and candidate rollouts under the
    reward distinguisher, with paired per-episode seed streams."""
    optimal, _ = value_iteration(env)
    reference = rollout(env, optimal, episodes, seed)
    reference.role = "original"
    candidate = rollout(env, policy, episodes, seed)
    family = DistinguisherFamily(key=f"reward-family[{env.id}]", members=[reward_distinguisher(env)])
    return core_delta(reference, candidate, family, sigma)


# --- file formats ---------------------------------------------------------


def env_from_dict(doc: dict) -> FiniteEnv:
    """Environment JSON: states, actions, transition and reward triplets."""
    try:
        states = list(doc["states"])
        actions = list(doc["actions"])
        horizon = int(doc["horizon"])
        initial = doc["initial_state"]
        env_id = doc.get("id", "env")
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedEnv(f"bad environment document: {e}") from None
    S, A = len(states), len(actions)
    sidx = {s: i for i, s in enumerate(states)}
    aidx = {a: i for i, a in enumerate(actions)}
    P = np.zeros((S, A, S))
    R = np.zeros((S, A, S))
    for row in doc.get("transitions", []):
        try:
            P[sidx[row["s"]], aidx[row["a"]], sidx[row["s2"]]] += float(row["p"])
        except KeyError as e:
            raise MalformedEnv(f"transition references unknown id {e}") from None
    for row in doc.get("rewards", []):
        try:
            R[sidx[row["s"]], aidx[row["a"]], sidx[row["s2"]]] = float(row["r"])
        except KeyError as e:
            raise MalformedEnv(f"reward references unknown id {e}") from None
    return FiniteEnv(
        id=env_id,
        states=states,
        actions=actions,
        transition=P,
        reward=R,
        horizon=horizon,
        initial_state=initial,
    )


def load_env(path) -> FiniteEnv:
    with open(path, encoding="utf-8") as f:
        return env_from_dict(json.load(f))


def policy_from_dict(doc: dict) -> TabularPolicy:
    """Policy JSON: "state,timestep" keys mapping to an action id."""
    entries: dict[tuple[str, int], str | dict[str, float]] = {}
    for key, action in doc.items():
        state, _, step = key.rpartition(",")
        if not state:
            raise MalformedEnv(f"policy key {key!r} is not 'state,timestep'")
        try:
            t = int(step)
        except ValueError:
            raise MalformedEnv(f"policy key {key!r} has a non-integer timestep") from None
        entries[(state, t)] = action
    return TabularPolicy(entries)


def load_policy(path) -> TabularPolicy:
    with open(path, encoding="utf-8") as f:
        return policy_from_dict(json.load(f))
