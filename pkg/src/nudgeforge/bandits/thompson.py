"""Linear-Gaussian Thompson sampling.

Per arm: precision matrix B = ridge*I + sum(x x^T) and moment vector
f = sum(r x), posterior mean mu = B^-1 f, weight samples from
N(mu, noise_var * B^-1) via the Cholesky factor of B. All draws come
from one seeded generator, so a fixed seed reproduces the exact
decision sequence. Propensity is only known by simulation; when asked
we estimate it with fresh re-draws from a second, independent stream so
the main sequence is unaffected.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import ParseError
from ..kvtext import as_float, as_int, dump_kv, fmt_mat, fmt_vec, load_kv, parse_mat, parse_vec
from .common import Decision, check_context

PROPENSITY_DRAWS = 1000


class TsState:
    def __init__(
        self,
        d: int,
        arm_ids: list[int],
        seed: int,
        noise_var: float = 0.25,
        ridge: float = 1.0,
    ) -> None:
        if d < 1:
            raise ValueError("d must be >= 1")
        if not arm_ids:
            raise ValueError("need at least one arm")
        if noise_var <= 0 or ridge <= 0:
            raise ValueError("noise_var and ridge must be > 0")
        self.d = d
        self.noise_var = noise_var
        self.ridge = ridge
        self.seed = seed
        root = np.random.SeedSequence(seed)
        main_seq, prop_seq = root.spawn(2)
        self._rng = np.random.default_rng(main_seq)
        self._prop_rng = np.random.default_rng(prop_seq)
        self.B: dict[int, np.ndarray] = {}
        self.f: dict[int, np.ndarray] = {}
        for arm in arm_ids:
            self.B[int(arm)] = ridge * np.eye(d)
            self.f[int(arm)] = np.zeros(d)

    @property
    def arm_ids(self) -> list[int]:
        return sorted(self.B)

    def _sample_weights(self, arm: int, rng: np.random.Generator) -> np.ndarray:
        B = self.B[arm]
        mu = np.linalg.solve(B, self.f[arm])
        # cov = noise_var * B^-1; with B = L L^T a sample is
        # mu + sqrt(noise_var) * L^-T z
        L = np.linalg.cholesky(B)
        z = rng.standard_normal(self.d)
        return mu + np.sqrt(self.noise_var) * np.linalg.solve(L.T, z)

    def _draw_winner(self, x: np.ndarray, arms: list[int], rng: np.random.Generator) -> int:
        best_arm = arms[0]
        best_value = -np.inf
        for arm in arms:
            value = float(x @ self._sample_weights(arm, rng))
            if value > best_value:
                best_value = value
                best_arm = arm
        return best_arm

    def choose(
        self,
        context,
        eligible: set[int] | None = None,
        estimate_propensity: bool = False,
    ) -> Decision:
        x = check_context(context, self.d)
        arms = sorted(eligible) if eligible is not None else self.arm_ids
        if not arms:
            raise ValueError("eligible set is empty")
        chosen = self._draw_winner(x, arms, self._rng)
        propensity = None
        if estimate_propensity:
            wins = sum(
                1
                for _ in range(PROPENSITY_DRAWS)
                if self._draw_winner(x, arms, self._prop_rng) == chosen
            )
            propensity = max(wins, 1) / PROPENSITY_DRAWS
        return Decision(arm_id=chosen, propensity=propensity, context=tuple(x))

    def update(self, decision: Decision, reward: float) -> None:
        x = check_context(decision.context, self.d)
        if decision.arm_id not in self.B:
            raise ValueError(f"unknown arm {decision.arm_id}")
        self.B[decision.arm_id] += np.outer(x, x)
        self.f[decision.arm_id] += reward * x

    def to_kv(self) -> str:
        fields = {
            "kind": "thompson",
            "version": "1",
            "d": str(self.d),
            "noise_var": repr(self.noise_var),
            "ridge": repr(self.ridge),
            "seed": str(self.seed),
            "arms": ",".join(str(a) for a in self.arm_ids),
            "rng_state": json.dumps(self._rng.bit_generator.state),
            "prop_rng_state": json.dumps(self._prop_rng.bit_generator.state),
        }
        for arm in self.arm_ids:
            fields[f"arm.{arm}.B"] = fmt_mat(self.B[arm])
            fields[f"arm.{arm}.f"] = fmt_vec(self.f[arm])
        return dump_kv(fields, header="Thompson sampling policy state")

    @classmethod
    def from_kv(cls, text: str) -> "TsState":
        fields = load_kv(text)
        if fields.get("kind") != "thompson":
            raise ParseError(f"not a thompson state: kind={fields.get('kind')!r}")
        arm_ids = [int(a) for a in fields["arms"].split(",")]
        state = cls(
            d=as_int(fields, "d"),
            arm_ids=arm_ids,
            seed=as_int(fields, "seed"),
            noise_var=as_float(fields, "noise_var"),
            ridge=as_float(fields, "ridge"),
        )
        for arm in arm_ids:
            state.B[arm] = parse_mat(fields[f"arm.{arm}.B"])
            state.f[arm] = parse_vec(fields[f"arm.{arm}.f"])
        state._rng.bit_generator.state = json.loads(fields["rng_state"])
        state._prop_rng.bit_generator.state = json.loads(fields["prop_rng_state"])
        return state
