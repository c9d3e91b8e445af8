"""Stochastic trigger, component choice, collapse, and the epoch state machine.

A trajectory alternates deterministic RK4 evolution with stochastic hits. Per
step of length h the hit probability is p = 1 - exp(-r h) where r is the
trapezoid average of the rate (sum of positive launch currents over total
square modulus) at the step endpoints; a hit is only accepted when the rate at
the step's end is positive, so a chosen component always has positive current
at t_sc. After a hit the non-chosen components are zeroed exactly, the chosen
one is marked realized, any gap sourced by it is bridged (its high side
becomes launch), and a new epoch begins under a freshly assembled generator.

The nrules3 and nrules4 variants share every code path here; the variant only
relabels the frozen status in reports. Trajectories are deterministic given
(model, ruleset, cfg, gap_mode, seed, trajectory index): randomness comes from
a counter-based Philox substream keyed by the trajectory index, so ensemble
results cannot depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import (CurrentVector, EffectiveGenerator, GapSemantics, IntegratorConfig,
                       assemble_generator, component_currents, step)
from .errors import (CollapseOnEmptyError, DegenerateStateError, GapflowError,
                     NoChoiceError, NormDriftError)
from .model import LAUNCH, REALIZED, ZEROED, ScenarioModel, project, square_modulus
from .rules import RuleSet

PRESERVE_TOTAL = "preserve_total"
RAW = "raw"
NORM_POLICIES = (PRESERVE_TOTAL, RAW)

TERMINAL_T_MAX = "t_max"
TERMINAL_QUIESCENT = "quiescent"


def trajectory_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based substream for one trajectory.

    Philox keyed by (master_seed, spawn_key=index) gives independent streams
    whose draws do not depend on how trajectories are distributed over
    workers.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(index,))))


@dataclass
class EngineState:
    epoch: int
    t: float
    statuses: dict[int, str]
    state: np.ndarray
    rng_stream: np.random.Generator


@dataclass(frozen=True)
class CollapseEvent:
    t_sc: float
    chosen: int
    pre_hit_s: float
    pre_hit_J: CurrentVector
    epoch: int
    norm_policy: str = PRESERVE_TOTAL

    def to_record(self, trajectory_id: int) -> dict:
        return {
            "trajectory_id": trajectory_id,
            "epoch": self.epoch,
            "t_sc": self.t_sc,
            "chosen": self.chosen,
            "pre_hit_s": self.pre_hit_s,
            "J": {str(m): j for m, j in self.pre_hit_J.as_dict().items()},
            "norm_policy": self.norm_policy,
        }


@dataclass
class TrajectorySamples:
    """Columnar time series: one row per recorded sample."""

    times: np.ndarray
    s: np.ndarray
    moduli: np.ndarray            # (n, n_components), order = component_ids
    currents: np.ndarray          # (n, n_candidates), order = current_ids
    component_ids: tuple[int, ...]
    current_ids: tuple[int, ...]  # every component that can ever be hit


@dataclass
class TrajectoryRecord:
    samples: TrajectorySamples | None
    events: list[CollapseEvent]
    terminal: str
    meta: dict = field(default_factory=dict)

    @property
    def first_event(self) -> CollapseEvent | None:
        return self.events[0] if self.events else None


def hit_rate(J: CurrentVector, s: float) -> float:
    """(sum of positive currents) / s, the probability per unit time of a hit."""
    if s <= 0.0:
        raise DegenerateStateError(f"total square modulus {s} is not positive")
    return J.total_positive() / s


def sample_hit(rng: np.random.Generator, rate: float, dt: float) -> bool:
    """Bernoulli thinning: hit with probability 1 - exp(-rate*dt)."""
    if rate < 0.0:
        raise GapflowError(f"negative hit rate {rate}")
    if rate == 0.0:
        return False
    return rng.random() < -math.expm1(-rate * dt)


def choose_component(rng: np.random.Generator, J: CurrentVector) -> int:
    """Pick a launch component with probability proportional to max(J_m, 0)."""
    weights = np.clip(J.J, 0.0, None)
    total = float(weights.sum())
    if total <= 0.0:
        raise NoChoiceError("no component carries positive current")
    cum = np.cumsum(weights)
    u = rng.random() * total
    k = int(np.searchsorted(cum, u, side="right"))
    return J.ids[min(k, len(J.ids) - 1)]


def post_collapse_statuses(model: ScenarioModel, chosen: int) -> dict[int, str]:
    """Statuses after ``chosen`` realizes: gaps it sources get bridged, the
    rest of the superposition is zeroed for good."""
    relaunched = {g.high for g in model.gaps if g.irreversible and g.low == chosen}
    statuses = {}
    for c in model.components:
        if c.id == chosen:
            statuses[c.id] = REALIZED
        elif c.id in relaunched:
            statuses[c.id] = LAUNCH
        else:
            statuses[c.id] = ZEROED
    return statuses


def apply_collapse(engine: EngineState, chosen: int, model: ScenarioModel,
                   policy: str = PRESERVE_TOTAL) -> EngineState:
    """Zero everything outside ``chosen`` and open the next epoch.

    Under preserve_total (default) the surviving amplitudes are rescaled so
    the total square modulus is unchanged; under raw they are kept verbatim.
    """
    if policy not in NORM_POLICIES:
        raise GapflowError(f"unknown norm policy {policy!r}")
    if engine.statuses.get(chosen) != LAUNCH:
        raise GapflowError(
            f"component {chosen} has status {engine.statuses.get(chosen)!r}, "
            "only a launch component can realize")
    psi = engine.state
    s_pre = square_modulus(psi)
    collapsed = project(psi, chosen, model)
    s_chosen = square_modulus(collapsed)
    if s_chosen <= 0.0:
        raise CollapseOnEmptyError(
            f"component {chosen} has zero amplitude at collapse time")
    if policy == PRESERVE_TOTAL:
        collapsed *= math.sqrt(s_pre / s_chosen)
    return EngineState(epoch=engine.epoch + 1, t=engine.t,
                       statuses=post_collapse_statuses(model, chosen),
                       state=collapsed, rng_stream=engine.rng_stream)


def _statuses_key(statuses: Mapping[int, str]) -> tuple:
    return tuple(sorted(statuses.items()))


def _get_generator(cache, model, ruleset, mode, statuses, epoch) -> EffectiveGenerator:
    if cache is None:
        return assemble_generator(model, ruleset, mode, statuses=statuses, epoch=epoch)
    key = (_statuses_key(statuses), mode, ruleset, epoch)
    gen = cache.get(key)
    if gen is None:
        gen = assemble_generator(model, ruleset, mode, statuses=statuses, epoch=epoch)
        cache[key] = gen
    return gen


class _Recorder:
    def __init__(self, model: ScenarioModel, candidate_ids: tuple[int, ...]):
        self.model = model
        self.component_ids = tuple(c.id for c in model.components)
        self.candidate_ids = candidate_ids
        self.rows_t: list[float] = []
        self.rows_s: list[float] = []
        self.rows_m: list[list[float]] = []
        self.rows_j: list[list[float]] = []

    def add(self, t: float, psi: np.ndarray, J: CurrentVector):
        self.rows_t.append(t)
        self.rows_s.append(square_modulus(psi))
        self.rows_m.append(
            [float(np.vdot(psi[idx], psi[idx]).real)
             for idx in (self.model.index_arrays[cid] for cid in self.component_ids)])
        jmap = J.as_dict()
        self.rows_j.append([jmap.get(cid, 0.0) for cid in self.candidate_ids])

    def build(self) -> TrajectorySamples:
        n = len(self.rows_t)
        return TrajectorySamples(
            times=np.array(self.rows_t),
            s=np.array(self.rows_s),
            moduli=np.array(self.rows_m) if n else np.empty((0, len(self.component_ids))),
            currents=np.array(self.rows_j) if n else np.empty((0, len(self.candidate_ids))),
            component_ids=self.component_ids,
            current_ids=self.candidate_ids,
        )


def step_plan(cfg: IntegratorConfig) -> list[tuple[float, float, bool]]:
    """(end time, step size, sample flag) per integration step of a run.

    The last step is pinned exactly onto t_max so accumulated k*dt roundoff
    cannot leave the final sample at 5.999999999999999-style times; a
    non-integer span gets a shorter final step.
    """
    dt = cfg.dt
    n_full = int(math.floor(cfg.t_max / dt + 1e-9))
    rem = cfg.t_max - n_full * dt
    if rem < 1e-9 * dt:
        rem = 0.0
    plan = [(k * dt, dt, k % cfg.sample_every == 0) for k in range(1, n_full + 1)]
    if rem > 0.0:
        plan.append((cfg.t_max, rem, True))
    elif plan:
        plan[-1] = (cfg.t_max, dt, True)
    return plan


def step_grid(cfg: IntegratorConfig) -> np.ndarray:
    """Step-end times of a run; hit times are always members of this grid."""
    return np.array([t for t, _, _ in step_plan(cfg)])


def _check_epoch_drift(gen, cfg, s_now, s_epoch_start, elapsed):
    if gen.conserves_norm and elapsed > 0:
        drift = abs(s_now - s_epoch_start)
        allowed = cfg.norm_drift_budget * max(elapsed, cfg.dt)
        if drift > allowed:
            raise NormDriftError(
                f"norm drift {drift:.3e} exceeds budget {allowed:.3e} "
                f"within epoch (elapsed {elapsed})")


def run_trajectory(model: ScenarioModel, ruleset: RuleSet, cfg: IntegratorConfig,
                   gap_mode: GapSemantics, seed: int, *,
                   traj_index: int = 0,
                   policy: str = PRESERVE_TOTAL,
                   record_samples: bool = True,
                   gen_cache: dict | None = None) -> TrajectoryRecord:
    """Run one full trajectory to t_max (or to post-collapse quiescence).

    The record is deterministic given all arguments; nrules3 and nrules4
    rule sets drive the very same code and so produce identical event
    sequences for identical seeds.
    """
    rng = trajectory_rng(seed, traj_index)
    engine = EngineState(epoch=0, t=0.0, statuses=model.initial_statuses(),
                         state=model.psi0.copy(), rng_stream=rng)
    gen = _get_generator(gen_cache, model, ruleset, gap_mode, engine.statuses, 0)
    candidates = model.launch_candidate_ids
    recorder = _Recorder(model, candidates) if record_samples else None
    events: list[CollapseEvent] = []
    terminal = TERMINAL_T_MAX
    negative_steps = 0
    n_steps = 0

    psi = engine.state
    J = component_currents(psi, gen)
    s = square_modulus(psi)
    rate_prev = hit_rate(J, s) if not ruleset.trigger_suspended else 0.0
    s_epoch_start, t_epoch_start = s, 0.0
    if recorder:
        recorder.add(0.0, psi, J)
    last_recorded_t = 0.0

    for t_next, h, is_sample in step_plan(cfg):
        psi_next = step(psi, gen, h)
        n_steps += 1
        J_next = component_currents(psi_next, gen)
        if np.any(J_next.J < 0.0):
            negative_steps += 1
        s_next = square_modulus(psi_next)
        rate_next = hit_rate(J_next, s_next) if not ruleset.trigger_suspended else 0.0

        hit = False
        if rate_next > 0.0:
            r_bar = 0.5 * (rate_prev + rate_next)
            hit = sample_hit(rng, r_bar, h)

        if hit:
            _check_epoch_drift(gen, cfg, s_next, s_epoch_start, t_next - t_epoch_start)
            if recorder:
                recorder.add(t_next, psi_next, J_next)
            chosen = choose_component(rng, J_next)
            events.append(CollapseEvent(t_sc=t_next, chosen=chosen, pre_hit_s=s_next,
                                        pre_hit_J=J_next, epoch=engine.epoch,
                                        norm_policy=policy))
            engine.state, engine.t = psi_next, t_next
            engine = apply_collapse(engine, chosen, model, policy)
            gen = _get_generator(gen_cache, model, ruleset, gap_mode,
                                 engine.statuses, engine.epoch)
            psi = engine.state
            J = component_currents(psi, gen)
            s = square_modulus(psi)
            rate_prev = hit_rate(J, s) if not ruleset.trigger_suspended else 0.0
            s_epoch_start, t_epoch_start = s, t_next
            if recorder:
                recorder.add(t_next, psi, J)
            last_recorded_t = t_next
            if not gen.backflows:
                # No bridged gap survives the collapse: the realized component
                # evolves unitarily and no further hit can fire.
                terminal = TERMINAL_QUIESCENT
                break
        else:
            psi = psi_next
            rate_prev = rate_next
            if recorder and is_sample:
                recorder.add(t_next, psi, J_next)
                last_recorded_t = t_next
        engine.t = t_next

    engine.state = psi
    if terminal == TERMINAL_T_MAX:
        engine.t = cfg.t_max
        s_final = square_modulus(psi)
        _check_epoch_drift(gen, cfg, s_final, s_epoch_start, cfg.t_max - t_epoch_start)
        if recorder and (not recorder.rows_t or last_recorded_t != cfg.t_max):
            recorder.add(cfg.t_max, psi, component_currents(psi, gen))

    meta = {
        "trajectory_id": traj_index,
        "master_seed": seed,
        "rules": ruleset.variant,
        "suspended": sorted(ruleset.suspended),
        "gap_mode": gap_mode.token,
        "norm_policy": policy,
        "n_steps": n_steps,
        "negative_current_steps": negative_steps,
        "epochs": engine.epoch,
        "final_t": engine.t,
        "final_s": square_modulus(psi),
    }
    return TrajectoryRecord(samples=recorder.build() if recorder else None,
                            events=events, terminal=terminal, meta=meta)
