"""Effective-generator assembly, RK4 integration, probability currents.

The central object is the EffectiveGenerator: the operator actually applied
during one epoch of a trajectory. Which blocks of the partitioned Hamiltonian
it contains depends on component statuses, the gap semantics, and any
suspended rules:

* own blocks enter for active and realized components; a launch component's
  own block stays out (the component is frozen) unless the freeze rule is
  suspended,
* gap interaction blocks enter in the feed direction whenever an active or
  realized component sits on the low side and a launch component on the high
  side,
* the reverse (high to low) direction enters only in hermitian_truncated
  mode; in the sink modes it is structurally absent, so for any state
  supported on launch components G applied to psi is zero bit-exactly.

Integration is fixed-step RK4 on dpsi/dt = -i G psi (hbar = 1), with a
state-dependent anti-Hermitian loss on the source sector in norm_compensated
mode. No adaptive stepping: trajectories must be reproducible across runs and
worker layouts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GapflowError, NonFiniteStateError, NormDriftError
from .model import ACTIVE, LAUNCH, REALIZED, STATUSES, ZEROED, ScenarioModel, square_modulus
from .rules import RuleSet

# Below this total square modulus the compensated loss coefficient J/s_low is
# numerically meaningless (0/0); the feed term is O(sqrt(s_low)) there anyway.
S_LOW_FLOOR = 1e-300

# Dense matvec beats csr by a wide margin for the model sizes this package
# targets; fall back to sparse only for genuinely large bases.
DENSE_DIM_LIMIT = 256


class GapSemantics(enum.Enum):
    """Operator form of one-way flow across a gap."""

    ONE_WAY_FEED = "one_way_feed"
    NORM_COMPENSATED = "norm_compensated"
    HERMITIAN_TRUNCATED = "hermitian_truncated"

    @classmethod
    def from_token(cls, token: str) -> "GapSemantics":
        aliases = {
            "oneway": cls.ONE_WAY_FEED,
            "compensated": cls.NORM_COMPENSATED,
            "hermitian": cls.HERMITIAN_TRUNCATED,
        }
        if token in aliases:
            return aliases[token]
        try:
            return cls(token)
        except ValueError:
            raise GapflowError(f"unknown gap mode {token!r}") from None

    @property
    def token(self) -> str:
        return {GapSemantics.ONE_WAY_FEED: "oneway",
                GapSemantics.NORM_COMPENSATED: "compensated",
                GapSemantics.HERMITIAN_TRUNCATED: "hermitian"}[self]


# CLI-facing alias; the short name reads better at call sites.
GapMode = GapSemantics


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4_fixed"
    dt: float = 0.01
    t_max: float = 6.0
    sample_every: int = 1
    norm_drift_budget: float = 1e-8  # allowed |s(t)-s(0)| per unit time

    def __post_init__(self):
        if self.method != "rk4_fixed":
            raise GapflowError(f"unknown integrator method {self.method!r}")
        if not self.dt > 0:
            raise GapflowError(f"dt must be > 0, got {self.dt}")
        if not self.t_max >= 0:
            raise GapflowError(f"t_max must be >= 0, got {self.t_max}")
        if self.sample_every < 1:
            raise GapflowError(f"sample_every must be >= 1, got {self.sample_every}")
        if not self.norm_drift_budget > 0:
            raise GapflowError(
                f"norm_drift_budget must be > 0, got {self.norm_drift_budget}")


@dataclass(frozen=True)
class GeneratorProvenance:
    rules: str
    gap_mode: str
    suspended: tuple[str, ...]
    epoch: int

    def to_dict(self) -> dict:
        return {"rules": self.rules, "gap_mode": self.gap_mode,
                "suspended": list(self.suspended), "epoch": self.epoch}


@dataclass(frozen=True)
class CurrentVector:
    """Per-launch-component probability currents J_m, units 1/time."""

    ids: tuple[int, ...]
    J: np.ndarray

    def __getitem__(self, comp_id: int) -> float:
        return float(self.J[self.ids.index(comp_id)])

    def as_dict(self) -> dict[int, float]:
        return {m: float(j) for m, j in zip(self.ids, self.J)}

    def total_positive(self) -> float:
        return float(np.clip(self.J, 0.0, None).sum())


@dataclass(frozen=True)
class EffectiveGenerator:
    """Immutable per-epoch generator; shareable across concurrent trajectories."""

    dim: int
    matrix: sp.csr_matrix
    mode: GapSemantics
    launch_ids: tuple[int, ...]
    launch_indices: Mapping[int, np.ndarray]
    # (low component indices, feed block) per included gap; drives the
    # compensated-mode loss term. Empty in the other modes.
    compensations: tuple[tuple[np.ndarray, sp.csr_matrix], ...]
    # (low, high) -> reverse block, or None where the coupling is structurally
    # absent (the bit-exact zero-backflow guarantee of the sink modes).
    backflows: Mapping[tuple[int, int], sp.csr_matrix | None]
    provenance: GeneratorProvenance
    dense: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.dense is None and self.dim <= DENSE_DIM_LIMIT:
            object.__setattr__(self, "dense", self.matrix.toarray())

    @property
    def conserves_norm(self) -> bool:
        return self.mode is not GapSemantics.ONE_WAY_FEED

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            return self.dense @ psi
        return self.matrix @ psi

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """dpsi/dt: -i G psi plus the compensated-mode source loss."""
        out = -1j * self.matvec(psi)
        for low_idx, feed in self.compensations:
            low = psi[low_idx]
            s_low = float(np.vdot(low, low).real)
            if s_low <= S_LOW_FLOOR:
                continue
            fed = feed @ psi
            j_gap = 2.0 * float(np.vdot(psi, fed).imag)
            out[low_idx] -= (0.5 * j_gap / s_low) * low
        return out


def _entries_to_csr(dim, entries) -> sp.csr_matrix:
    if not entries:
        return sp.csr_matrix((dim, dim), dtype=np.complex128)
    rows, cols, vals = zip(*entries)
    coo = sp.coo_matrix((np.array(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim))
    return coo.tocsr()


def assemble_generator(model: ScenarioModel, ruleset: RuleSet, mode: GapSemantics,
                       suspended: frozenset[str] | None = None,
                       statuses: Mapping[int, str] | None = None,
                       epoch: int = 0) -> EffectiveGenerator:
    """Build the generator for the given component statuses.

    ``suspended`` augments the rule set's own suspensions; pass the statuses
    reached after the most recent collapse (defaults to the model's initial
    ones).
    """
    if statuses is None:
        statuses = model.initial_statuses()
    ruleset = ruleset.with_suspended(suspended) if suspended else ruleset
    for comp_id, st in statuses.items():
        model.component(comp_id)
        if st not in STATUSES:
            raise GapflowError(f"unknown status {st!r} for component {comp_id}")
    missing = {c.id for c in model.components} - set(statuses)
    if missing:
        raise GapflowError(f"statuses missing for components {sorted(missing)}")

    freeze_off = ruleset.freeze_suspended
    entries: list[tuple[int, int, complex]] = []

    def own_included(comp_id: int) -> bool:
        st = statuses[comp_id]
        if st in (ACTIVE, REALIZED):
            return True
        return st == LAUNCH and freeze_off

    for comp_id, block in model.hamiltonian.own.items():
        if own_included(comp_id):
            entries.extend(block.entries)

    sourceable = {ACTIVE, REALIZED} | ({LAUNCH} if freeze_off else set())
    compensations = []
    backflows: dict[tuple[int, int], sp.csr_matrix | None] = {}
    for gap in model.gaps:
        st_low, st_high = statuses[gap.low], statuses[gap.high]
        if freeze_off and mode is GapSemantics.HERMITIAN_TRUNCATED:
            # Suspending the freeze restores the full Hermitian H0 + H01 on
            # every surviving component, the counterfactual the arrow
            # experiments need.
            included = st_low != ZEROED and st_high != ZEROED
        else:
            included = st_low in sourceable and st_high == LAUNCH
        if not included:
            continue
        feed = gap.interaction
        entries.extend(feed.entries)
        if mode is GapSemantics.HERMITIAN_TRUNCATED:
            back = _entries_to_csr(model.dim, feed.adjoint_entries())
            entries.extend(feed.adjoint_entries())
            backflows[(gap.low, gap.high)] = back
        else:
            backflows[(gap.low, gap.high)] = None
            if mode is GapSemantics.NORM_COMPENSATED:
                compensations.append((model.indices_of(gap.low),
                                      _entries_to_csr(model.dim, feed.entries)))

    launch_ids = tuple(sorted(cid for cid, st in statuses.items() if st == LAUNCH))
    return EffectiveGenerator(
        dim=model.dim,
        matrix=_entries_to_csr(model.dim, entries),
        mode=mode,
        launch_ids=launch_ids,
        launch_indices={cid: model.indices_of(cid) for cid in launch_ids},
        compensations=tuple(compensations),
        backflows=backflows,
        provenance=GeneratorProvenance(
            rules=ruleset.variant, gap_mode=mode.token,
            suspended=tuple(sorted(ruleset.suspended)), epoch=epoch),
    )


def step(state: np.ndarray, gen: EffectiveGenerator, dt: float) -> np.ndarray:
    """One RK4 update of dpsi/dt = gen.apply(psi).

    dt may be negative (used by the central-difference current oracle).
    """
    psi = np.asarray(state, dtype=np.complex128)
    k1 = gen.apply(psi)
    k2 = gen.apply(psi + (0.5 * dt) * k1)
    k3 = gen.apply(psi + (0.5 * dt) * k2)
    k4 = gen.apply(psi + dt * k3)
    out = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(out).all():
        raise NonFiniteStateError(
            f"non-finite amplitudes after step dt={dt} "
            f"(epoch {gen.provenance.epoch}, mode {gen.mode.token})")
    return out


@dataclass
class TrajectorySegment:
    """Deterministic evolution samples between t0 and t1."""

    times: np.ndarray
    states: np.ndarray          # (n_samples, dim)
    currents: np.ndarray        # (n_samples, len(launch_ids))
    launch_ids: tuple[int, ...]

    @property
    def s(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.states.conj(), self.states).real

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def current_column(self, comp_id: int) -> np.ndarray:
        return self.currents[:, self.launch_ids.index(comp_id)]

    def component_moduli(self, model: ScenarioModel) -> dict[int, np.ndarray]:
        out = {}
        for c in model.components:
            block = self.states[:, model.index_arrays[c.id]]
            out[c.id] = np.einsum("ij,ij->i", block.conj(), block).real
        return out


def component_currents(state: np.ndarray, gen: EffectiveGenerator,
                       model: ScenarioModel | None = None) -> CurrentVector:
    """J_m = d|P_m psi|^2/dt for each launch component, computed analytically.

    Equal to 2 Im(<P_m psi|G psi>); evaluated through gen.apply so the
    compensated-mode loss (which never touches launch rows) needs no special
    case. ``model`` is accepted for callers that carry one around.
    """
    psi = np.asarray(state, dtype=np.complex128)
    dpsi = gen.apply(psi)
    J = np.empty(len(gen.launch_ids))
    for k, comp_id in enumerate(gen.launch_ids):
        idx = gen.launch_indices[comp_id]
        J[k] = 2.0 * float(np.vdot(psi[idx], dpsi[idx]).real)
    return CurrentVector(ids=gen.launch_ids, J=J)


def fd_current_check(state: np.ndarray, gen: EffectiveGenerator,
                     dt_probe: float = 1e-6) -> CurrentVector:
    """Central-difference oracle for component_currents."""
    psi = np.asarray(state, dtype=np.complex128)
    fwd = step(psi, gen, dt_probe)
    bwd = step(psi, gen, -dt_probe)
    J = np.empty(len(gen.launch_ids))
    for k, comp_id in enumerate(gen.launch_ids):
        idx = gen.launch_indices[comp_id]
        s_fwd = float(np.vdot(fwd[idx], fwd[idx]).real)
        s_bwd = float(np.vdot(bwd[idx], bwd[idx]).real)
        J[k] = (s_fwd - s_bwd) / (2.0 * dt_probe)
    return CurrentVector(ids=gen.launch_ids, J=J)


def gap_backflow(state: np.ndarray, gen: EffectiveGenerator) -> dict[tuple[int, int], float]:
    """Signed flow into each gap's low component through the reverse block.

    Exactly 0.0 wherever the reverse block is structurally absent (sink
    modes): no arithmetic is performed, so the zero is bit-exact.
    """
    psi = np.asarray(state, dtype=np.complex128)
    out = {}
    for key, back in gen.backflows.items():
        if back is None:
            out[key] = 0.0
        else:
            out[key] = 2.0 * float(np.vdot(psi, back @ psi).imag)
    return out


def evolve(state: np.ndarray, gen: EffectiveGenerator, t0: float, t1: float,
           cfg: IntegratorConfig) -> TrajectorySegment:
    """Integrate from t0 to t1, sampling every cfg.sample_every steps.

    The span need not be an integer number of steps; a shorter final step
    lands exactly on t1. t1 == t0 yields a single untouched sample.
    """
    if t1 < t0:
        raise GapflowError(f"evolve called with t1={t1} < t0={t0}")
    psi = np.array(state, dtype=np.complex128)
    span = t1 - t0
    dt = cfg.dt

    times = [t0]
    states = [psi.copy()]
    if span > 0:
        n_full = int(math.floor(span / dt + 1e-9))
        rem = span - n_full * dt
        if rem < 1e-9 * dt:
            rem = 0.0
        for k in range(1, n_full + 1):
            psi = step(psi, gen, dt)
            last = (k == n_full) and rem == 0.0
            if k % cfg.sample_every == 0 and not last:
                times.append(t0 + k * dt)
                states.append(psi.copy())
        if rem > 0.0:
            psi = step(psi, gen, rem)
        times.append(t1)
        states.append(psi.copy())

    state_arr = np.array(states)
    currents = np.empty((len(times), len(gen.launch_ids)))
    for i in range(len(times)):
        currents[i] = component_currents(state_arr[i], gen).J

    if gen.conserves_norm and span > 0:
        drift = abs(square_modulus(psi) - square_modulus(np.asarray(state, dtype=np.complex128)))
        allowed = cfg.norm_drift_budget * max(span, dt)
        if drift > allowed:
            raise NormDriftError(
                f"norm drift {drift:.3e} exceeds budget {allowed:.3e} over span {span}")

    return TrajectorySegment(times=np.array(times), states=state_arr,
                             currents=currents, launch_ids=gen.launch_ids)
