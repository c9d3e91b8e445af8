"""Stochastic collapse dynamics on finite models with entropy-ordered gaps."""

from .version import __version__
from .errors import (CollapseOnEmptyError, DegenerateStateError, GapflowError,
                     NoChoiceError, NonFiniteStateError, NormDriftError,
                     ProvenanceError, ScenarioParseError, ScenarioValidationError,
                     UnknownComponentError)
from .rules import NRULES3, NRULES4, RULE_IDS, RuleSet, ruleset_for_rule
from .model import (ACTIVE, LAUNCH, REALIZED, ZEROED, Component, Gap,
                    HamiltonianPartition, OperatorBlock, RunDefaults,
                    ScenarioModel, ValidationReport, Violation,
                    component_square_moduli, load_scenario, load_scenario_file,
                    parse_scenario, project, serialize_scenario, square_modulus,
                    validate_model)
from .dynamics import (CurrentVector, EffectiveGenerator, GapMode, GapSemantics,
                       IntegratorConfig, TrajectorySegment, assemble_generator,
                       component_currents, evolve, fd_current_check, gap_backflow,
                       step)
from .engine import (PRESERVE_TOTAL, RAW, CollapseEvent, EngineState,
                     TrajectoryRecord, TrajectorySamples, apply_collapse,
                     choose_component, hit_rate, run_trajectory, sample_hit,
                     trajectory_rng)
from .ensemble import (ComparisonReport, EnsembleStats, OracleResult, compare,
                       deterministic_oracle, ks_statistic, run_ensemble)
from .arrow import (ArrowReport, forward_experiment, reverse_experiment,
                    reverse_initial_state, suspension_counterfactual)

__all__ = [name for name in dir() if not name.startswith("_")]
