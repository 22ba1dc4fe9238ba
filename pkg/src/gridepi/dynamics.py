"""Per-step stochastic dynamics of the grid population.

Each simulation step applies three phases in order: the chosen
intervention action, a movement phase, and a synchronous health
transition phase. Health transitions for step t are all decided against
the census at the start of the phase, so a person who leaves the
infectious compartment this step still counts as a source for
susceptible neighbors this step.

Compartment flow is S -> E -> I -> {R, D}. An exposed person reverts to
S when the infection does not take hold, recovered persons cannot be
reinfected, and deceased persons stay on their tile and block movement.

All randomness comes from ``random.Random`` streams passed in by the
caller; the functions themselves hold no hidden state, and the pure
variants (:func:`movement_phase`, :func:`health_transition_phase`,
:func:`step`) never mutate their input state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

from .rng import substream
from .scenario import EpiParams, ValidatedScenario

__all__ = [
    "Compartment",
    "PersonState",
    "SimState",
    "StepEvent",
    "Trajectory",
    "TrajectoryRow",
    "TRAJECTORY_HEADER",
    "init_state",
    "movement_phase",
    "health_transition_phase",
    "exposure_probability",
    "death_probability_on_exit",
    "step",
    "step_inplace",
    "census",
    "events_to_jsonl",
]


class Compartment(IntEnum):
    S = 0
    E = 1
    I = 2
    R = 3
    D = 4


_S = Compartment.S
_E = Compartment.E
_I = Compartment.I
_R = Compartment.R
_D = Compartment.D

LETTER_TO_COMPARTMENT = {"S": _S, "E": _E, "I": _I, "R": _R}

# Event kinds as they appear in the JSON event log.
MOVED = "moved"
EXPOSED = "exposed"
INFECTED = "infected"
RECOVERED = "recovered"
DIED = "died"
MASKED = "masked"
VACCINATED = "vaccinated"
COMPLIANCE_REFUSAL = "compliance_refusal"


@dataclass(frozen=True)
class StepEvent:
    """One audit-log entry. ``step`` is the index of the step being computed."""

    step: int
    kind: str
    person_id: int
    detail: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "kind": self.kind,
                "person_id": self.person_id,
                "detail": self.detail,
            }
        )


def events_to_jsonl(events: list[StepEvent]) -> str:
    """Render events as JSON lines, one object per line."""
    if not events:
        return ""
    return "\n".join(e.to_json() for e in events) + "\n"


@dataclass(slots=True)
class PersonState:
    id: int
    compartment: Compartment
    x: int
    y: int
    masked: bool = False
    vaccinated: bool = False
    mask_refuser: bool = False
    vax_refuser: bool = False
    ever_infected: bool = False

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)

    def clone(self) -> "PersonState":
        return PersonState(
            self.id,
            self.compartment,
            self.x,
            self.y,
            self.masked,
            self.vaccinated,
            self.mask_refuser,
            self.vax_refuser,
            self.ever_infected,
        )


@dataclass(slots=True)
class SimState:
    """Full simulation state.

    ``persons`` is indexed by person id. ``occupancy`` maps each occupied
    tile to the id of the person on it (deceased persons included, since
    they keep blocking their tile). ``cumulative_infections`` counts
    persons ever infectious, including those infectious at time zero.
    ``action_costs`` accumulates the (non-positive) cost of every action
    applied so far.
    """

    step: int
    persons: list[PersonState]
    occupancy: dict[tuple[int, int], int]
    mask_mandate_active: bool = False
    cumulative_infections: int = 0
    cumulative_deaths: int = 0
    action_costs: float = 0.0

    def clone(self) -> "SimState":
        return SimState(
            self.step,
            [p.clone() for p in self.persons],
            dict(self.occupancy),
            self.mask_mandate_active,
            self.cumulative_infections,
            self.cumulative_deaths,
            self.action_costs,
        )


def init_state(validated: ValidatedScenario, seed: int) -> SimState:
    """Create the step-0 state for a validated scenario.

    Compliance is decided here, once per person: refuser flags are drawn
    in ascending person-id order from the dedicated ``init`` stream of
    ``seed`` and never re-rolled. Pre-vaccinated persons are vaccinated
    from the start and never refusers.
    """
    params = validated.params
    rng = substream(seed, "init")
    persons: list[PersonState] = []
    occupancy: dict[tuple[int, int], int] = {}
    infections = 0
    for pl in validated.placements:
        mask_refuser = rng.random() < params.mask_noncompliance
        vax_refuser = rng.random() < params.vax_noncompliance
        compartment = LETTER_TO_COMPARTMENT[pl.compartment]
        vaccinated = pl.pre_vaccinated
        if vaccinated:
            vax_refuser = False
        ever_infected = compartment is _I or compartment is _R
        if ever_infected:
            infections += 1
        x, y = pl.position
        persons.append(
            PersonState(
                pl.person_id,
                compartment,
                x,
                y,
                False,
                vaccinated,
                mask_refuser,
                vax_refuser,
                ever_infected,
            )
        )
        occupancy[pl.position] = pl.person_id
    return SimState(0, persons, occupancy, False, infections, 0, 0.0)


# ---------------------------------------------------------------------------
# Exposure
# ---------------------------------------------------------------------------


def exposure_probability(target: PersonState, state: SimState, params: EpiParams) -> float:
    """Probability that a susceptible person is exposed this step.

    Each infectious person within Manhattan distance 1..exposure_radius
    contributes an independent infection attempt with probability
    beta * (k / distance), scaled down by the source's mask, the target's
    mask, and the target's vaccination. The combined probability is one
    minus the product of the per-source miss probabilities.

    Raises:
        ValueError: If ``target`` is not susceptible.
    """
    if target.compartment is not _S:
        raise ValueError("exposure probability is defined for susceptible persons")
    radius = params.exposure_radius
    susceptibility = params.mask_sus_mult if target.masked else 1.0
    if target.vaccinated:
        susceptibility *= params.vax_protection
    beta_k = params.beta * params.k
    inf_mult = params.mask_inf_mult
    tx, ty = target.x, target.y
    miss = 1.0
    for src in state.persons:
        if src.compartment is _I:
            d = abs(src.x - tx) + abs(src.y - ty)
            if 1 <= d <= radius:
                attempt = (beta_k / d) * susceptibility
                if src.masked:
                    attempt *= inf_mult
                miss *= 1.0 - attempt
    return 1.0 - miss


def death_probability_on_exit(person: PersonState, params: EpiParams) -> float:
    """Probability of dying, given the person leaves the infectious
    compartment this step. Vaccination scales it down; the survivor
    recovers, so the recovery share is renormalized implicitly."""
    if person.vaccinated:
        return params.mu * params.vax_protection
    return params.mu


# ---------------------------------------------------------------------------
# Phases
# ---------------------------------------------------------------------------


def _movement_inplace(
    state: SimState,
    validated: ValidatedScenario,
    rng,
    events: list[StepEvent] | None = None,
) -> None:
    p_mv = validated.params.p_mv
    adjacency = validated.adjacency
    occupancy = state.occupancy
    step_no = state.step
    for p in state.persons:
        if p.compartment is _D:
            continue
        if rng.random() >= p_mv:
            continue
        pos = (p.x, p.y)
        candidates = [t for t in adjacency[pos] if t not in occupancy]
        if not candidates:
            continue
        if len(candidates) == 1:
            target = candidates[0]
        else:
            target = candidates[rng.randrange(len(candidates))]
        del occupancy[pos]
        occupancy[target] = p.id
        if events is not None:
            events.append(
                StepEvent(
                    step_no,
                    MOVED,
                    p.id,
                    f"({p.x},{p.y})->({target[0]},{target[1]})",
                )
            )
        p.x, p.y = target


def _transition_inplace(
    state: SimState,
    params: EpiParams,
    rng,
    events: list[StepEvent] | None = None,
) -> None:
    # Decisions are made against start-of-phase compartments; nothing is
    # applied until every person has been processed.
    persons = state.persons
    sigma = params.sigma
    persistence = params.infected_persistence
    step_no = state.step
    any_source = False
    for p in persons:
        if p.compartment is _I:
            any_source = True
            break
    pending: list[tuple[PersonState, Compartment]] = []
    for p in persons:
        c = p.compartment
        if c is _S:
            if not any_source:
                continue
            prob = exposure_probability(p, state, params)
            if prob > 0.0 and rng.random() < prob:
                pending.append((p, _E))
                if events is not None:
                    events.append(StepEvent(step_no, EXPOSED, p.id, f"prob={prob!r}"))
        elif c is _E:
            if rng.random() < sigma:
                pending.append((p, _I))
                if events is not None:
                    events.append(StepEvent(step_no, INFECTED, p.id))
            else:
                pending.append((p, _S))
        elif c is _I:
            if rng.random() < persistence:
                continue
            if rng.random() < death_probability_on_exit(p, params):
                pending.append((p, _D))
                if events is not None:
                    events.append(StepEvent(step_no, DIED, p.id))
            else:
                pending.append((p, _R))
                if events is not None:
                    events.append(StepEvent(step_no, RECOVERED, p.id))
    for p, new_compartment in pending:
        p.compartment = new_compartment
        if new_compartment is _I:
            if not p.ever_infected:
                p.ever_infected = True
                state.cumulative_infections += 1
        elif new_compartment is _D:
            state.cumulative_deaths += 1


def movement_phase(state: SimState, validated: ValidatedScenario, rng) -> SimState:
    """Pure movement phase: each living person moves with probability
    p_mv to a uniformly chosen unoccupied walkable neighbor, processed in
    ascending id order (earlier movers claim contested tiles)."""
    new = state.clone()
    _movement_inplace(new, validated, rng)
    return new


def health_transition_phase(state: SimState, params: EpiParams, rng) -> SimState:
    """Pure synchronous health transition phase."""
    new = state.clone()
    _transition_inplace(new, params, rng)
    return new


# ---------------------------------------------------------------------------
# Full step
# ---------------------------------------------------------------------------

_apply_action_inplace = None


def step_inplace(
    state: SimState,
    action,
    validated: ValidatedScenario,
    rng,
    events: list[StepEvent] | None = None,
) -> None:
    """Advance ``state`` by one step in place: action, movement, health.

    The action is checked for legality (against ``validated.planner``)
    before anything is mutated. Exposed for hot loops; most callers want
    :func:`step`.
    """
    global _apply_action_inplace
    if _apply_action_inplace is None:
        from .planner import apply_action_inplace

        _apply_action_inplace = apply_action_inplace
    _apply_action_inplace(state, action, validated.planner, events)
    _movement_inplace(state, validated, rng, events)
    _transition_inplace(state, validated.params, rng, events)
    state.step += 1


def step(
    state: SimState,
    action,
    validated: ValidatedScenario,
    rng,
) -> tuple[SimState, list[StepEvent]]:
    """Advance one full simulation step.

    Args:
        state: Current state; never mutated.
        action: The intervention to apply first (see :mod:`gridepi.planner`).
        validated: Scenario the state was built from.
        rng: Environment random stream.

    Returns:
        The successor state and the ordered event log for this step.

    Raises:
        IllegalActionError: If the action is not applicable; ``state`` is
            left untouched.
    """
    events: list[StepEvent] = []
    new = state.clone()
    step_inplace(new, action, validated, rng, events)
    return new, events


def census(state: SimState) -> tuple[int, int, int, int, int]:
    """Compartment counts as (S, E, I, R, D); always sums to N."""
    counts = [0, 0, 0, 0, 0]
    for p in state.persons:
        counts[p.compartment] += 1
    return tuple(counts)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

TRAJECTORY_HEADER = "step,S,E,I,R,D,cum_infections,cum_deaths"


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    s: int
    e: int
    i: int
    r: int
    d: int
    cum_infections: int
    cum_deaths: int


@dataclass
class Trajectory:
    """Per-step census record of one episode, including the initial state."""

    rows: list[TrajectoryRow] = field(default_factory=list)

    def record(self, state: SimState) -> None:
        s, e, i, r, d = census(state)
        self.rows.append(
            TrajectoryRow(
                state.step,
                s,
                e,
                i,
                r,
                d,
                state.cumulative_infections,
                state.cumulative_deaths,
            )
        )

    @property
    def final(self) -> TrajectoryRow:
        return self.rows[-1]

    def to_csv(self) -> str:
        lines = [TRAJECTORY_HEADER]
        for row in self.rows:
            lines.append(
                f"{row.step},{row.s},{row.e},{row.i},{row.r},{row.d},"
                f"{row.cum_infections},{row.cum_deaths}"
            )
        return "\n".join(lines) + "\n"
