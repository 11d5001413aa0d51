"""Command registry: five-state lifecycle, scheduling and telemetry.

A pushed capability instance moves through ``pending`` (not yet started),
``executing``, then ``success`` or ``error``; ``deleted`` means the identifier
does not refer to a known command (never issued, or removed). A push that
does not match the capability schema is never executed: it lands directly in
``error`` with a reason string starting with ``"rejected: "``.

The registry is a shared mutable resource. All public operations are
linearizable (one internal lock); any number of request handlers may call
``push``/``get_status``/``get_output``/``delete`` concurrently while exactly
one dispatcher drives ``take_next``/``complete``.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

from .model import ParamSpec, ValueType

COMMAND_ID_PREFIX = "cmd-"
_COMMAND_ID_DIGITS = 10


class CommandState(Enum):
    PENDING = "pending"
    EXECUTING = "executing"
    SUCCESS = "success"
    ERROR = "error"
    DELETED = "deleted"


class Outcome(str, Enum):
    SUCCESS = "success"
    ERROR = "error"


class CommandError(Exception):
    """Base class for command registry faults."""


class OutputNotAvailable(CommandError):
    """The command has not completed yet, so there is no result."""

    def __init__(self, state: CommandState):
        super().__init__(f"no output while {state.value}")
        self.state = state


class CommandUnknown(CommandError):
    """The identifier does not refer to a known command."""

    def __init__(self, command_id: str):
        super().__init__(f"unknown command {command_id!r}")
        self.command_id = command_id


class CannotDeleteExecuting(CommandError):
    """Deletion is only allowed before execution or after completion."""

    def __init__(self, command_id: str):
        super().__init__(f"command {command_id!r} is executing")
        self.command_id = command_id


class IllegalTransition(CommandError):
    def __init__(self, current_state: CommandState):
        super().__init__(f"illegal transition from {current_state.value}")
        self.current_state = current_state


@dataclass
class CommandResult:
    outcome: Outcome
    details: dict


class SkillCommand:
    """One pushed capability instance. Mutated only by its registry."""

    __slots__ = ("id", "capability", "params", "state", "result", "pushed_at", "started_at", "finished_at")

    def __init__(self, command_id: str, capability: str, params: dict, pushed_at: float):
        self.id = command_id
        self.capability = capability
        self.params = params
        self.state = CommandState.PENDING
        self.result: CommandResult | None = None
        self.pushed_at = pushed_at
        self.started_at: float | None = None
        self.finished_at: float | None = None


@dataclass
class SkillStats:
    count: int = 0
    success_count: int = 0
    error_count: int = 0
    total_duration_seconds: float = 0.0


@dataclass
class TelemetryLedger:
    """Accumulated run statistics: distance, per-skill outcomes, durations.

    ``started_at_wall_clock`` anchors the hours-of-operation figure; all other
    timing uses the caller's monotonic clock. Completion counting happens in
    :meth:`record_completion` only, so rejected pushes never show up here.
    """

    total_distance_meters: float = 0.0
    started_at_wall_clock: float = 0.0
    per_skill: dict[str, SkillStats] = field(default_factory=dict)
    wall_clock: Callable[[], float] = field(default=time.time, compare=False, repr=False)

    def __post_init__(self):
        if not self.started_at_wall_clock:
            self.started_at_wall_clock = self.wall_clock()

    def record_completion(self, skill: str, outcome: Outcome, duration_seconds: float, distance_meters: float | None = None) -> None:
        stats = self.per_skill.setdefault(skill, SkillStats())
        stats.count += 1
        if outcome is Outcome.SUCCESS:
            stats.success_count += 1
        else:
            stats.error_count += 1
        stats.total_duration_seconds += duration_seconds
        if distance_meters is not None:
            self.total_distance_meters += distance_meters

    def hours_of_operation(self) -> float:
        return max(0.0, self.wall_clock() - self.started_at_wall_clock) / 3600.0

    def to_snapshot(self) -> dict:
        return {
            "totalDistanceMeters": self.total_distance_meters,
            "startedAtWallClock": self.started_at_wall_clock,
            "perSkill": {
                name: {
                    "count": s.count,
                    "successCount": s.success_count,
                    "errorCount": s.error_count,
                    "totalDurationSeconds": s.total_duration_seconds,
                }
                for name, s in sorted(self.per_skill.items())
            },
        }

    @classmethod
    def from_snapshot(cls, snapshot: Mapping, wall_clock: Callable[[], float] = time.time) -> "TelemetryLedger":
        ledger = cls(
            total_distance_meters=float(snapshot["totalDistanceMeters"]),
            started_at_wall_clock=float(snapshot["startedAtWallClock"]),
            wall_clock=wall_clock,
        )
        for name, raw in snapshot.get("perSkill", {}).items():
            ledger.per_skill[name] = SkillStats(
                count=int(raw["count"]),
                success_count=int(raw["successCount"]),
                error_count=int(raw["errorCount"]),
                total_duration_seconds=float(raw["totalDurationSeconds"]),
            )
        return ledger


def format_command_id(counter: int) -> str:
    return f"{COMMAND_ID_PREFIX}{counter:0{_COMMAND_ID_DIGITS}d}"


def _value_type_name(value: object) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "decimal"
    if isinstance(value, str):
        return "string"
    return type(value).__name__


def _type_matches(value: object, value_type: ValueType) -> bool:
    if value_type is ValueType.STRING:
        return isinstance(value, str)
    if value_type is ValueType.BOOLEAN:
        return isinstance(value, bool)
    if value_type is ValueType.INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def rejection_reason(
    capabilities: Mapping[str, Sequence[ParamSpec]], capability: str, params: Mapping[str, object]
) -> str | None:
    """Why a push must be rejected, or None when it satisfies the schema.

    The returned reason names the violated clause: unknown capability,
    unknown parameter, missing required parameter, type mismatch, range
    violation or enumeration violation.
    """
    schema = capabilities.get(capability)
    if schema is None:
        return f"rejected: unknown capability {capability!r}"
    known = {spec.name for spec in schema}
    for name in params:
        if name not in known:
            return f"rejected: unknown parameter {name!r} for capability {capability!r}"
    for spec in schema:
        if spec.name not in params:
            if spec.required:
                return f"rejected: missing required parameter {spec.name!r}"
            continue
        value = params[spec.name]
        if not _type_matches(value, spec.value_type):
            return f"rejected: parameter {spec.name!r} expects {spec.value_type.value}, got {_value_type_name(value)}"
        if spec.bounds is not None and not (spec.bounds[0] <= value <= spec.bounds[1]):
            return f"rejected: parameter {spec.name!r} value {value!r} outside range [{spec.bounds[0]}, {spec.bounds[1]}]"
        if spec.choices is not None and value not in spec.choices:
            return f"rejected: parameter {spec.name!r} value {value!r} not in enumeration {list(spec.choices)}"
    return None


class CommandRegistry:
    """Registry of pushed commands plus the telemetry ledger.

    ``capabilities`` maps capability names to their parameter schemas; pushes
    are validated against it. Identifiers are ``cmd-`` plus a zero-padded
    counter that is never reused, so N pushes always yield N distinct,
    strictly increasing ids.
    """

    def __init__(
        self,
        capabilities: Mapping[str, Sequence[ParamSpec]],
        *,
        clock: Callable[[], float] = time.monotonic,
        wall_clock: Callable[[], float] = time.time,
        ledger: TelemetryLedger | None = None,
    ):
        self._capabilities = {name: tuple(schema) for name, schema in capabilities.items()}
        self._clock = clock
        self._lock = threading.RLock()
        self._pending_available = threading.Condition(self._lock)
        self._commands: dict[str, SkillCommand] = {}
        self._next = 1
        self._ledger = ledger if ledger is not None else TelemetryLedger(wall_clock=wall_clock)

    @property
    def capabilities(self) -> Mapping[str, tuple[ParamSpec, ...]]:
        return dict(self._capabilities)

    @property
    def ledger(self) -> TelemetryLedger:
        return self._ledger

    def ledger_snapshot(self) -> dict:
        with self._lock:
            return self._ledger.to_snapshot()

    def push(self, capability: str, params: Mapping[str, object] | None = None) -> str:
        """Register a command; always returns a fresh id.

        A schema mismatch is not a fault: the command is created directly in
        the error state with the rejection reason in its result.
        """
        params = dict(params or {})
        with self._lock:
            command_id = format_command_id(self._next)
            self._next += 1
            cmd = SkillCommand(command_id, capability, params, pushed_at=self._clock())
            reason = rejection_reason(self._capabilities, capability, params)
            if reason is not None:
                cmd.state = CommandState.ERROR
                cmd.result = CommandResult(Outcome.ERROR, {"reason": reason})
                cmd.finished_at = cmd.pushed_at
            self._commands[command_id] = cmd
            if cmd.state is CommandState.PENDING:
                self._pending_available.notify_all()
            return command_id

    def get_status(self, command_id: str) -> CommandState:
        """Current state; unknown ids report ``deleted``."""
        with self._lock:
            cmd = self._commands.get(command_id)
            if cmd is None:
                return CommandState.DELETED
            return cmd.state

    def get_output(self, command_id: str) -> CommandResult:
        with self._lock:
            cmd = self._commands.get(command_id)
            if cmd is None or cmd.state is CommandState.DELETED:
                raise CommandUnknown(command_id)
            if cmd.state in (CommandState.PENDING, CommandState.EXECUTING):
                raise OutputNotAvailable(cmd.state)
            assert cmd.result is not None
            return CommandResult(cmd.result.outcome, dict(cmd.result.details))

    def delete(self, command_id: str) -> CommandState:
        """Remove a command before execution or after completion; idempotent."""
        with self._lock:
            cmd = self._commands.get(command_id)
            if cmd is None or cmd.state is CommandState.DELETED:
                return CommandState.DELETED
            if cmd.state is CommandState.EXECUTING:
                raise CannotDeleteExecuting(command_id)
            cmd.state = CommandState.DELETED
            cmd.result = None
            return CommandState.DELETED

    def take_next(self) -> SkillCommand | None:
        """Move the oldest pending command to executing and hand it out (FIFO)."""
        with self._lock:
            for cmd in self._commands.values():
                if cmd.state is CommandState.PENDING:
                    cmd.state = CommandState.EXECUTING
                    cmd.started_at = self._clock()
                    return cmd
            return None

    def wait_for_pending(self, timeout: float) -> bool:
        """Block until a pending command may be available; False on timeout."""
        with self._lock:
            for cmd in self._commands.values():
                if cmd.state is CommandState.PENDING:
                    return True
            return self._pending_available.wait(timeout)

    def complete(self, command_id: str, outcome: Outcome | str, details: Mapping[str, object] | None = None) -> None:
        """Finish an executing command and fold the outcome into the ledger."""
        outcome = Outcome(outcome)
        with self._lock:
            cmd = self._commands.get(command_id)
            if cmd is None:
                raise IllegalTransition(CommandState.DELETED)
            if cmd.state is not CommandState.EXECUTING:
                raise IllegalTransition(cmd.state)
            cmd.state = CommandState.SUCCESS if outcome is Outcome.SUCCESS else CommandState.ERROR
            cmd.result = CommandResult(outcome, dict(details or {}))
            cmd.finished_at = self._clock()
            started = cmd.started_at if cmd.started_at is not None else cmd.pushed_at
            distance = cmd.result.details.get("distanceMeters")
            if isinstance(distance, bool) or not isinstance(distance, (int, float)):
                distance = None
            self._ledger.record_completion(
                cmd.capability, outcome, duration_seconds=cmd.finished_at - started, distance_meters=distance
            )
