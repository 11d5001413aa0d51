"""Socket bridge between the command registry and the robot business logic.

The wire protocol is newline-delimited UTF-8 JSON frames over a stream
socket: ``{"type": "EXECUTE"|"STARTED"|"PROGRESS"|"DONE", "commandId": ...}``.
The dispatcher side sends one EXECUTE at a time (serial robot) and folds
STARTED/PROGRESS/DONE back into the registry. The robot side here is a
deterministic simulator whose skills are configured per behavior.
"""

from __future__ import annotations

import json
import logging
import math
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .commands import CommandRegistry, Outcome

logger = logging.getLogger(__name__)

DEFAULT_BRIDGE_PORT = 7342


@dataclass(frozen=True)
class Execute:
    command_id: str
    skill: str
    params: dict


@dataclass(frozen=True)
class Started:
    command_id: str


@dataclass(frozen=True)
class Progress:
    command_id: str
    distance_delta_meters: float


@dataclass(frozen=True)
class Done:
    command_id: str
    outcome: str
    details: dict


BridgeMessage = Union[Execute, Started, Progress, Done]


class MalformedFrame(ValueError):
    def __init__(self, message: str, position: int = 0):
        super().__init__(f"position {position}: {message}")
        self.position = position


class UnknownMessageType(ValueError):
    def __init__(self, tag: str):
        super().__init__(f"unknown message type {tag!r}")
        self.tag = tag


def encode(msg: BridgeMessage) -> bytes:
    """One message to one newline-terminated frame."""
    if isinstance(msg, Execute):
        obj = {"type": "EXECUTE", "commandId": msg.command_id, "skill": msg.skill, "params": msg.params}
    elif isinstance(msg, Started):
        obj = {"type": "STARTED", "commandId": msg.command_id}
    elif isinstance(msg, Progress):
        obj = {"type": "PROGRESS", "commandId": msg.command_id, "distanceDeltaMeters": msg.distance_delta_meters}
    elif isinstance(msg, Done):
        obj = {"type": "DONE", "commandId": msg.command_id, "outcome": msg.outcome, "details": msg.details}
    else:
        raise TypeError(f"not a bridge message: {msg!r}")
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


def _field(obj: dict, key: str, kind: type):
    if key not in obj:
        raise MalformedFrame(f"missing field {key!r}")
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedFrame(f"field {key!r} must be a number")
        return float(value)
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        raise MalformedFrame(f"field {key!r} must be {kind.__name__}")
    return value


def decode(frame: bytes | str) -> BridgeMessage:
    """One frame back to a message; inverse of :func:`encode`."""
    if isinstance(frame, bytes):
        frame = frame.decode("utf-8", errors="replace")
    text = frame.strip("\r\n")
    if not text:
        raise MalformedFrame("empty frame")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedFrame(exc.msg, position=exc.pos) from exc
    if not isinstance(obj, dict):
        raise MalformedFrame("frame is not a JSON object")
    if "type" not in obj:
        raise MalformedFrame("missing field 'type'")
    tag = obj["type"]
    if tag == "EXECUTE":
        return Execute(_field(obj, "commandId", str), _field(obj, "skill", str), _field(obj, "params", dict))
    if tag == "STARTED":
        return Started(_field(obj, "commandId", str))
    if tag == "PROGRESS":
        return Progress(_field(obj, "commandId", str), _field(obj, "distanceDeltaMeters", float))
    if tag == "DONE":
        outcome = _field(obj, "outcome", str)
        if outcome not in ("success", "error"):
            raise MalformedFrame(f"invalid outcome {outcome!r}")
        return Done(_field(obj, "commandId", str), outcome, _field(obj, "details", dict))
    raise UnknownMessageType(str(tag))


# --- dispatcher side ----------------------------------------------------------


class _ConnectionLost(Exception):
    pass


class FrameReader:
    """Newline framing over a raw socket.

    socket.makefile() must not be mixed with timeouts (a timed-out buffered
    read poisons the buffer), so framing is done here on top of recv(). A
    receive timeout is used only to poll the stop event.
    """

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buffer = bytearray()

    def read_frame(self, stop: threading.Event | None = None) -> bytes:
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                frame = bytes(self._buffer[: newline + 1])
                del self._buffer[: newline + 1]
                return frame
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout:
                if stop is not None and stop.is_set():
                    raise _ConnectionLost("stopped") from None
                continue
            except OSError as exc:
                raise _ConnectionLost(str(exc)) from exc
            if not chunk:
                raise _ConnectionLost("connection closed")
            self._buffer += chunk


def run_dispatcher(
    registry: CommandRegistry,
    conn: socket.socket,
    *,
    stop: threading.Event | None = None,
    poll_interval: float = 0.05,
) -> None:
    """Feed pending commands to the robot over ``conn`` until stop or disconnect.

    Each command is sent as EXECUTE, progress distance is accumulated, and
    the final DONE completes the command. If the connection is lost while a
    command is in flight, that command completes as an error with reason
    ``"bridge disconnected"`` plus whatever distance was reported so far.
    """
    reader = FrameReader(conn)
    while stop is None or not stop.is_set():
        cmd = registry.take_next()
        if cmd is None:
            registry.wait_for_pending(poll_interval)
            continue
        progress_total = 0.0
        saw_progress = False
        try:
            conn.sendall(encode(Execute(cmd.id, cmd.capability, cmd.params)))
            while True:
                line = reader.read_frame(stop)
                try:
                    msg = decode(line)
                except (MalformedFrame, UnknownMessageType) as exc:
                    logger.warning("dropping malformed frame from robot: %s", exc)
                    continue
                if msg.command_id != cmd.id:
                    logger.warning("message for unknown command %s ignored", msg.command_id)
                    continue
                if isinstance(msg, Started):
                    continue  # already executing; nothing to change
                if isinstance(msg, Progress):
                    progress_total += msg.distance_delta_meters
                    saw_progress = True
                    continue
                if isinstance(msg, Done):
                    details = dict(msg.details)
                    if saw_progress and "distanceMeters" not in details:
                        details["distanceMeters"] = progress_total
                    registry.complete(cmd.id, Outcome(msg.outcome), details)
                    break
                logger.warning("unexpected message %r for command %s", msg, cmd.id)
        except (_ConnectionLost, OSError) as exc:
            details = {"reason": "bridge disconnected"}
            if saw_progress:
                details["distanceMeters"] = progress_total
            registry.complete(cmd.id, Outcome.ERROR, details)
            raise ConnectionError(str(exc)) from exc


def dispatcher_thread(
    registry: CommandRegistry,
    address: tuple[str, int],
    stop: threading.Event,
    *,
    retry_interval: float = 0.3,
) -> threading.Thread:
    """Start a daemon thread that keeps a dispatcher connected to ``address``."""

    def loop() -> None:
        while not stop.is_set():
            try:
                conn = socket.create_connection(address, timeout=2.0)
            except OSError:
                stop.wait(retry_interval)
                continue
            conn.settimeout(0.2)
            try:
                run_dispatcher(registry, conn, stop=stop)
            except ConnectionError as exc:
                logger.info("bridge connection lost (%s); reconnecting", exc)
            finally:
                conn.close()

    thread = threading.Thread(target=loop, name="aaskit-dispatcher", daemon=True)
    thread.start()
    return thread


# --- simulated robot ----------------------------------------------------------


@dataclass(frozen=True)
class AlwaysSucceed:
    duration_ticks: int = 1


@dataclass(frozen=True)
class FailEveryNth:
    n: int
    duration_ticks: int = 1


@dataclass(frozen=True)
class GotoKinematic:
    speed_meters_per_tick: float
    reachable_region: tuple[float, float, float, float]  # x_lo, y_lo, x_hi, y_hi


Behavior = Union[AlwaysSucceed, FailEveryNth, GotoKinematic]


class SimConfigError(ValueError):
    pass


@dataclass
class SimRobotConfig:
    robot_name: str
    pose: tuple[float, float] = (0.0, 0.0)
    skills: dict[str, Behavior] = field(default_factory=dict)
    rng_seed: int = 0
    tick_seconds: float = 0.0  # 0 means logical ticks (no pacing)

    @classmethod
    def from_dict(cls, data: dict) -> "SimRobotConfig":
        if not isinstance(data, dict):
            raise SimConfigError("sim config must be a JSON object")
        try:
            name = data["robotName"]
        except KeyError:
            raise SimConfigError("missing robotName") from None
        pose_raw = data.get("pose", [0.0, 0.0])
        if not isinstance(pose_raw, (list, tuple)) or len(pose_raw) != 2:
            raise SimConfigError("pose must be [x, y]")
        skills: dict[str, Behavior] = {}
        for skill, raw in data.get("skills", {}).items():
            if not isinstance(raw, dict) or "behavior" not in raw:
                raise SimConfigError(f"skill {skill!r} needs a behavior")
            kind = raw["behavior"]
            if kind == "alwaysSucceed":
                behavior: Behavior = AlwaysSucceed(duration_ticks=int(raw.get("durationTicks", 1)))
            elif kind == "failEveryNth":
                behavior = FailEveryNth(n=int(raw["n"]), duration_ticks=int(raw.get("durationTicks", 1)))
            elif kind == "gotoKinematic":
                region = raw.get("reachableRegion")
                if not isinstance(region, (list, tuple)) or len(region) != 4:
                    raise SimConfigError(f"skill {skill!r} needs reachableRegion [xLo, yLo, xHi, yHi]")
                behavior = GotoKinematic(
                    speed_meters_per_tick=float(raw["speedMetersPerTick"]),
                    reachable_region=tuple(float(v) for v in region),
                )
            else:
                raise SimConfigError(f"unknown behavior {kind!r} for skill {skill!r}")
            if isinstance(behavior, (AlwaysSucceed, FailEveryNth)) and behavior.duration_ticks < 1:
                raise SimConfigError(f"skill {skill!r}: duration must be at least one tick")
            if isinstance(behavior, FailEveryNth) and behavior.n < 1:
                raise SimConfigError(f"skill {skill!r}: n must be positive")
            if isinstance(behavior, GotoKinematic) and behavior.speed_meters_per_tick <= 0:
                raise SimConfigError(f"skill {skill!r}: speed must be positive")
            skills[skill] = behavior
        return cls(
            robot_name=str(name),
            pose=(float(pose_raw[0]), float(pose_raw[1])),
            skills=skills,
            rng_seed=int(data.get("rngSeed", 0)),
            tick_seconds=float(data.get("tickSeconds", 0.0)),
        )


def load_sim_config(path: str | Path) -> SimRobotConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SimConfigError(f"invalid JSON: {exc}") from exc
    return SimRobotConfig.from_dict(data)


class SimRobot:
    """Deterministic robot stand-in: same config and commands, same outputs."""

    def __init__(self, config: SimRobotConfig):
        self.config = config
        self.pose = config.pose
        self._invocations: dict[str, int] = {}
        self._rng = random.Random(config.rng_seed)  # reserved for future stochastic behaviors

    def _tick(self, ticks: int = 1) -> None:
        if self.config.tick_seconds > 0:
            time.sleep(self.config.tick_seconds * ticks)

    def handle_execute(self, msg: Execute) -> list[BridgeMessage]:
        """Run one command to completion and return the outbound messages."""
        out: list[BridgeMessage] = [Started(msg.command_id)]
        behavior = self.config.skills.get(msg.skill)
        if behavior is None:
            out.append(Done(msg.command_id, "error", {"reason": f"rejected: no behavior for skill {msg.skill!r}"}))
            return out

        count = self._invocations.get(msg.skill, 0) + 1
        self._invocations[msg.skill] = count

        if isinstance(behavior, AlwaysSucceed):
            self._tick(behavior.duration_ticks)
            out.append(Done(msg.command_id, "success", {}))
        elif isinstance(behavior, FailEveryNth):
            self._tick(behavior.duration_ticks)
            if count % behavior.n == 0:
                out.append(Done(msg.command_id, "error", {"reason": f"simulated failure on invocation {count}"}))
            else:
                out.append(Done(msg.command_id, "success", {}))
        else:
            out.extend(self._goto(msg, behavior))
        return out

    def _goto(self, msg: Execute, behavior: GotoKinematic) -> list[BridgeMessage]:
        out: list[BridgeMessage] = []
        x = msg.params.get("x")
        y = msg.params.get("y")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
            out.append(Done(msg.command_id, "error", {"reason": "rejected: goto requires numeric x and y"}))
            return out
        target = (float(x), float(y))
        x_lo, y_lo, x_hi, y_hi = behavior.reachable_region
        if not (x_lo <= target[0] <= x_hi and y_lo <= target[1] <= y_hi):
            # Rejected by the robot itself: no motion, no progress frames.
            out.append(Done(msg.command_id, "error", {"reason": "rejected: target outside reachable region"}))
            return out
        distance = math.hypot(target[0] - self.pose[0], target[1] - self.pose[1])
        speed = behavior.speed_meters_per_tick
        full_ticks = int(distance // speed)
        for _ in range(full_ticks):
            self._tick()
            out.append(Progress(msg.command_id, speed))
        remainder = distance - speed * full_ticks
        if remainder > 1e-12:
            self._tick()
            out.append(Progress(msg.command_id, remainder))
        self.pose = target
        out.append(Done(msg.command_id, "success", {"distanceMeters": distance}))
        return out

    def serve_connection(self, conn: socket.socket, stop: threading.Event | None = None) -> None:
        """Answer EXECUTE frames on one connection; malformed input closes it."""
        reader = FrameReader(conn)
        try:
            while stop is None or not stop.is_set():
                try:
                    line = reader.read_frame(stop)
                except _ConnectionLost:
                    return
                try:
                    msg = decode(line)
                except (MalformedFrame, UnknownMessageType) as exc:
                    logger.warning("closing connection on malformed frame: %s", exc)
                    return
                if not isinstance(msg, Execute):
                    logger.warning("closing connection on unexpected %s frame", type(msg).__name__)
                    return
                for response in self.handle_execute(msg):
                    conn.sendall(encode(response))
        except OSError:
            return

    def serve_forever(self, listener: socket.socket, stop: threading.Event | None = None) -> None:
        """Accept connections one at a time (serial robot) until stopped."""
        listener.settimeout(0.2)
        while stop is None or not stop.is_set():
            try:
                conn, _addr = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                conn.settimeout(0.2)
                self.serve_connection(conn, stop)


def run_sim_robot(config: SimRobotConfig, conn: socket.socket) -> None:
    """Serve one established connection with a fresh simulated robot."""
    SimRobot(config).serve_connection(conn)
