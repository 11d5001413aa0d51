"""HTTP service exposing an environment read-only plus the command operations.

Routes (JSON bodies, UTF-8):

    GET  /health
    GET  /shells
    GET  /shells/{idShort}
    GET  /shells/{idShort}/submodels
    GET  /submodels/{idShort}
    GET  /submodels/{idShort}/elements/{path}
    POST /submodels/Operations/{pushCapability|getStatus|getOutput|deleteCommand}

State strings on the wire are always lowercase: pending, executing, success,
error, deleted. A rejected push is data, not an HTTP error: it returns 200
with a fresh command id whose status is ``error``. 400 covers malformed
bodies, 404 unknown routes/operations/commands, 409 output-not-available and
delete-while-executing.

Reads never mutate the environment; the OperationalData submodel is
recomputed from the telemetry ledger on every read. With a telemetry persist
path configured, the ledger is written as a JSON snapshot on shutdown and
loaded again on start.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import aasx
from .bridge import dispatcher_thread
from .commands import (
    CannotDeleteExecuting,
    CommandRegistry,
    CommandUnknown,
    OutputNotAvailable,
    TelemetryLedger,
)
from .generate import (
    NoSystemShell,
    capability_schemas,
    gen_component_aas,
    gen_system_aas,
    refresh_operational_data,
)
from .ingest import load_component_dir, load_component_file, load_system_file
from .model import AasEnvironment, element_to_json, shell_to_json, submodel_to_json

logger = logging.getLogger(__name__)

OPERATION_NAMES = ("pushCapability", "getStatus", "getOutput", "deleteCommand")


class ConfigError(ValueError):
    pass


def parse_address(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address {value!r} must be host:port")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"invalid port in {value!r}") from None


@dataclass
class ServerConfig:
    listen_address: str
    environment_source: str
    bridge_address: str | None = None
    telemetry_persist_path: str | None = None

    def __post_init__(self):
        parse_address(self.listen_address)
        if self.bridge_address is not None:
            parse_address(self.bridge_address)

    @classmethod
    def from_dict(cls, data: dict) -> "ServerConfig":
        if not isinstance(data, dict):
            raise ConfigError("server config must be a JSON object")
        unknown = set(data) - {"listenAddress", "environmentSource", "bridgeAddress", "telemetryPersistPath"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            listen = data["listenAddress"]
            source = data["environmentSource"]
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc.args[0]!r}") from None
        return cls(
            listen_address=str(listen),
            environment_source=str(source),
            bridge_address=data.get("bridgeAddress"),
            telemetry_persist_path=data.get("telemetryPersistPath"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)


def load_environment(source: str | Path) -> AasEnvironment:
    """Load an environment from a package file or from model documents.

    Accepts a ``.aasx`` package, a single ``*.component.json``, or a
    directory holding ``*.component.json`` files and at most one
    ``*.system.json`` (the system wins as the served shell).
    """
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"environment source {path} does not exist")
    if path.is_file():
        if path.suffix == ".aasx":
            return aasx.read_aasx(path.read_bytes())
        if path.name.endswith(".component.json"):
            return gen_component_aas(load_component_file(path))
        raise ConfigError(f"cannot load environment from {path.name!r} (expected .aasx or .component.json)")
    components = load_component_dir(path)
    systems = sorted(path.glob("*.system.json"))
    if len(systems) > 1:
        raise ConfigError(f"{path} contains more than one system document")
    if systems:
        return gen_system_aas(load_system_file(systems[0], components), components)
    if not components:
        raise ConfigError(f"{path} contains no component or system documents")
    shells = []
    submodels = []
    for cm in components:
        env = gen_component_aas(cm)
        shells.extend(env.shells)
        submodels.extend(env.submodels)
    return AasEnvironment(shells=tuple(shells), submodels=tuple(submodels))


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent) or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_ledger(ledger: TelemetryLedger, path: str | Path) -> None:
    _atomic_write(Path(path), json.dumps(ledger.to_snapshot(), indent=2, sort_keys=True) + "\n")


def load_ledger(path: str | Path) -> TelemetryLedger:
    return TelemetryLedger.from_snapshot(json.loads(Path(path).read_text(encoding="utf-8")))


class _HttpServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 128


class AasServer:
    """Owns the environment, the command registry and the bridge dispatcher."""

    def __init__(self, config: ServerConfig, *, env: AasEnvironment | None = None):
        self.config = config
        base_env = env if env is not None else load_environment(config.environment_source)
        ledger = None
        if config.telemetry_persist_path and Path(config.telemetry_persist_path).exists():
            ledger = load_ledger(config.telemetry_persist_path)
        self.registry = CommandRegistry(capability_schemas(base_env), ledger=ledger)
        try:
            # Materialize OperationalData once so listings show it from the start.
            self.env = refresh_operational_data(base_env, self.registry.ledger)
        except NoSystemShell:
            self.env = base_env
        self._httpd: _HttpServer | None = None
        self._http_thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._started_monotonic = 0.0

    # -- lifecycle -------------------------------------------------------

    @property
    def port(self) -> int:
        assert self._httpd is not None, "server not started"
        return self._httpd.server_address[1]

    @property
    def host(self) -> str:
        assert self._httpd is not None, "server not started"
        return self._httpd.server_address[0]

    def uptime_seconds(self) -> float:
        return time.monotonic() - self._started_monotonic

    def start(self) -> None:
        host, port = parse_address(self.config.listen_address)
        handler = _make_handler(self)
        self._httpd = _HttpServer((host, port), handler)
        self._started_monotonic = time.monotonic()
        self._http_thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05), name="aaskit-http", daemon=True
        )
        self._http_thread.start()
        if self.config.bridge_address:
            dispatcher_thread(self.registry, parse_address(self.config.bridge_address), self._stop)

    def stop(self) -> None:
        self._stop.set()
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._http_thread is not None:
            self._http_thread.join(timeout=5)
        if self.config.telemetry_persist_path:
            save_ledger(self.registry.ledger, self.config.telemetry_persist_path)

    # -- request-level helpers --------------------------------------------

    def current_env(self) -> AasEnvironment:
        """Environment with OperationalData rebuilt from the live ledger."""
        try:
            return refresh_operational_data(self.env, self.registry.ledger)
        except NoSystemShell:
            return self.env

    def find_submodels(self, id_short: str):
        env = self.current_env() if id_short == "OperationalData" else self.env
        return [sm for sm in env.submodels if sm.id_short == id_short]

    def invoke_operation(self, name: str, body: dict) -> tuple[int, dict]:
        """Dispatch one generic operation; returns (http status, response body)."""
        if name not in OPERATION_NAMES:
            return 404, {"error": "UnknownOperation", "operation": name}
        if name == "pushCapability":
            capability = body.get("capability")
            params = body.get("params", {})
            if not isinstance(capability, str):
                return 400, {"error": "MalformedBody", "message": "capability must be a string"}
            if not isinstance(params, dict):
                return 400, {"error": "MalformedBody", "message": "params must be an object"}
            command_id = self.registry.push(capability, params)
            return 200, {"commandId": command_id}

        command_id = body.get("commandId")
        if not isinstance(command_id, str):
            return 400, {"error": "MalformedBody", "message": "commandId must be a string"}
        if name == "getStatus":
            return 200, {"state": self.registry.get_status(command_id).value}
        if name == "getOutput":
            try:
                result = self.registry.get_output(command_id)
            except OutputNotAvailable as exc:
                return 409, {"error": "OutputNotAvailable", "state": exc.state.value}
            except CommandUnknown:
                return 404, {"error": "CommandUnknown", "state": "deleted"}
            return 200, {"outcome": result.outcome.value, "details": result.details}
        try:
            state = self.registry.delete(command_id)
        except CannotDeleteExecuting:
            return 409, {"error": "CannotDeleteExecuting", "state": "executing"}
        return 200, {"state": state.value}


_ROUTES = [
    ("GET", re.compile(r"/health\Z"), "health"),
    ("GET", re.compile(r"/shells\Z"), "shells"),
    ("GET", re.compile(r"/shells/([^/]+)\Z"), "shell"),
    ("GET", re.compile(r"/shells/([^/]+)/submodels\Z"), "shell_submodels"),
    ("GET", re.compile(r"/submodels/([^/]+)\Z"), "submodel"),
    ("GET", re.compile(r"/submodels/([^/]+)/elements/(.+)\Z"), "element"),
    ("POST", re.compile(r"/submodels/Operations/([^/]+)\Z"), "operation"),
]


def _make_handler(app: AasServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "aaskit/0.1"

        def log_message(self, fmt, *args):  # route access noise to debug logging
            logger.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, obj) -> None:
            payload = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def _route(self, method: str):
            for want_method, pattern, name in _ROUTES:
                if method != want_method:
                    continue
                match = pattern.match(self.path)
                if match:
                    return name, match.groups()
            return None, ()

        def do_GET(self):
            name, groups = self._route("GET")
            if name is None:
                self._send(404, {"error": "NotFound", "path": self.path})
                return
            try:
                getattr(self, f"_get_{name}")(*groups)
            except Exception:
                logger.exception("request failed: GET %s", self.path)
                self._send(500, {"error": "Internal"})

        def do_POST(self):
            name, groups = self._route("POST")
            if name != "operation":
                self._send(404, {"error": "NotFound", "path": self.path})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw.decode("utf-8")) if raw else {}
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                self._send(400, {"error": "MalformedBody", "message": str(exc)})
                return
            if not isinstance(body, dict):
                self._send(400, {"error": "MalformedBody", "message": "body must be a JSON object"})
                return
            try:
                status, obj = app.invoke_operation(groups[0], body)
            except Exception:
                logger.exception("operation failed: %s", groups[0])
                self._send(500, {"error": "Internal"})
                return
            self._send(status, obj)

        # -- GET handlers ---------------------------------------------

        def _get_health(self):
            self._send(200, {"status": "ok", "uptimeSeconds": int(app.uptime_seconds())})

        def _get_shells(self):
            self._send(200, [shell.id_short for shell in app.env.shells])

        def _get_shell(self, id_short: str):
            shell = app.env.shell(id_short)
            if shell is None:
                self._send(404, {"error": "NotFound", "path": id_short})
                return
            self._send(200, shell_to_json(shell, app.env))

        def _get_shell_submodels(self, id_short: str):
            shell = app.env.shell(id_short)
            if shell is None:
                self._send(404, {"error": "NotFound", "path": id_short})
                return
            self._send(
                200,
                [
                    {"idShort": sm.id_short, "id": sm.id, "semanticId": sm.semantic_id}
                    for sm in app.env.submodels_of(shell)
                ],
            )

        def _get_submodel(self, id_short: str):
            matches = app.find_submodels(id_short)
            if not matches:
                self._send(404, {"error": "NotFound", "path": id_short})
                return
            if len(matches) > 1:
                self._send(409, {"error": "AmbiguousSubmodel", "path": id_short})
                return
            self._send(200, submodel_to_json(matches[0]))

        def _get_element(self, id_short: str, element_path: str):
            matches = app.find_submodels(id_short)
            if not matches:
                self._send(404, {"error": "NotFound", "path": id_short})
                return
            if len(matches) > 1:
                self._send(409, {"error": "AmbiguousSubmodel", "path": id_short})
                return
            node = matches[0]
            for segment in element_path.split("/"):
                children = getattr(node, "elements", None)
                if children is None:
                    self._send(404, {"error": "NotFound", "path": f"{id_short}/{element_path}"})
                    return
                for child in children:
                    if child.id_short == segment:
                        node = child
                        break
                else:
                    self._send(404, {"error": "NotFound", "path": f"{id_short}/{element_path}"})
                    return
            self._send(200, element_to_json(node))

    return Handler


def serve(config: ServerConfig) -> None:
    """Run the service until interrupted; used by the CLI ``serve`` command."""
    server = AasServer(config)
    server.start()
    print(f"serving on {server.host}:{server.port}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


__all__ = [
    "AasServer",
    "ConfigError",
    "ServerConfig",
    "load_environment",
    "load_ledger",
    "parse_address",
    "save_ledger",
    "serve",
    "OPERATION_NAMES",
]
