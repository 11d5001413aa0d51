"""Command line entry point.

Subcommands cover the whole workflow: ``generate`` builds data sheet
packages from model documents, ``inspect`` and ``validate`` examine them,
``serve`` runs the HTTP service, ``sim`` runs the simulated robot, and
``client`` talks to a running service (push/status/output/delete/watch).

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime or
I/O failure. Every failure prints a single ``error: <Kind>: <detail>`` line
to stderr.
"""

from __future__ import annotations

import argparse
import http.client
import json
import socket
import sys
import threading
import time
from pathlib import Path

from . import aasx
from .bridge import DEFAULT_BRIDGE_PORT, SimConfigError, SimRobot, load_sim_config
from .generate import (
    ConflictingSkillSchemas,
    gen_component_aas,
    gen_system_aas,
    generation_report,
    merge_capabilities,
)
from .ingest import ModelDocumentError, load_component_dir, load_component_file, load_system_file
from .model import (
    NotFound,
    Shell,
    Submodel,
    element_to_json,
    env_to_json,
    resolve,
    shell_to_json,
    submodel_to_json,
    validate,
)
from .server import ConfigError, ServerConfig, parse_address, serve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_TERMINAL_STATES = ("success", "error", "deleted")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: Usage: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fail(exit_code: int, kind: str, message: str) -> int:
    print(f"error: {kind}: {message}", file=sys.stderr)
    return exit_code


# --- generate / inspect / validate ------------------------------------------


def _load_inputs(args):
    if args.component:
        cm = load_component_file(args.component)
        return gen_component_aas(cm), ()
    components = load_component_dir(args.components)
    sm = load_system_file(args.system, components)
    env = gen_system_aas(sm, components)
    used = [cm for cm in components if cm.name in {i.component_name for i in sm.instances}]
    _, warnings = merge_capabilities(used, sm.task_plots)
    return env, tuple(warnings)


def cmd_generate(args) -> int:
    try:
        env, warnings = _load_inputs(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "MissingInput", str(exc))
    except (ModelDocumentError, ConflictingSkillSchemas) as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    try:
        data = aasx.write_aasx(env)
    except aasx.InvalidEnvironment as exc:
        return _fail(EXIT_VALIDATION, "InvalidEnvironment", str(exc))
    try:
        Path(args.out).write_bytes(data)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "WriteFailed", str(exc))
    report = generation_report(env, warnings)
    if args.json:
        print(
            json.dumps(
                {
                    "out": args.out,
                    "shellId": report.shell_id,
                    "submodelsEmitted": list(report.submodels_emitted),
                    "warnings": list(report.warnings),
                }
            )
        )
    else:
        print(f"wrote {args.out}: shell {report.shell_id} with submodels [{', '.join(report.submodels_emitted)}]")
        for warning in report.warnings:
            print(f"warning: {warning}")
    return EXIT_OK


def _print_tree(env) -> None:
    def walk(el, indent):
        kind = element_to_json(el)["kind"]
        suffix = ""
        if kind == "property":
            suffix = f" = {el.value!r}"
        print(f"{indent}{el.id_short} ({kind}){suffix}")
        for child in getattr(el, "elements", ()):
            walk(child, indent + "    ")

    for shell in env.shells:
        print(f"{shell.id_short} [{shell.asset_kind.value}] <{shell.id}>")
        for sm in env.submodels_of(shell):
            print(f"  {sm.id_short}")
            for el in sm.elements:
                walk(el, "    ")
    for sm in env.orphan_submodels:
        print(f"~ {sm.id_short} (orphan)")
        for el in sm.elements:
            walk(el, "    ")


def cmd_inspect(args) -> int:
    try:
        data = Path(args.file).read_bytes()
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "ReadFailed", str(exc))
    try:
        env = aasx.read_aasx(data)
    except aasx.AasxError as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    if args.path is None:
        if args.json:
            print(json.dumps(env_to_json(env), indent=2))
        else:
            _print_tree(env)
        return EXIT_OK
    try:
        node = resolve(env, args.path)
    except NotFound as exc:
        return _fail(EXIT_VALIDATION, "NotFound", str(exc))
    if isinstance(node, Shell):
        obj = shell_to_json(node, env)
    elif isinstance(node, Submodel):
        obj = submodel_to_json(node)
    else:
        obj = element_to_json(node)
    print(json.dumps(obj, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        if args.aasx:
            env = aasx.read_aasx(Path(args.aasx).read_bytes())
            violations = validate(env)
        elif args.component:
            load_component_file(args.component)
            violations = []
        else:
            components = load_component_dir(args.components)
            load_system_file(args.system, components)
            violations = []
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "MissingInput", str(exc))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "ReadFailed", str(exc))
    except aasx.AasxError as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except ModelDocumentError as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    if violations:
        for violation in violations:
            print(str(violation), file=sys.stderr)
        return _fail(EXIT_VALIDATION, "InvalidEnvironment", f"{len(violations)} violation(s)")
    print("ok")
    return EXIT_OK


# --- serve / sim --------------------------------------------------------------


def cmd_serve(args) -> int:
    try:
        config = ServerConfig.from_file(args.config)
        if args.listen:
            parse_address(args.listen)
            config.listen_address = args.listen
    except ConfigError as exc:
        return _fail(EXIT_VALIDATION, "ConfigError", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "MissingInput", str(exc))
    try:
        serve(config)
    except (ConfigError, ModelDocumentError, aasx.AasxError) as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "MissingInput", str(exc))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "StartupFailed", str(exc))
    return EXIT_OK


def cmd_sim(args) -> int:
    try:
        config = load_sim_config(args.config)
    except FileNotFoundError as exc:
        return _fail(EXIT_RUNTIME, "MissingInput", str(exc))
    except SimConfigError as exc:
        return _fail(EXIT_VALIDATION, "SimConfigError", str(exc))
    host, port = parse_address(args.listen)
    robot = SimRobot(config)
    try:
        listener = socket.create_server((host, port))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "StartupFailed", str(exc))
    actual_host, actual_port = listener.getsockname()[:2]
    print(f"sim robot {config.robot_name} listening on {actual_host}:{actual_port}", flush=True)
    stop = threading.Event()
    try:
        robot.serve_forever(listener, stop)
    except KeyboardInterrupt:
        stop.set()
    finally:
        listener.close()
    return EXIT_OK


# --- type-2 client -------------------------------------------------------------


def _request(server: str, method: str, path: str, body: dict | None = None) -> tuple[int, dict]:
    host, port = parse_address(server)
    conn = http.client.HTTPConnection(host, port, timeout=10)
    try:
        payload = json.dumps(body).encode("utf-8") if body is not None else None
        headers = {"Content-Type": "application/json"} if payload else {}
        conn.request(method, path, body=payload, headers=headers)
        response = conn.getresponse()
        raw = response.read()
        return response.status, json.loads(raw.decode("utf-8")) if raw else {}
    finally:
        conn.close()


def _operation(server: str, name: str, body: dict) -> tuple[int, dict]:
    return _request(server, "POST", f"/submodels/Operations/{name}", body)


def _parse_param(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ValueError(f"--param needs key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def cmd_client(args) -> int:
    try:
        return _client_action(args)
    except (ConnectionError, socket.timeout, OSError) as exc:
        return _fail(EXIT_RUNTIME, "ConnectionFailed", str(exc))


def _client_action(args) -> int:
    if args.action == "push":
        try:
            params = dict(_parse_param(p) for p in args.param or [])
        except ValueError as exc:
            return _fail(EXIT_USAGE, "Usage", str(exc))
        status, body = _operation(args.server, "pushCapability", {"capability": args.capability, "params": params})
        if status != 200:
            return _fail(EXIT_VALIDATION, body.get("error", "RequestFailed"), json.dumps(body))
        print(json.dumps(body) if args.json else body["commandId"])
        return EXIT_OK

    if args.action == "status":
        status, body = _operation(args.server, "getStatus", {"commandId": args.command_id})
        if status != 200:
            return _fail(EXIT_VALIDATION, body.get("error", "RequestFailed"), json.dumps(body))
        print(json.dumps(body) if args.json else body["state"])
        return EXIT_OK

    if args.action == "output":
        status, body = _operation(args.server, "getOutput", {"commandId": args.command_id})
        if status != 200:
            return _fail(EXIT_VALIDATION, body.get("error", "RequestFailed"), json.dumps(body))
        if args.json:
            print(json.dumps(body))
        elif body["outcome"] == "error":
            print(body["details"].get("reason", "error"))
        else:
            print(json.dumps(body["details"]))
        return EXIT_OK if body["outcome"] == "success" else EXIT_VALIDATION

    if args.action == "delete":
        status, body = _operation(args.server, "deleteCommand", {"commandId": args.command_id})
        if status != 200:
            return _fail(EXIT_VALIDATION, body.get("error", "RequestFailed"), json.dumps(body))
        print(json.dumps(body) if args.json else body["state"])
        return EXIT_OK

    # watch: poll until the command settles, echoing each state change
    last = None
    while True:
        status, body = _operation(args.server, "getStatus", {"commandId": args.command_id})
        if status != 200:
            return _fail(EXIT_VALIDATION, body.get("error", "RequestFailed"), json.dumps(body))
        state = body["state"]
        if state != last:
            print(f"{args.command_id} {state}", flush=True)
            last = state
        if state in _TERMINAL_STATES:
            return EXIT_OK if state == "success" else EXIT_VALIDATION
        time.sleep(args.interval)


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aaskit", description="Digital data sheets and skill commanding for service robots")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a .aasx data sheet package")
    group = gen.add_mutually_exclusive_group(required=True)
    group.add_argument("--component", help="component document (*.component.json)")
    group.add_argument("--system", help="system document (*.system.json)")
    gen.add_argument("--components", help="directory with *.component.json (required with --system)")
    gen.add_argument("--out", required=True, help="output .aasx path")
    gen.add_argument("--json", action="store_true", help="machine-readable report")
    gen.set_defaults(func=cmd_generate)

    ins = sub.add_parser("inspect", help="print the contents of a .aasx package")
    ins.add_argument("file", help=".aasx package")
    ins.add_argument("--path", help="slash-separated idShort path to print as JSON")
    ins.add_argument("--json", action="store_true", help="print the full tree as JSON")
    ins.set_defaults(func=cmd_inspect)

    val = sub.add_parser("validate", help="validate model documents or a package")
    vgroup = val.add_mutually_exclusive_group(required=True)
    vgroup.add_argument("--component", help="component document to check")
    vgroup.add_argument("--system", help="system document to check")
    vgroup.add_argument("--aasx", help=".aasx package to check")
    val.add_argument("--components", help="directory with *.component.json (required with --system)")
    val.set_defaults(func=cmd_validate)

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--config", required=True, help="server config JSON")
    srv.add_argument("--listen", help="override listenAddress (host:port)")
    srv.set_defaults(func=cmd_serve)

    sim = sub.add_parser("sim", help="run the simulated robot")
    sim.add_argument("--config", required=True, help="sim config JSON")
    sim.add_argument(
        "--listen",
        default=f"0.0.0.0:{DEFAULT_BRIDGE_PORT}",
        help=f"listen address (default 0.0.0.0:{DEFAULT_BRIDGE_PORT})",
    )
    sim.set_defaults(func=cmd_sim)

    client = sub.add_parser("client", help="talk to a running service")
    client.add_argument("action", choices=("push", "status", "output", "delete", "watch"))
    client.add_argument("command_id", nargs="?", help="command id (for status/output/delete/watch)")
    client.add_argument("--server", required=True, help="service address host:port")
    client.add_argument("--capability", help="capability name (push)")
    client.add_argument("--param", action="append", help="key=value parameter (push, repeatable)")
    client.add_argument("--interval", type=float, default=0.2, help="watch poll interval in seconds")
    client.add_argument("--json", action="store_true", help="JSON output")
    client.set_defaults(func=cmd_client)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "command", None) == "generate" and args.system and not args.components:
        return _fail(EXIT_USAGE, "Usage", "--system requires --components")
    if getattr(args, "command", None) == "validate" and args.system and not args.components:
        return _fail(EXIT_USAGE, "Usage", "--system requires --components")
    if getattr(args, "command", None) == "client":
        if args.action == "push" and not args.capability:
            return _fail(EXIT_USAGE, "Usage", "push requires --capability")
        if args.action != "push" and not args.command_id:
            return _fail(EXIT_USAGE, "Usage", f"{args.action} requires a command id")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
