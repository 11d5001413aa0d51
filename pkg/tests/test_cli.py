"""CLI behavior: exit codes, outputs, client flows, scripted scenarios."""

import json
import shutil
import threading

import pytest

from aaskit import aasx
from aaskit.server import AasServer, ServerConfig

from httputil import JsonClient
from procutil import run_cli, start_serve, start_sim


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, data_dir):
    path = tmp_path_factory.mktemp("cli")
    for name in (
        "ComponentWebots.component.json",
        "ComponentBase.component.json",
        "ComponentArm.component.json",
        "Larry.system.json",
        "sim.json",
    ):
        shutil.copy(data_dir / name, path / name)
    shutil.copy(data_dir / "golden" / "Larry.aasx", path / "Larry.aasx")
    return path


class TestGenerate:
    def test_component_package(self, workdir):
        result = run_cli(
            "generate", "--component", workdir / "ComponentWebots.component.json", "--out", workdir / "w.aasx"
        )
        assert result.returncode == 0, result.stderr
        env = aasx.read_aasx((workdir / "w.aasx").read_bytes())
        assert len(env.submodels) == 6

    def test_system_package(self, workdir):
        result = run_cli(
            "generate",
            "--system", workdir / "Larry.system.json",
            "--components", workdir,
            "--out", workdir / "LarryGen.aasx",
            "--json",
        )
        assert result.returncode == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["shellId"] == "urn:aas:system:Larry"
        assert len(report["submodelsEmitted"]) == 6
        assert (workdir / "LarryGen.aasx").read_bytes() == (workdir / "Larry.aasx").read_bytes()

    def test_deterministic_across_runs(self, workdir):
        run_cli("generate", "--component", workdir / "ComponentWebots.component.json", "--out", workdir / "a.aasx")
        run_cli("generate", "--component", workdir / "ComponentWebots.component.json", "--out", workdir / "b.aasx")
        assert (workdir / "a.aasx").read_bytes() == (workdir / "b.aasx").read_bytes()

    def test_missing_input_exit_3(self, workdir):
        result = run_cli("generate", "--component", workdir / "nope.component.json", "--out", workdir / "x.aasx")
        assert result.returncode == 3
        assert result.stderr.startswith("error: ")
        assert len(result.stderr.strip().splitlines()) == 1

    def test_invalid_document_exit_2(self, workdir):
        # not named *.component.json so it stays invisible to --components dirs
        bad = workdir / "bad-component-doc.json"
        bad.write_text('{"name": "Bad"}')
        result = run_cli("generate", "--component", bad, "--out", workdir / "x.aasx")
        assert result.returncode == 2
        assert "error: " in result.stderr

    def test_usage_error_exit_1(self, workdir):
        result = run_cli("generate", "--component", workdir / "ComponentWebots.component.json")
        assert result.returncode == 1
        result = run_cli("generate", "--system", workdir / "Larry.system.json", "--out", workdir / "x.aasx")
        assert result.returncode == 1


class TestInspect:
    def test_full_tree(self, workdir):
        result = run_cli("inspect", workdir / "Larry.aasx")
        assert result.returncode == 0
        assert "Larry [RobotSystem]" in result.stdout
        assert "Capabilities" in result.stdout

    def test_path_prints_json(self, workdir):
        result = run_cli("inspect", workdir / "Larry.aasx", "--path", "Larry/Capabilities")
        assert result.returncode == 0
        node = json.loads(result.stdout)
        assert {el["idShort"] for el in node["elements"]} == {"goto", "pick", "place", "orderPicking"}

    def test_json_tree(self, workdir):
        result = run_cli("inspect", workdir / "Larry.aasx", "--json")
        assert result.returncode == 0
        tree = json.loads(result.stdout)
        assert tree["shells"][0]["idShort"] == "Larry"

    def test_bad_path_exit_2(self, workdir):
        result = run_cli("inspect", workdir / "Larry.aasx", "--path", "Larry/NoSuch")
        assert result.returncode == 2

    def test_not_a_package_exit_2(self, workdir):
        garbage = workdir / "garbage.aasx"
        garbage.write_bytes(b"hello")
        result = run_cli("inspect", garbage)
        assert result.returncode == 2


class TestValidate:
    def test_component_ok(self, workdir):
        result = run_cli("validate", "--component", workdir / "ComponentBase.component.json")
        assert (result.returncode, result.stdout.strip()) == (0, "ok")

    def test_system_ok(self, workdir):
        result = run_cli("validate", "--system", workdir / "Larry.system.json", "--components", workdir)
        assert result.returncode == 0

    def test_aasx_ok(self, workdir):
        result = run_cli("validate", "--aasx", workdir / "Larry.aasx")
        assert result.returncode == 0

    def test_broken_document_exit_2(self, workdir):
        bad = workdir / "broken.json"
        bad.write_text("{]")
        result = run_cli("validate", "--component", bad)
        assert result.returncode == 2


@pytest.fixture(scope="module")
def live_stack(workdir):
    """In-process server plus sim robot; CLI clients talk to it over HTTP."""
    import socket

    from aaskit.bridge import SimRobot, load_sim_config

    listener = socket.create_server(("127.0.0.1", 0))
    sim_port = listener.getsockname()[1]
    stop = threading.Event()
    robot = SimRobot(load_sim_config(workdir / "sim.json"))
    thread = threading.Thread(target=robot.serve_forever, args=(listener, stop), daemon=True)
    thread.start()

    server = AasServer(
        ServerConfig(
            listen_address="127.0.0.1:0",
            environment_source=str(workdir / "Larry.aasx"),
            bridge_address=f"127.0.0.1:{sim_port}",
        )
    )
    server.start()
    yield server
    server.stop()
    stop.set()
    listener.close()


class TestClient:
    def test_push_prints_command_id(self, live_stack):
        result = run_cli(
            "client", "push", "--server", f"127.0.0.1:{live_stack.port}",
            "--capability", "goto", "--param", "x=2", "--param", "y=3",
        )
        assert result.returncode == 0, result.stderr
        assert result.stdout.strip().startswith("cmd-")

    def test_watch_reaches_success(self, live_stack):
        pushed = run_cli(
            "client", "push", "--server", f"127.0.0.1:{live_stack.port}",
            "--capability", "goto", "--param", "x=1", "--param", "y=1",
        )
        command_id = pushed.stdout.strip()
        result = run_cli("client", "watch", command_id, "--server", f"127.0.0.1:{live_stack.port}", "--interval", "0.05")
        assert result.returncode == 0, result.stderr
        lines = result.stdout.strip().splitlines()
        assert lines[-1] == f"{command_id} success"

    def test_status_and_output(self, live_stack):
        pushed = run_cli(
            "client", "push", "--server", f"127.0.0.1:{live_stack.port}",
            "--capability", "pick", "--param", "object=box",
        )
        command_id = pushed.stdout.strip()
        run_cli("client", "watch", command_id, "--server", f"127.0.0.1:{live_stack.port}", "--interval", "0.05")
        status = run_cli("client", "status", command_id, "--server", f"127.0.0.1:{live_stack.port}")
        assert status.stdout.strip() == "success"
        output = run_cli("client", "output", command_id, "--server", f"127.0.0.1:{live_stack.port}", "--json")
        assert output.returncode == 0
        assert json.loads(output.stdout)["outcome"] == "success"

    def test_output_on_rejected_prints_reason_exit_2(self, live_stack):
        pushed = run_cli(
            "client", "push", "--server", f"127.0.0.1:{live_stack.port}",
            "--capability", "goto", "--param", "x=north",
        )
        command_id = pushed.stdout.strip()
        result = run_cli("client", "output", command_id, "--server", f"127.0.0.1:{live_stack.port}")
        assert result.returncode == 2
        assert result.stdout.startswith("rejected: ")

    def test_delete(self, live_stack):
        pushed = run_cli(
            "client", "push", "--server", f"127.0.0.1:{live_stack.port}",
            "--capability", "goto", "--param", "x=bogus",
        )
        command_id = pushed.stdout.strip()
        result = run_cli("client", "delete", command_id, "--server", f"127.0.0.1:{live_stack.port}")
        assert (result.returncode, result.stdout.strip()) == (0, "deleted")

    def test_connection_refused_exit_3(self):
        result = run_cli("client", "status", "cmd-0000000001", "--server", "127.0.0.1:1", timeout=30)
        assert result.returncode == 3

    def test_push_without_capability_exit_1(self, live_stack):
        result = run_cli("client", "push", "--server", f"127.0.0.1:{live_stack.port}")
        assert result.returncode == 1

    def test_status_without_id_exit_1(self, live_stack):
        result = run_cli("client", "status", "--server", f"127.0.0.1:{live_stack.port}")
        assert result.returncode == 1


def run_scenario(base_dir, tag: str) -> list:
    """generate -> serve + sim -> push three commands -> watch all.

    Returns the deterministic observables: per command the terminal state and
    reported distance, plus the final goto statistics.
    """
    scenario = base_dir / tag
    scenario.mkdir()
    for name in (
        "ComponentWebots.component.json",
        "ComponentBase.component.json",
        "ComponentArm.component.json",
        "Larry.system.json",
        "sim.json",
    ):
        shutil.copy(base_dir / name, scenario / name)

    generated = run_cli(
        "generate", "--system", scenario / "Larry.system.json", "--components", scenario,
        "--out", scenario / "Larry.aasx",
    )
    assert generated.returncode == 0, generated.stderr

    log = []
    with start_sim(scenario / "sim.json") as sim:
        config = scenario / "server.json"
        config.write_text(
            json.dumps(
                {
                    "listenAddress": "127.0.0.1:0",
                    "environmentSource": str(scenario / "Larry.aasx"),
                    "bridgeAddress": f"127.0.0.1:{sim.port}",
                }
            )
        )
        with start_serve(config) as serve:
            server_addr = f"127.0.0.1:{serve.port}"
            pushes = [
                ("goto", ["--param", "x=3", "--param", "y=4"]),
                ("goto", ["--param", "x=6", "--param", "y=8"]),
                ("pick", ["--param", "object=crate"]),
            ]
            ids = []
            for capability, params in pushes:
                result = run_cli("client", "push", "--server", server_addr, "--capability", capability, *params)
                assert result.returncode == 0, result.stderr
                ids.append(result.stdout.strip())
            for command_id in ids:
                watched = run_cli("client", "watch", command_id, "--server", server_addr, "--interval", "0.02")
                assert watched.returncode == 0, watched.stderr
            for command_id in ids:
                output = run_cli("client", "output", command_id, "--server", server_addr, "--json")
                body = json.loads(output.stdout)
                log.append((command_id, body["outcome"], body["details"].get("distanceMeters")))
            with JsonClient("127.0.0.1", serve.port) as http:
                _, od = http.get("/submodels/OperationalData")
            km = next(el for el in od["elements"] if el["idShort"] == "kilometersTravelled")
            goto = next(el for el in od["elements"] if el["idShort"] == "goto")
            stats = {p["idShort"]: p["value"] for p in goto["elements"]}
            log.append(("kilometersTravelled", float(km["value"])))
            log.append(("gotoSuccessRate", float(stats["successRate"])))
            log.append(("gotoCount", stats["count"]))
    return log


class TestScriptedScenario:
    def test_two_runs_produce_identical_logs(self, workdir):
        first = run_scenario(workdir, "run1")
        second = run_scenario(workdir, "run2")
        assert first == second
        assert first[0] == ("cmd-0000000001", "success", 5.0)
        assert first[1] == ("cmd-0000000002", "success", 5.0)  # (3,4) -> (6,8) is another 3-4-5 leg
        assert first[2][1] == "success"
        assert first[3] == ("kilometersTravelled", pytest.approx(0.01, abs=1e-9))
        assert first[4] == ("gotoSuccessRate", 1.0)
