"""HTTP service: routes, status codes, state vocabulary, persistence."""

import concurrent.futures
import json
import random

import pytest

from aaskit import aasx
from aaskit.commands import Outcome
from aaskit.server import AasServer, ConfigError, ServerConfig, load_ledger, parse_address, save_ledger

from httputil import JsonClient

STATE_VOCABULARY = {"pending", "executing", "success", "error", "deleted"}


@pytest.fixture()
def larry_server(larry_env, tmp_path):
    package = tmp_path / "Larry.aasx"
    package.write_bytes(aasx.write_aasx(larry_env))
    config = ServerConfig(listen_address="127.0.0.1:0", environment_source=str(package))
    server = AasServer(config)
    server.start()
    yield server
    server.stop()


@pytest.fixture()
def client(larry_server):
    with JsonClient("127.0.0.1", larry_server.port) as c:
        yield c


class TestReadEndpoints:
    def test_shells(self, client):
        assert client.get("/shells") == (200, ["Larry"])

    def test_shell_detail(self, client):
        status, body = client.get("/shells/Larry")
        assert status == 200
        assert body["assetKind"] == "RobotSystem"
        assert body["submodels"][:6] == [
            "BillOfMaterials",
            "TechnicalData",
            "Operations",
            "Nameplate",
            "Documentation",
            "Capabilities",
        ]
        assert "OperationalData" in body["submodels"]

    def test_unknown_shell(self, client):
        status, body = client.get("/shells/Nobody")
        assert status == 404
        assert body["error"] == "NotFound"

    def test_shell_submodels(self, client):
        status, body = client.get("/shells/Larry/submodels")
        assert status == 200
        assert {entry["idShort"] for entry in body} >= {"Capabilities", "Operations"}

    def test_submodel(self, client):
        status, body = client.get("/submodels/Capabilities")
        assert status == 200
        assert {el["idShort"] for el in body["elements"]} == {"goto", "pick", "place", "orderPicking"}

    def test_element_path(self, client):
        status, body = client.get("/submodels/BillOfMaterials/elements/base/component")
        assert status == 200
        assert body == {"kind": "property", "idShort": "component", "valueType": "string", "value": "ComponentBase"}

    def test_unknown_element(self, client):
        status, body = client.get("/submodels/Capabilities/elements/levitate")
        assert status == 404

    def test_health(self, client):
        status, body = client.get("/health")
        assert status == 200
        assert body["status"] == "ok"
        assert isinstance(body["uptimeSeconds"], int)

    def test_unknown_route(self, client):
        assert client.get("/nope")[0] == 404


class TestOperations:
    def test_push_returns_first_id(self, client):
        status, body = client.operation("pushCapability", {"capability": "goto", "params": {"x": 2, "y": 3}})
        assert (status, body) == (200, {"commandId": "cmd-0000000001"})

    def test_push_rejection_is_200(self, client):
        status, body = client.operation("pushCapability", {"capability": "levitate", "params": {}})
        assert status == 200
        command_id = body["commandId"]
        status, body = client.operation("getStatus", {"commandId": command_id})
        assert (status, body) == (200, {"state": "error"})
        status, body = client.operation("getOutput", {"commandId": command_id})
        assert status == 200
        assert body["outcome"] == "error"
        assert body["details"]["reason"].startswith("rejected: ")

    def test_get_output_pending_409(self, client):
        _, body = client.operation("pushCapability", {"capability": "goto", "params": {"x": 1, "y": 1}})
        status, body = client.operation("getOutput", {"commandId": body["commandId"]})
        assert status == 409
        assert body == {"error": "OutputNotAvailable", "state": "pending"}

    def test_get_status_unknown_is_deleted(self, client):
        status, body = client.operation("getStatus", {"commandId": "cmd-9999999999"})
        assert (status, body) == (200, {"state": "deleted"})

    def test_get_output_unknown_404(self, client):
        status, body = client.operation("getOutput", {"commandId": "cmd-9999999999"})
        assert status == 404
        assert body["error"] == "CommandUnknown"

    def test_delete_executing_409(self, larry_server, client):
        _, body = client.operation("pushCapability", {"capability": "goto", "params": {"x": 1, "y": 1}})
        command_id = body["commandId"]
        assert larry_server.registry.take_next().id == command_id
        status, body = client.operation("deleteCommand", {"commandId": command_id})
        assert status == 409
        assert body == {"error": "CannotDeleteExecuting", "state": "executing"}

    def test_delete_idempotent(self, client):
        status, body = client.operation("deleteCommand", {"commandId": "cmd-0000000042"})
        assert (status, body) == (200, {"state": "deleted"})

    def test_completed_flow_over_http(self, larry_server, client):
        _, body = client.operation("pushCapability", {"capability": "goto", "params": {"x": 3, "y": 4}})
        command_id = body["commandId"]
        cmd = larry_server.registry.take_next()
        larry_server.registry.complete(cmd.id, Outcome.SUCCESS, {"distanceMeters": 5.0})
        assert client.operation("getStatus", {"commandId": command_id}) == (200, {"state": "success"})
        status, body = client.operation("getOutput", {"commandId": command_id})
        assert body == {"outcome": "success", "details": {"distanceMeters": 5.0}}

    def test_unknown_operation_404(self, client):
        status, body = client.operation("teleport", {})
        assert status == 404
        assert body["error"] == "UnknownOperation"

    def test_malformed_body_400(self, larry_server):
        import http.client

        conn = http.client.HTTPConnection("127.0.0.1", larry_server.port, timeout=5)
        conn.request(
            "POST",
            "/submodels/Operations/pushCapability",
            body=b"{not json",
            headers={"Content-Type": "application/json"},
        )
        response = conn.getresponse()
        assert response.status == 400
        assert json.loads(response.read())["error"] == "MalformedBody"
        conn.close()

    def test_missing_capability_field_400(self, client):
        status, body = client.operation("pushCapability", {"params": {}})
        assert status == 400

    def test_bad_params_type_400(self, client):
        status, body = client.operation("pushCapability", {"capability": "goto", "params": [1, 2]})
        assert status == 400


class TestOperationalDataEndpoint:
    def test_rebuilt_from_ledger_on_read(self, larry_server, client):
        _, od = client.get("/submodels/OperationalData")
        goto = next(el for el in od["elements"] if el["idShort"] == "goto")
        counts = {p["idShort"]: p["value"] for p in goto["elements"]}
        assert counts["count"] == "0"

        _, body = client.operation("pushCapability", {"capability": "goto", "params": {"x": 3, "y": 4}})
        cmd = larry_server.registry.take_next()
        larry_server.registry.complete(cmd.id, Outcome.SUCCESS, {"distanceMeters": 5.0})

        _, od = client.get("/submodels/OperationalData")
        km = next(el for el in od["elements"] if el["idShort"] == "kilometersTravelled")
        assert float(km["value"]) == pytest.approx(0.005, abs=1e-9)
        goto = next(el for el in od["elements"] if el["idShort"] == "goto")
        counts = {p["idShort"]: p["value"] for p in goto["elements"]}
        assert counts == {
            "count": "1",
            "successCount": "1",
            "errorCount": "0",
            "successRate": "1.0",
            "meanDurationSeconds": counts["meanDurationSeconds"],
        }

    def test_reads_are_idempotent_between_completions(self, client):
        first = client.get("/submodels/Capabilities")
        second = client.get("/submodels/Capabilities")
        assert first == second
        od1 = client.get("/submodels/OperationalData")[1]
        od2 = client.get("/submodels/OperationalData")[1]
        skill_stats = lambda od: [el for el in od["elements"] if el["kind"] == "collection"]
        assert skill_stats(od1) == skill_stats(od2)


class TestConcurrency:
    def test_parallel_pushes_distinct_ids(self, larry_server):
        def push(_):
            with JsonClient("127.0.0.1", larry_server.port) as c:
                status, body = c.operation("pushCapability", {"capability": "goto", "params": {"x": 1, "y": 1}})
                assert status == 200
                return body["commandId"]

        with concurrent.futures.ThreadPoolExecutor(max_workers=32) as pool:
            ids = list(pool.map(push, range(100)))
        assert len(set(ids)) == 100
        assert sorted(int(i[4:]) for i in ids) == list(range(1, 101))


class TestVocabularyFuzz:
    def test_state_strings_stay_in_vocabulary(self, larry_server):
        rng = random.Random(4)
        seen: set[str] = set()
        with JsonClient("127.0.0.1", larry_server.port) as client:
            issued = ["cmd-0000000001"]
            for _ in range(400):
                roll = rng.random()
                if roll < 0.35:
                    params = rng.choice([{"x": 1, "y": 2}, {"x": "bad"}, {}, {"x": 1e9, "y": 0}])
                    _, body = client.operation("pushCapability", {"capability": rng.choice(["goto", "warp"]), "params": params})
                    issued.append(body["commandId"])
                elif roll < 0.55:
                    _, body = client.operation("getStatus", {"commandId": rng.choice(issued)})
                    seen.add(body["state"])
                elif roll < 0.7:
                    status, body = client.operation("getOutput", {"commandId": rng.choice(issued)})
                    if "state" in body:
                        seen.add(body["state"])
                elif roll < 0.85:
                    status, body = client.operation("deleteCommand", {"commandId": rng.choice(issued)})
                    if "state" in body:
                        seen.add(body["state"])
                else:
                    if rng.random() < 0.5 and larry_server.registry.take_next() is not None:
                        pass  # leave one executing sometimes
                    _, body = client.operation("getStatus", {"commandId": rng.choice(issued)})
                    seen.add(body["state"])
        assert seen <= STATE_VOCABULARY
        assert "pending" in seen


class TestPersistence:
    def test_ledger_persisted_and_reloaded(self, larry_env, tmp_path):
        package = tmp_path / "Larry.aasx"
        package.write_bytes(aasx.write_aasx(larry_env))
        persist = tmp_path / "telemetry.json"
        config = ServerConfig(
            listen_address="127.0.0.1:0", environment_source=str(package), telemetry_persist_path=str(persist)
        )
        server = AasServer(config)
        server.start()
        with JsonClient("127.0.0.1", server.port) as client:
            client.operation("pushCapability", {"capability": "goto", "params": {"x": 3, "y": 4}})
        cmd = server.registry.take_next()
        server.registry.complete(cmd.id, Outcome.SUCCESS, {"distanceMeters": 5.0})
        before = server.registry.ledger
        server.stop()

        assert persist.exists()
        reloaded = load_ledger(persist)
        assert reloaded == before

        second = AasServer(config)
        assert second.registry.ledger == before
        second.start()
        with JsonClient("127.0.0.1", second.port) as client:
            _, od = client.get("/submodels/OperationalData")
        km = next(el for el in od["elements"] if el["idShort"] == "kilometersTravelled")
        assert float(km["value"]) == pytest.approx(0.005, abs=1e-9)
        second.stop()

    def test_save_load_helpers(self, tmp_path):
        from aaskit.commands import TelemetryLedger

        ledger = TelemetryLedger(wall_clock=lambda: 123.0)
        ledger.record_completion("goto", Outcome.SUCCESS, 1.0, 10.0)
        path = tmp_path / "ledger.json"
        save_ledger(ledger, path)
        assert load_ledger(path) == ledger


class TestConfig:
    def test_parse_address(self):
        assert parse_address("127.0.0.1:8080") == ("127.0.0.1", 8080)
        with pytest.raises(ConfigError):
            parse_address("nope")
        with pytest.raises(ConfigError):
            parse_address("host:port")

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            ServerConfig.from_dict({"listenAddress": "127.0.0.1:0", "environmentSource": "x", "zap": 1})

    def test_component_dir_source(self, data_dir, tmp_path):
        # a directory with components and one system serves the system shell
        config = ServerConfig(listen_address="127.0.0.1:0", environment_source=str(data_dir))
        server = AasServer(config)
        server.start()
        with JsonClient("127.0.0.1", server.port) as client:
            assert client.get("/shells") == (200, ["Larry"])
        server.stop()

    def test_component_file_source(self, data_dir):
        config = ServerConfig(
            listen_address="127.0.0.1:0",
            environment_source=str(data_dir / "ComponentWebots.component.json"),
        )
        server = AasServer(config)
        server.start()
        with JsonClient("127.0.0.1", server.port) as client:
            assert client.get("/shells") == (200, ["ComponentWebots"])
            # component AAS has no OperationalData
            assert client.get("/submodels/OperationalData")[0] == 404
        server.stop()
