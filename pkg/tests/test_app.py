import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from catchlab.app import (load_config, profile, read_replay,
                          run_recorded_episode, verify_replay)
from catchlab.app.cli import main as cli_main
from catchlab.app.episode import Episode, evaluate_arm
from catchlab.app.profiles import world_from_dict
from catchlab.app.server import create_app
from catchlab.daim import ScriptedOperator, default_retarget_map, retarget
from catchlab.dataset import collect
from catchlab.diffusion import DpConfig, train_dp
from catchlab.errors import ConfigError
from catchlab.sim import easy_world


@pytest.fixture(scope="module")
def small_dp(tmp_path_factory):
    """Tiny diffusion policy + checkpoint trained on the easy world."""
    cfg = easy_world()
    mapping = default_retarget_map(cfg)

    def source(episode, rng):
        op = ScriptedOperator("expert", cfg, rng)
        return lambda state, t: retarget(op.frame(state, t), mapping)

    ds, _ = collect(source, cfg, {"train": 15, "val": 3}, seed=9, m_points=16,
                    exec_noise=0.1)
    dcfg = DpConfig(visual_mode="u3r", d_f=16, train_steps=250, batch_size=24,
                    denoiser_hidden=(48,), enc_hidden=(16,), dec_hidden=(24,))
    policy, _ = train_dp(ds, dcfg, seed=0)
    path = tmp_path_factory.mktemp("ckpt") / "dp.ckpt"
    policy.save(path)
    root = tmp_path_factory.mktemp("data")
    from catchlab.dataset import save
    save(ds, root)
    return cfg, policy, str(path), str(root)


class TestProfiles:
    def test_named_profiles(self):
        desk = profile("desk")
        paper = profile("paper")
        assert desk.ppo.hidden == (128, 128)
        assert paper.world.episode_length == 50
        assert paper.ppo.n_envs == 8192
        assert paper.dp.d_f == 256
        assert paper.collect.train == 5000 and paper.collect.val == 1000
        with pytest.raises(ConfigError):
            profile("garage")

    def test_world_roundtrip_through_dict(self):
        cfg = profile("desk").world
        rebuilt = world_from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert rebuilt == cfg
        assert rebuilt.config_hash() == cfg.config_hash()

    def test_file_overrides_profile_and_flags_override_file(self, tmp_path):
        doc = {"profile": "desk", "seed": 5,
               "world": {"gravity": 5.0},
               "daim": {"beta_v": 3.0}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        cfg = load_config(str(path))
        assert cfg.world.gravity == 5.0
        assert cfg.daim.beta_v == 3.0
        assert cfg.seed == 5
        cfg2 = load_config(str(path), seed=77)
        assert cfg2.seed == 77

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"daim": {"beta_q": 1.0}}))
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestEpisode:
    def test_tele_pure_ignores_policy(self, small_dp):
        cfg, policy, _, _ = small_dp

        def factory(rng):
            return ScriptedOperator("expert", cfg, rng)

        def outcome(with_policy):
            seeds = np.random.SeedSequence(4)
            from catchlab.app.episode import run_episode
            return run_episode(cfg, "tele-pure", seeds,
                               policy=policy if with_policy else None,
                               teleop_factory=factory).to_dict()

        assert outcome(True) == outcome(False)

    def test_open_loop_has_no_blend_trace(self, small_dp):
        cfg, policy, _, _ = small_dp
        ep = Episode(cfg, "open-loop-policy", np.random.default_rng(0),
                     policy=policy, infer_rng=np.random.default_rng(1),
                     cloud_rng=np.random.default_rng(2))
        ep.run()
        assert ep.last_trace is None

    def test_tele_catch_produces_traces(self, small_dp):
        cfg, policy, _, _ = small_dp
        ep = Episode(cfg, "tele-catch", np.random.default_rng(0),
                     policy=policy,
                     teleop=ScriptedOperator("expert", cfg,
                                             np.random.default_rng(3)),
                     infer_rng=np.random.default_rng(1),
                     cloud_rng=np.random.default_rng(2))
        ep.run()
        assert ep.last_trace is not None
        assert len(ep.last_trace.alphas) == policy.schedule.K + 1

    def test_evaluate_arm_counts(self, small_dp):
        cfg, policy, _, _ = small_dp
        out = evaluate_arm(cfg, "tele-pure", 4, seed=0,
                           teleop_profile="expert")
        assert out["episodes"] == 4
        assert out["successes"] == round(out["success_rate"] * out["valid"])

    def test_batch_sr_arithmetic_over_15(self, small_dp):
        cfg, _, _, _ = small_dp
        out = evaluate_arm(cfg, "tele-pure", 15, seed=3,
                           teleop_profile="expert")
        assert out["episodes"] == 15
        assert out["success_rate"] == out["successes"] / 15


class TestReplay:
    def test_roundtrip_bit_exact(self, small_dp, tmp_path):
        cfg, policy, _, _ = small_dp
        path = tmp_path / "ep.jsonl"
        result = run_recorded_episode(cfg, "tele-catch", seed=11, path=path,
                                      policy=policy, teleop_profile="expert")
        assert result.steps > 0
        assert verify_replay(path) is None
        header, steps, blends = read_replay(path)
        assert header["mode"] == "tele-catch"
        assert len(steps) == result.steps
        assert len(blends) >= 1
        blend_keys = set(blends[0])
        assert {"u", "alpha_max", "alphas", "x_ref", "x_policy",
                "x_exec"} <= blend_keys

    def test_divergence_reported_with_step(self, small_dp, tmp_path):
        cfg, _, _, _ = small_dp
        path = tmp_path / "ep.jsonl"
        run_recorded_episode(cfg, "tele-pure", seed=12, path=path,
                             teleop_profile="expert")
        lines = path.read_text().splitlines()
        victim = json.loads(lines[10])
        assert victim["kind"] == "step"
        victim["state"]["object"]["p"][0] += 1e-9
        lines[10] = json.dumps(victim)
        path.write_text("\n".join(lines) + "\n")
        assert verify_replay(path) == victim["t"]


class TestCli:
    def test_eval_zero_episodes_usage_error(self, tmp_path):
        rc = cli_main(["--out", str(tmp_path), "--profile", "easy",
                       "eval", "--episodes", "0"])
        assert rc == 2

    def test_unknown_arm_usage_error(self, tmp_path):
        rc = cli_main(["--out", str(tmp_path), "--profile", "easy",
                       "eval", "--episodes", "1", "--arms", "warp-drive"])
        assert rc == 2

    def test_bad_config_file_exit_3(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        rc = cli_main(["--config", str(bad), "--out", str(tmp_path),
                       "eval", "--episodes", "1"])
        assert rc == 3

    def test_eval_tele_pure_writes_table(self, tmp_path, small_dp, capsys):
        rc = cli_main(["--out", str(tmp_path), "--profile", "easy",
                       "--seed", "3", "eval", "--episodes", "2",
                       "--arms", "tele-pure", "--teleop", "expert"])
        assert rc == 0
        assert (tmp_path / "success_rates.csv").exists()

    def test_eval_mse_table_shape(self, tmp_path, small_dp):
        cfg, policy, ckpt, dataset_dir = small_dp
        rc = cli_main(["--out", str(tmp_path), "--profile", "easy",
                       "--seed", "3", "eval", "--episodes", "1",
                       "--arms", "tele-pure", "--teleop", "expert",
                       "--checkpoint", ckpt, "--dataset", dataset_dir])
        assert rc == 0
        rows = list((tmp_path / "action_noise_mse.csv").read_text()
                    .strip().splitlines())
        header = rows[0].split(",")
        assert header[0] == "method" and header[-1] == "overall"
        assert rows[1].split(",")[0] == "u3r"

    def test_replay_command_roundtrip(self, tmp_path, small_dp):
        cfg, policy, ckpt, _ = small_dp
        path = tmp_path / "ep.jsonl"
        run_recorded_episode(cfg, "tele-pure", seed=4, path=path,
                             teleop_profile="expert")
        assert cli_main(["replay", str(path)]) == 0

    def test_sweep_emits_rows(self, tmp_path, small_dp):
        cfg, policy, ckpt, _ = small_dp
        rc = cli_main(["--out", str(tmp_path), "--profile", "easy",
                       "--seed", "5", "sweep", "--checkpoint", ckpt,
                       "--beta-v", "1,10,20", "--episodes", "2"])
        assert rc == 0
        rows = (tmp_path / "sweep_beta_v.csv").read_text().strip().splitlines()
        assert len(rows) == 4  # header + 3 values
        assert rows[0].startswith("parameter,value")


class TestServer:
    @pytest.fixture()
    def client(self, small_dp):
        cfg, policy, _, _ = small_dp
        app_cfg = profile("easy")
        app_cfg.world = cfg
        app = create_app(app_cfg, policy)
        with TestClient(app) as tc:
            yield tc

    def test_health(self, client):
        out = client.get("/health").json()
        assert out["status"] == "ok"

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404

    def test_create_and_query_session(self, client):
        sid = client.post("/sessions", json={"mode": "tele-pure",
                                             "seed": 1}).json()["id"]
        info = client.get(f"/sessions/{sid}").json()
        assert info["mode"] == "tele-pure"
        assert info["tallies"] == {"succ": 0, "drop": 0, "episodes": 0}

    def test_hello_version_mismatch_gets_error_frame(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_text(json.dumps({"kind": "hello", "protocol_version": 2,
                                     "role": "driver"}))
            out = ws.receive_json()
            assert out["kind"] == "error"
            assert out["code"] == "version_mismatch"

    def test_driver_then_observer_roles(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws1:
            ws1.send_text(json.dumps({"kind": "hello", "protocol_version": 1,
                                      "role": "driver"}))
            hello1 = ws1.receive_json()
            assert hello1["role"] == "driver"
            assert "scene" in hello1
            with client.websocket_connect(f"/sessions/{sid}/stream") as ws2:
                ws2.send_text(json.dumps({"kind": "hello",
                                          "protocol_version": 1,
                                          "role": "driver"}))
                hello2 = ws2.receive_json()
                assert hello2["role"] == "observer"
                # observer input is rejected with an error frame
                ws2.send_text(json.dumps({"kind": "teleop_input", "seq": 1,
                                          "t_ms": 0, "cursor": [0, 0],
                                          "grip": 0.5}))
                out = ws2.receive_json()
                assert out["kind"] == "error" and out["code"] == "not_driver"

    def test_stream_frames_and_input_echo(self, client):
        sid = client.post("/sessions", json={"mode": "tele-pure",
                                             "seed": 2}).json()["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_text(json.dumps({"kind": "hello", "protocol_version": 1,
                                     "role": "driver"}))
            assert ws.receive_json()["role"] == "driver"
            ws.send_text(json.dumps({"kind": "control", "op": "start"}))
            ws.send_text(json.dumps({"kind": "teleop_input", "seq": 7,
                                     "t_ms": 1.0, "cursor": [0.2, -0.1],
                                     "grip": 0.6}))
            seqs = []
            for _ in range(6):
                frame = ws.receive_json()
                assert frame["kind"] in ("state_frame", "episode_result")
                if frame["kind"] == "state_frame":
                    seqs.append(frame["seq"])
                    last = frame
            assert seqs == sorted(seqs)
            assert last["input_seq"] >= 7
            assert set(last["daim"]) == {"u", "alpha_max", "alpha_final"}
            assert len(last["cloud"]) <= 64
            ws.send_text(json.dumps({"kind": "control", "op": "pause"}))

    def test_unknown_kind_keeps_connection(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_text(json.dumps({"kind": "hello", "protocol_version": 1,
                                     "role": "driver"}))
            ws.receive_json()
            ws.send_text(json.dumps({"kind": "mystery"}))
            out = ws.receive_json()
            assert out["kind"] == "error" and out["code"] == "unknown_kind"
            # still alive
            ws.send_text(json.dumps({"kind": "control", "op": "pause"}))

    def test_delete_session(self, client):
        sid = client.post("/sessions", json={}).json()["id"]
        assert client.delete(f"/sessions/{sid}").json() == {"deleted": sid}
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_slow_client_queue_drops_oldest(self):
        import asyncio

        from catchlab.app.server import CLIENT_QUEUE_SIZE, Client

        async def scenario():
            client = Client(ws=None, role="observer")
            for i in range(CLIENT_QUEUE_SIZE + 5):
                client.offer(str(i))
            drained = []
            while not client.queue.empty():
                drained.append(client.queue.get_nowait())
            return drained

        drained = asyncio.run(scenario())
        assert len(drained) == CLIENT_QUEUE_SIZE
        assert drained[-1] == str(CLIENT_QUEUE_SIZE + 4)  # newest kept
        assert drained[0] == "5"                          # oldest dropped

    def test_policy_mode_without_checkpoint_rejected(self, small_dp):
        cfg, _, _, _ = small_dp
        app_cfg = profile("easy")
        app_cfg.world = cfg
        app = create_app(app_cfg, policy=None)
        with TestClient(app) as tc:
            out = tc.post("/sessions", json={"mode": "tele-catch"})
            assert out.status_code == 400
