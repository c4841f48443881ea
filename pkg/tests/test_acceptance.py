"""Acceptance suite: every criterion prints one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The imitation-fidelity
criterion trains the full 11-action corpus and takes a few minutes; the whole
module stays far inside its half-hour budget on a desktop CPU.
"""
import math
import time

import numpy as np
import pytest

from puppetbench import bus as busmod
from puppetbench.actions import (
    ChannelLayout,
    Dataset,
    NormalizedSequence,
    default_vocabulary,
    denormalize,
    normalize,
)
from puppetbench.analysis import pca, separation_score, trajectory_rmse
from puppetbench.bus import (
    BusDecodeError,
    BusFrame,
    OP_PING,
    OP_READ_POS,
    OP_REPLY,
    OP_SYNC_WRITE,
    OP_TORQUE,
    OP_WRITE_GOAL,
    SimBus,
    decode_frame,
    encode_frame,
)
from puppetbench.ik import IkConfig, IkObjective, solve
from puppetbench.mtrnn import (
    MtrnnConfig,
    MtrnnNetwork,
    TrainConfig,
    generate,
    rollout_states,
    train,
)
from puppetbench.recording import RecordingConfig, ScriptedPuppet, kinesthetic_record
from puppetbench.robot import default_model

import corpus
from _oracles import analytic_two_link, max_relative_gradient_error, planar_two_link, wrapped_joint_error

# Training recipe for the acceptance corpus (hyperparameters are config;
# see the workbench README for how these were chosen).
ACCEPT_TRAIN = TrainConfig(
    epochs=30000,
    learning_rate=0.001,
    clip_norm=1.0,
    optimizer="adam",
    lr_decay=0.9999,
    report_interval=250,
    seed=0,
)
FIDELITY_BUDGET_S = 30 * 60


def report(name: str, ok: bool, detail: str = ""):
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def model():
    return default_model()


@pytest.fixture(scope="module")
def vocab():
    return default_vocabulary()


@pytest.fixture(scope="module")
def teachers(model, vocab):
    return corpus.build_corpus(model, vocab)


@pytest.fixture(scope="module")
def dataset(model, vocab, teachers):
    return Dataset(vocab, [normalize(s, model, vocab) for s in teachers], model.name)


@pytest.fixture(scope="module")
def trained(dataset):
    net = MtrnnNetwork.initialize(MtrnnConfig(n_io=dataset.dim), seed=ACCEPT_TRAIN.seed)
    t0 = time.time()
    net, curve = train(net, dataset, ACCEPT_TRAIN)
    return net, curve, time.time() - t0


def closed_loop(net, teacher: NormalizedSequence) -> NormalizedSequence:
    gen = generate(net, teacher.name, teacher.vectors[0], steps=len(teacher) - 1)
    full = np.vstack([teacher.vectors[:1], np.clip(gen.vectors, -1.0, 1.0)])
    return NormalizedSequence(teacher.name, full, rate_hz=teacher.rate_hz)


class TestGradientCorrectness:
    def test_bptt_matches_central_differences(self):
        t0 = time.time()
        cfg = MtrnnConfig(n_io=3, n_cf=4, n_cs=2, tau_io=2.0, tau_cf=5.0, tau_cs=70.0)
        rng = np.random.default_rng(11)
        vocab = default_vocabulary()
        seqs = [
            NormalizedSequence("a", rng.uniform(-0.8, 0.8, (5, 3)), rate_hz=50.0),
            NormalizedSequence("b", rng.uniform(-0.8, 0.8, (4, 3)), rate_hz=50.0),
        ]
        ds = Dataset(vocab, seqs, "toy")
        net = MtrnnNetwork.initialize(cfg, seed=11)
        net.b = rng.normal(0, 0.1, cfg.n_total)
        for s in seqs:
            net.initial_cs[s.name] = rng.normal(0, 0.3, cfg.n_cs)
        err = max_relative_gradient_error(net, ds, eps=1e-4)
        elapsed = time.time() - t0
        report(
            "gradient correctness",
            err < 1e-4 and elapsed < 10.0,
            f"(rel err {err:.2e}, {elapsed:.1f}s)",
        )


class TestImitationFidelity:
    def test_closed_loop_rmse_and_events(self, model, vocab, dataset, trained):
        net, curve, train_seconds = trained
        layout = ChannelLayout.of(model, vocab)
        worst_name, worst = "", 0.0
        event_mismatches = []
        for teacher in dataset.sequences:
            gen = closed_loop(net, teacher)
            rmse = trajectory_rmse(gen, teacher, layout)["overall"]
            if rmse > worst:
                worst_name, worst = teacher.name, rmse
            got = denormalize(gen, model, vocab)
            want = denormalize(teacher, model, vocab)
            if (got.facial_events != want.facial_events
                    or got.audio_events != want.audio_events):
                event_mismatches.append(teacher.name)
        ok = worst < 0.1 and not event_mismatches and train_seconds < FIDELITY_BUDGET_S
        report(
            "imitation fidelity",
            ok,
            f"(worst RMSE {worst:.4f} on {worst_name!r}, event mismatches "
            f"{event_mismatches or 'none'}, trained in {train_seconds/60:.1f} min)",
        )

    def test_loss_window_property(self, trained):
        _, curve, _ = trained
        losses = [l for _, l in curve]
        # any 500-epoch window (2 report steps) non-increasing within 5%
        violations = sum(
            1 for i in range(len(losses) - 2) if losses[i + 2] > 1.05 * losses[i]
        )
        report(
            "loss curve smoothness (invariant)",
            violations == 0,
            f"({violations} window violations over {len(losses)} samples)",
        )


class TestContextSelfOrganization:
    def test_pca_silhouette_and_reconstruction(self, dataset, trained):
        net, _, _ = trained
        mats = [rollout_states(net, s.name, s) for s in dataset.sequences]
        result = pca(mats, k=2)
        silhouette = separation_score(result.projections)
        gram = result.components @ result.components.T
        ortho = float(np.max(np.abs(gram - np.eye(2))))
        full = pca(mats, k=net.config.n_cs)
        pooled = np.vstack(mats)
        recon = full.mean + np.vstack(full.projections) @ full.components
        recon_err = float(np.max(np.abs(recon - pooled)))
        ok = silhouette > 0 and ortho < 1e-9 and recon_err < 1e-9
        report(
            "context self-organization",
            ok,
            f"(silhouette {silhouette:.3f}, orthonormality {ortho:.1e}, "
            f"reconstruction {recon_err:.1e})",
        )


class TestKinestheticFidelity:
    def test_sinusoid_within_wire_quantization(self, model):
        bus = SimBus.from_model(model)
        puppet = ScriptedPuppet({1: lambda t: 0.8 * math.sin(2 * math.pi * 0.5 * t)})
        seq = kinesthetic_record(bus, puppet, RecordingConfig(rate_hz=50.0, duration=4.0))
        ticks = np.arange(len(seq)) / 50.0
        expected = 0.8 * np.sin(2 * np.pi * 0.5 * ticks)
        worst = float(np.max(np.abs(seq.frames[:, 0] - expected)))
        torque_ok = all(state.torque_enabled for _, state in bus.servos.values())
        ok = len(seq) == 200 and worst <= 0.5e-3 and torque_ok
        report(
            "kinesthetic recording fidelity",
            ok,
            f"(max error {worst*1000:.3f} mrad over {len(seq)} frames, torque restored={torque_ok})",
        )


class TestIkCorrectness:
    def test_oracle_unreachable_and_determinism(self):
        model = planar_two_link()
        cold = IkConfig(population=64, generations=250, mutation_sigma=0.15,
                        sigma_decay=0.96, tolerance=2e-4)
        rng = np.random.default_rng(42)
        worst_tip, worst_joint = 0.0, 0.0
        for k in range(100):
            r = rng.uniform(0.05, 0.38)
            phi = rng.uniform(-math.pi, math.pi)
            x, y = r * math.cos(phi), r * math.sin(phi)
            cfg = IkConfig(population=64, generations=250, mutation_sigma=0.15,
                           sigma_decay=0.96, tolerance=2e-4, seed=k)
            sol = solve(model, "arm", [IkObjective.position((x, y, 0.0))], [0.0, 0.0], cfg)
            worst_tip = max(worst_tip, sol.tip_error)
            worst_joint = max(
                worst_joint, wrapped_joint_error(sol.angles, analytic_two_link(x, y, 0.2, 0.2))
            )
        narrow = planar_two_link(0.2, 0.14)
        env_ok = True
        for phi_deg in (0, 60, 120, 180):
            phi = math.radians(phi_deg)
            sol = solve(narrow, "arm",
                        [IkObjective.position((math.cos(phi), math.sin(phi), 0.0))],
                        [0.0, 0.0], cold)
            env_ok = env_ok and abs(sol.tip_error - 0.66) < 5e-3 and not sol.converged
        a = solve(model, "arm", [IkObjective.position((0.2, 0.1, 0.0))], [0.0, 0.0], cold)
        b = solve(model, "arm", [IkObjective.position((0.2, 0.1, 0.0))], [0.0, 0.0], cold)
        deterministic = bool(np.array_equal(a.angles, b.angles)) and a.fitness == b.fitness
        ok = worst_tip < 1e-3 and worst_joint < 1e-2 and env_ok and deterministic
        report(
            "ik correctness",
            ok,
            f"(worst tip {worst_tip:.2e} m, worst joint {worst_joint:.2e} rad, "
            f"envelope ok={env_ok}, deterministic={deterministic})",
        )


class TestBusProtocol:
    def test_roundtrip_crc_and_torque_semantics(self, model):
        rng = np.random.default_rng(7)
        ok_roundtrip = True
        for _ in range(10_000):
            frame = BusFrame(
                id=int(rng.integers(1, 0xFE + 1)),
                opcode=int(rng.choice([OP_PING, OP_READ_POS, OP_WRITE_GOAL, OP_TORQUE,
                                       OP_SYNC_WRITE, OP_REPLY])),
                payload=bytes(rng.integers(0, 256, size=int(rng.integers(0, 16))).tolist()),
            )
            decoded, rest = decode_frame(encode_frame(frame))
            ok_roundtrip = ok_roundtrip and decoded == frame and rest == b""

        fixed_frames = [
            BusFrame(3, OP_PING),
            BusFrame(7, OP_WRITE_GOAL, b"\x10\xfe"),
            BusFrame(0xFE, OP_SYNC_WRITE, b"\x01\xd2\x04\x02\x2e\xfb"),
            BusFrame(12, OP_REPLY, b"\x00\x80"),
        ]
        flips_detected = 0
        flips_total = 0
        for frame in fixed_frames:
            raw = encode_frame(frame)
            for byte_index in range(1, len(raw) - 2):
                for bit in range(8):
                    corrupted = bytearray(raw)
                    corrupted[byte_index] ^= 1 << bit
                    flips_total += 1
                    try:
                        decode_frame(bytes(corrupted))
                    except BusDecodeError:
                        flips_detected += 1

        # torque-off teaching semantics end to end through transact
        bus = SimBus.from_model(model)
        busmod.set_torque(bus, False)
        bus.impose_position(1, 0.6)
        moved = busmod.read_position(bus, 1)
        busmod.write_goal(bus, 1, -0.5)
        bus.advance(1.0)
        held = busmod.read_position(bus, 1)  # torque off: goal has no effect
        busmod.set_torque(bus, True)
        for _ in range(200):
            bus.advance(0.02)
        chased = busmod.read_position(bus, 1)
        torque_ok = (
            abs(moved - 0.6) <= 0.5e-3 and held == moved and abs(chased + 0.5) <= 1.5e-3
        )
        ok = ok_roundtrip and flips_detected == flips_total and torque_ok
        report(
            "bus protocol",
            ok,
            f"(10k round-trips ok={ok_roundtrip}, {flips_detected}/{flips_total} flips "
            f"detected, torque semantics ok={torque_ok})",
        )


class TestPipelineDeterminism:
    def test_byte_identical_outputs(self, tmp_path):
        import json

        from puppetbench.cli import main

        def run(tag):
            outdir = tmp_path / tag
            outdir.mkdir()
            acts = []
            for action in corpus.ACTIONS[:3]:
                script = outdir / f"{action['name']}.puppet.json"
                script.write_text(json.dumps(corpus.puppet_script_doc(action)))
                raw = outdir / f"{action['name']}.raw.json"
                assert main(["record", "--puppet", str(script), "--duration", "1.0",
                             "--name", action["name"], "--out", str(raw)]) == 0
                ann = outdir / f"{action['name']}.act.json"
                cmd = ["annotate", "--action", str(raw), "--out", str(ann)]
                for t, name in action["facial"]:
                    if t < 1.0:
                        cmd += ["--event", f"{t}:facial:{name}"]
                for t, name in action["audio"]:
                    if t < 1.0:
                        cmd += ["--event", f"{t}:audio:{name}"]
                assert main(cmd) == 0
                acts.append(str(ann))
            ds = outdir / "ds.json"
            assert main(["normalize", "--actions", *acts, "--out", str(ds)]) == 0
            ckpt = outdir / "net.ckpt"
            assert main(["--seed", "0", "train", "--dataset", str(ds), "--out", str(ckpt),
                         "--epochs", "800", "--learning-rate", "0.002",
                         "--optimizer", "adam", "--clip-norm", "1.0",
                         "--n-cf", "20", "--n-cs", "6"]) == 0
            gen = outdir / "gen.act.json"
            assert main(["generate", "--net", str(ckpt), "--sequence", "0",
                         "--out", str(gen)]) == 0
            return (ds.read_bytes(), ckpt.read_bytes(), gen.read_bytes())

        first = run("a")
        second = run("b")
        ok = first == second
        report("pipeline determinism", ok,
               "(record/normalize/train/generate byte-identical across reruns)")
