"""Message-based service endpoint tying the workbench together.

Persistent TCP connections carry line-delimited JSON messages:

    request  {"type": <str>, "id": <int>, "payload": {...}}
    reply    {"type": <str> + "_reply", "id": <int>, "payload": {...}}
    error    {"type": "error", "id": <int>, "payload": {"message": <str>}}

Every request gets exactly one reply; subscribe_state additionally streams
state_push messages until unsubscribe_state, terminated by state_stream_end.
One task owns the bus (the sim ticker); one training job runs at a time.
"""
from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bus as busmod
from .actions import (
    ActionSequence,
    ChannelLayout,
    Dataset,
    action_from_dict,
    action_to_dict,
    default_vocabulary,
    denormalize,
    normalize,
)
from .analysis import pca, separation_score, trajectory_rmse
from .bus import SimBus
from .mtrnn import (
    MtrnnConfig,
    MtrnnNetwork,
    TrainConfig,
    generate,
    rollout_states,
    save_network,
    train,
)
from .recording import LivePuppet, annotate
from .robot import RobotModel, default_model


@dataclass
class TrainJob:
    total_epochs: int
    epoch: int = 0
    loss: Optional[float] = None
    done: bool = False
    error: Optional[str] = None
    curve: list = field(default_factory=list)
    thread: Optional[threading.Thread] = None

    def status(self) -> dict:
        return {
            "running": self.thread is not None and self.thread.is_alive(),
            "epoch": self.epoch,
            "total_epochs": self.total_epochs,
            "loss": self.loss,
            "done": self.done,
            "error": self.error,
        }


class WorkbenchService:
    """Owns the simulated bus, the action store and the training job."""

    def __init__(self, model: Optional[RobotModel] = None, rate_hz: float = 50.0,
                 data_dir: Optional[str] = None, seed: int = 0):
        self.model = model or default_model()
        self.vocab = default_vocabulary()
        self.bus = SimBus.from_model(self.model)
        self.rate_hz = rate_hz
        self.seed = seed
        self.data_dir = Path(data_dir) if data_dir else None
        self.puppet = LivePuppet()
        self.actions: dict[str, ActionSequence] = {}
        self.net: Optional[MtrnnNetwork] = None
        self.dataset: Optional[Dataset] = None
        self.job: Optional[TrainJob] = None
        self.recording: Optional[dict] = None  # {"name", "rate_hz", "frames", "torque_before"}
        self._subs: dict[tuple, dict] = {}  # (writer id, sub id) -> {"task", "writer"}
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.data_dir.glob("*.act.json")):
                with open(path) as fh:
                    seq = action_from_dict(json.load(fh))
                self.actions[seq.name] = seq

    # ------ bus ownership: one ticker task drives simulation time ------

    async def run_ticker(self):
        loop = asyncio.get_running_loop()
        deadline = loop.time()
        while True:
            rate = self.recording["rate_hz"] if self.recording else self.rate_hz
            period = 1.0 / rate
            deadline += period
            await asyncio.sleep(max(0.0, deadline - loop.time()))
            self._tick(period)

    def _tick(self, period: float):
        if self.recording is not None:
            t = len(self.recording["frames"]) / self.recording["rate_hz"]
            for jid, angle in self.puppet.joint_positions(t).items():
                if jid in self.bus.servos:
                    self.bus.impose_position(jid, angle)
            frame = [busmod.read_position(self.bus, jid) for jid in self.bus.servos]
            self.recording["frames"].append(frame)
        self.bus.advance(period)

    # ------ persistence helpers ------

    def _store_action(self, seq: ActionSequence):
        self.actions[seq.name] = seq
        if self.data_dir:
            with open(self.data_dir / f"{seq.name}.act.json", "w") as fh:
                json.dump(action_to_dict(seq, self.model), fh)

    # ------ request handlers ------

    def handle(self, msg_type: str, payload: dict) -> dict:
        handler = getattr(self, f"_on_{msg_type}", None)
        if handler is None:
            raise ValueError(f"unknown message type {msg_type!r}")
        return handler(payload or {})

    def _on_get_state(self, payload):
        return {
            "time": self.bus.time,
            "joint_names": [j.name for j in self.model.joints],
            "positions": [self.bus.servos[j.id][1].position for j in self.model.joints],
            "goals": [self.bus.servos[j.id][1].goal for j in self.model.joints],
            "torque": [self.bus.servos[j.id][1].torque_enabled for j in self.model.joints],
            "recording": self.recording is not None,
        }

    def _on_set_goals(self, payload):
        goals = {int(jid): float(v) for jid, v in payload["goals"].items()}
        unknown = [jid for jid in goals if jid not in self.bus.servos]
        if unknown:
            raise ValueError(f"unknown joint ids {unknown}")
        busmod.sync_write(self.bus, goals)
        return {"written": len(goals)}

    def _on_set_torque(self, payload):
        enabled = bool(payload["enabled"])
        ids = payload.get("ids")
        if ids is None:
            busmod.set_torque(self.bus, enabled)
        else:
            for jid in ids:
                busmod.set_torque(self.bus, enabled, int(jid))
        return {"enabled": enabled}

    def _on_puppet_frame(self, payload):
        positions = {int(jid): float(v) for jid, v in payload["positions"].items()}
        self.puppet.push(positions)
        return {}

    def _on_start_record(self, payload):
        if self.recording is not None:
            raise ValueError("a recording is already active")
        name = payload.get("name", f"take{len(self.actions)}")
        rate = float(payload.get("rate_hz", self.rate_hz))
        torque_before = {jid: s.torque_enabled for jid, (_, s) in self.bus.servos.items()}
        busmod.set_torque(self.bus, False)
        self.recording = {
            "name": name,
            "rate_hz": rate,
            "frames": [],
            "torque_before": torque_before,
        }
        return {"name": name, "rate_hz": rate}

    def _on_stop_record(self, payload):
        if self.recording is None:
            raise ValueError("no active recording")
        rec, self.recording = self.recording, None
        busmod.sync_write(self.bus, {jid: s.position for jid, (_, s) in self.bus.servos.items()})
        if all(rec["torque_before"].values()):
            busmod.set_torque(self.bus, True)
        else:
            for jid, enabled in rec["torque_before"].items():
                busmod.set_torque(self.bus, enabled, jid)
        if len(rec["frames"]) < 2:
            raise ValueError("recording too short (need at least 2 frames)")
        seq = ActionSequence(rec["name"], rec["rate_hz"], np.array(rec["frames"]))
        self._store_action(seq)
        return {"name": seq.name, "frames": len(seq), "rate_hz": seq.rate_hz}

    def _on_tag_event(self, payload):
        name = payload["action"]
        if name not in self.actions:
            raise ValueError(f"unknown action {name!r}")
        seq = annotate(
            self.actions[name],
            [(float(payload["time_s"]), payload["kind"], payload["command"])],
            self.vocab,
        )
        self._store_action(seq)
        return {"facial_events": [list(e) for e in seq.facial_events],
                "audio_events": [list(e) for e in seq.audio_events]}

    def _on_delete_event(self, payload):
        name = payload["action"]
        if name not in self.actions:
            raise ValueError(f"unknown action {name!r}")
        seq = self.actions[name]
        kind, frame = payload["kind"], int(payload["frame"])
        events = list(seq.facial_events if kind == "facial" else seq.audio_events)
        events = [e for e in events if e[0] != frame]
        seq = ActionSequence(
            seq.name, seq.rate_hz, seq.frames,
            facial_events=events if kind == "facial" else seq.facial_events,
            audio_events=events if kind == "audio" else seq.audio_events,
        )
        self._store_action(seq)
        return {"facial_events": [list(e) for e in seq.facial_events],
                "audio_events": [list(e) for e in seq.audio_events]}

    def _on_list_actions(self, payload):
        return {
            "actions": [
                {"name": s.name, "frames": len(s), "rate_hz": s.rate_hz, "duration": s.duration}
                for s in self.actions.values()
            ],
            "vocabulary": {"facial": list(self.vocab.facial), "audio": list(self.vocab.audio)},
        }

    def _on_get_action(self, payload):
        name = payload["name"]
        if name not in self.actions:
            raise ValueError(f"unknown action {name!r}")
        return {"action": action_to_dict(self.actions[name], self.model)}

    def _on_start_train(self, payload):
        if self.job is not None and self.job.thread and self.job.thread.is_alive():
            raise ValueError("a training job is already running")
        names = payload.get("actions") or list(self.actions.keys())
        missing = [n for n in names if n not in self.actions]
        if missing:
            raise ValueError(f"unknown actions {missing}")
        if not names:
            raise ValueError("no recorded actions to train on")
        sequences = [normalize(self.actions[n], self.model, self.vocab) for n in names]
        dataset = Dataset(self.vocab, sequences, self.model.name)
        cfg = TrainConfig(
            epochs=int(payload.get("epochs", 2000)),
            learning_rate=float(payload.get("learning_rate", 0.005)),
            momentum=float(payload.get("momentum", 0.9)),
            clip_norm=float(payload.get("clip_norm", 5.0)),
            seed=int(payload.get("seed", self.seed)),
            report_interval=int(payload.get("report_interval", 50)),
            optimizer=payload.get("optimizer", "adam"),
        )
        net = MtrnnNetwork.initialize(
            MtrnnConfig(
                n_io=dataset.dim,
                n_cf=int(payload.get("n_cf", 60)),
                n_cs=int(payload.get("n_cs", 20)),
            ),
            seed=cfg.seed,
        )
        job = TrainJob(total_epochs=cfg.epochs)

        def progress(epoch, loss):
            job.epoch = epoch
            job.loss = loss
            job.curve.append([epoch, loss])

        def run():
            try:
                train(net, dataset, cfg, progress=progress)
                self.net = net
                self.dataset = dataset
                if self.data_dir:
                    save_network(net, self.data_dir / "net.ckpt.json")
                job.done = True
            except Exception as exc:  # surfaced through train_status
                job.error = str(exc)

        job.thread = threading.Thread(target=run, daemon=True)
        job.thread.start()
        self.job = job
        return {"epochs": cfg.epochs, "sequences": names}

    def _on_train_status(self, payload):
        if self.job is None:
            return {"running": False, "done": False, "epoch": 0, "loss": None,
                    "total_epochs": 0, "error": None, "curve": []}
        status = self.job.status()
        status["curve"] = self.job.curve[-int(payload.get("tail", 50)):]
        return status

    def _require_net(self) -> MtrnnNetwork:
        if self.net is None:
            raise ValueError("no trained network available")
        return self.net

    def _on_generate(self, payload):
        net = self._require_net()
        key = payload["sequence"]
        meta = {rec["name"]: rec for rec in net.meta.get("sequences", [])}
        if isinstance(key, int):
            names = net.sequence_names()
            if not 0 <= key < len(names):
                raise ValueError(f"sequence index {key} out of range")
            key = names[key]
        if key not in meta:
            raise ValueError(f"unknown sequence {key!r}")
        rec = meta[key]
        steps = int(payload.get("steps", rec["length"] - 1))
        x0 = np.array(rec["initial_posture"])
        nseq = generate(net, key, x0, steps=steps, rate_hz=rec.get("rate_hz"))
        vectors = np.vstack([x0[None, :], np.clip(nseq.vectors, -1.0, 1.0)])
        full = type(nseq)(name=nseq.name, vectors=vectors, rate_hz=nseq.rate_hz)
        action = denormalize(full, self.model, self.vocab)
        self._store_action(action)
        state_mat = rollout_states(net, key, full)
        return {
            "name": action.name,
            "frames": len(action),
            "rate_hz": action.rate_hz,
            "cs": state_mat.tolist(),
        }

    def _on_get_analysis(self, payload):
        net = self._require_net()
        if self.dataset is None:
            raise ValueError("no training dataset cached")
        k = int(payload.get("components", 2))
        mats = [rollout_states(net, s.name, s) for s in self.dataset.sequences]
        result = pca(mats, k)
        layout = ChannelLayout.of(self.model, self.vocab)
        rmse_rows = []
        for s in self.dataset.sequences:
            gen = generate(net, s.name, s.vectors[0], steps=len(s) - 1, rate_hz=s.rate_hz)
            full = np.vstack([s.vectors[:1], gen.vectors])
            rep = trajectory_rmse(type(s)(s.name, full, rate_hz=s.rate_hz), s, layout)
            rmse_rows.append({"name": s.name, **rep})
        return {
            "names": [s.name for s in self.dataset.sequences],
            "projections": [p.tolist() for p in result.projections],
            "explained_variance": result.explained_variance.tolist(),
            "separation": separation_score(result.projections),
            "rmse": rmse_rows,
        }


async def _send(writer: asyncio.StreamWriter, doc: dict):
    writer.write((json.dumps(doc) + "\n").encode())
    await writer.drain()


async def _push_loop(service, writer, sub_id, rate_hz):
    loop = asyncio.get_running_loop()
    deadline = loop.time()
    period = 1.0 / rate_hz
    try:
        while True:
            deadline += period
            await asyncio.sleep(max(0.0, deadline - loop.time()))
            state = service._on_get_state({})
            await _send(writer, {"type": "state_push", "id": sub_id, "payload": state})
    except asyncio.CancelledError:
        raise
    except (ConnectionError, RuntimeError):
        pass


async def handle_connection(service: WorkbenchService, reader, writer):
    subs: dict[int, asyncio.Task] = {}
    try:
        while True:
            line = await reader.readline()
            if not line:
                break
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                await _send(writer, {"type": "error", "id": 0,
                                     "payload": {"message": f"malformed message: {exc}"}})
                continue
            mid = msg.get("id", 0)
            mtype = msg.get("type")
            payload = msg.get("payload") or {}
            try:
                if mtype == "subscribe_state":
                    rate = float(payload.get("rate_hz", 10.0))
                    if rate <= 0:
                        raise ValueError("rate_hz must be > 0")
                    subs[mid] = asyncio.create_task(_push_loop(service, writer, mid, rate))
                    reply = {"rate_hz": rate, "subscription": mid}
                elif mtype == "unsubscribe_state":
                    sid = int(payload.get("subscription", 0))
                    task = subs.pop(sid, None)
                    if task is None:
                        raise ValueError(f"no subscription {sid}")
                    task.cancel()
                    await _send(writer, {"type": "state_stream_end", "id": sid, "payload": {}})
                    reply = {"subscription": sid}
                elif not isinstance(mtype, str):
                    raise ValueError("message needs a string type")
                else:
                    reply = service.handle(mtype, payload)
                await _send(writer, {"type": f"{mtype}_reply", "id": mid, "payload": reply})
            except Exception as exc:
                await _send(writer, {"type": "error", "id": mid,
                                     "payload": {"message": str(exc)}})
    except ConnectionError:
        pass
    finally:
        for task in subs.values():
            task.cancel()
        writer.close()


async def start_endpoint(service: WorkbenchService, host: str = "127.0.0.1", port: int = 0):
    """Bind the endpoint and start the sim ticker; returns (server, ticker, port)."""
    server = await asyncio.start_server(
        lambda r, w: handle_connection(service, r, w), host, port
    )
    ticker = asyncio.create_task(service.run_ticker())
    actual_port = server.sockets[0].getsockname()[1]
    return server, ticker, actual_port


async def serve(service: WorkbenchService, host: str = "127.0.0.1", port: int = 8765):
    """Run the endpoint plus the sim ticker until cancelled."""
    server, ticker, actual_port = await start_endpoint(service, host, port)
    print(f"listening on {host}:{actual_port}", flush=True)
    try:
        async with server:
            await server.serve_forever()
    finally:
        ticker.cancel()
