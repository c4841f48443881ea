"""Command-line front end: the pipeline stages plus the service endpoint."""
from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np

from . import bus as busmod
from .actions import (
    CommandVocabulary,
    Dataset,
    NormalizedSequence,
    default_vocabulary,
    denormalize,
    load_action,
    load_dataset,
    normalize,
    save_action,
    save_dataset,
)
from .analysis import pca, separation_score, trajectory_rmse, write_pca_csv, write_rmse_csv, write_variance_csv
from .actions import ChannelLayout
from .bus import SimBus
from .ik import IkConfig, IkObjective, solve
from .mtrnn import (
    MtrnnConfig,
    MtrnnNetwork,
    TrainConfig,
    generate,
    load_network,
    rollout_states,
    save_loss_curve,
    save_network,
    train,
)
from .recording import RecordingConfig, kinesthetic_record, load_puppet_script, annotate
from .robot import default_model, load_model
from .service import WorkbenchService, serve


def _model_from_args(args):
    return load_model(args.model) if args.model else default_model()


def _vocab_from_args(args) -> CommandVocabulary:
    if getattr(args, "vocab", None):
        with open(args.vocab) as fh:
            doc = json.load(fh)
        return CommandVocabulary(facial=tuple(doc["facial"]), audio=tuple(doc["audio"]))
    return default_vocabulary()


def cmd_record(args):
    model = _model_from_args(args)
    bus = SimBus.from_model(model)
    puppet = load_puppet_script(args.puppet, model)
    cfg = RecordingConfig(rate_hz=args.rate_hz, duration=args.duration)
    seq = kinesthetic_record(bus, puppet, cfg, name=args.name)
    save_action(seq, model, args.out)
    print(f"recorded {len(seq)} frames at {seq.rate_hz} Hz -> {args.out}")


def cmd_annotate(args):
    model = _model_from_args(args)
    vocab = _vocab_from_args(args)
    seq = load_action(args.action)
    events = []
    for spec in args.event:
        time_s, kind, name = spec.split(":")
        events.append((float(time_s), kind, name))
    seq = annotate(seq, events, vocab)
    save_action(seq, model, args.out)
    print(f"annotated {args.action} with {len(events)} events -> {args.out}")


def cmd_normalize(args):
    model = _model_from_args(args)
    vocab = _vocab_from_args(args)
    sequences = [normalize(load_action(p), model, vocab) for p in args.actions]
    ds = Dataset(vocabulary=vocab, sequences=sequences, source_model=model.name)
    save_dataset(ds, args.out)
    print(f"dataset of {len(sequences)} sequences, D={ds.dim} -> {args.out}")


def cmd_train(args):
    ds = load_dataset(args.dataset)
    net = MtrnnNetwork.initialize(
        MtrnnConfig(n_io=ds.dim, n_cf=args.n_cf, n_cs=args.n_cs,
                    tau_io=args.tau_io, tau_cf=args.tau_cf, tau_cs=args.tau_cs),
        seed=args.seed,
    )
    cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        clip_norm=args.clip_norm,
        seed=args.seed,
        report_interval=args.report_interval,
        optimizer=args.optimizer,
    )
    net, curve = train(net, ds, cfg)
    net.meta["vocabulary"] = {"facial": list(ds.vocabulary.facial),
                              "audio": list(ds.vocabulary.audio)}
    save_network(net, args.out)
    curve_path = args.loss_curve or (str(args.out) + ".loss")
    save_loss_curve(curve, curve_path)
    print(f"trained {cfg.epochs} epochs, final loss {curve[-1][1]:.6g} -> {args.out}")


def _vocab_from_net(net) -> CommandVocabulary:
    doc = net.meta.get("vocabulary")
    if not doc:
        return default_vocabulary()
    return CommandVocabulary(facial=tuple(doc["facial"]), audio=tuple(doc["audio"]))


def _closed_loop_sequence(net, name: str, steps=None) -> NormalizedSequence:
    meta = {rec["name"]: rec for rec in net.meta.get("sequences", [])}
    if name not in meta:
        raise SystemExit(f"error: checkpoint has no sequence {name!r}")
    rec = meta[name]
    x0 = np.array(rec["initial_posture"])
    nseq = generate(net, name, x0, steps=steps or rec["length"] - 1, rate_hz=rec.get("rate_hz"))
    vectors = np.vstack([x0[None, :], np.clip(nseq.vectors, -1.0, 1.0)])
    return NormalizedSequence(name=name, vectors=vectors, rate_hz=nseq.rate_hz)


def cmd_generate(args):
    model = _model_from_args(args)
    net = load_network(args.net)
    names = net.sequence_names()
    name = names[int(args.sequence)] if args.sequence.isdigit() else args.sequence
    nseq = _closed_loop_sequence(net, name, args.steps)
    action = denormalize(nseq, model, _vocab_from_net(net))
    save_action(action, model, args.out)
    print(f"generated {len(action)} frames for {name!r} -> {args.out}")


def cmd_replay(args):
    model = _model_from_args(args)
    seq = load_action(args.action)
    bus = SimBus.from_model(model)
    ids = [j.id for j in model.joints]
    period = 1.0 / seq.rate_hz
    facial = dict(seq.facial_events)
    audio = dict(seq.audio_events)
    lines = []
    for t, frame in enumerate(seq.frames):
        busmod.sync_write(bus, dict(zip(ids, frame)))
        bus.advance(period)
        stamp = (t + 1) * period
        if t in facial:
            lines.append(json.dumps({"t": stamp, "event": "facial", "command": facial[t]}))
        if t in audio:
            lines.append(json.dumps({"t": stamp, "event": "audio", "command": audio[t]}))
        positions = [bus.servos[j][1].position for j in ids]
        lines.append(json.dumps({"t": stamp, "positions": positions}))
    out = "\n".join(lines) + "\n"
    if args.log:
        Path(args.log).write_text(out)
        print(f"replayed {len(seq)} frames -> {args.log}")
    else:
        sys.stdout.write(out)


def cmd_analyze(args):
    model = _model_from_args(args)
    net = load_network(args.net)
    ds = load_dataset(args.dataset)
    vocab = ds.vocabulary
    layout = ChannelLayout.of(model, vocab)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    mats = [rollout_states(net, s.name, s) for s in ds.sequences]
    result = pca(mats, args.components)
    names = [s.name for s in ds.sequences]
    write_pca_csv(result, names, outdir / "pca_projections.csv")
    write_variance_csv(result, outdir / "variance.csv")
    rows = []
    for s in ds.sequences:
        gen = _closed_loop_sequence(net, s.name, steps=len(s) - 1)
        rows.append((s.name, trajectory_rmse(gen, s, layout)))
    write_rmse_csv(rows, outdir / "rmse_report.csv")
    sep = separation_score(result.projections)
    print(f"separation score {sep:.4f}; reports in {outdir}")


def cmd_ik_solve(args):
    model = _model_from_args(args)
    objectives = [IkObjective.position(tuple(float(v) for v in args.target.split(",")))]
    if args.orientation:
        objectives.append(
            IkObjective.orientation(tuple(float(v) for v in args.orientation.split(",")),
                                    args.orientation_weight)
        )
    if args.displacement_weight > 0:
        objectives.append(IkObjective.displacement(args.displacement_weight))
    chain_len = len(model.chains[args.chain]) if args.chain in model.chains else 0
    seed_pose = (
        [float(v) for v in args.seed_pose.split(",")] if args.seed_pose else [0.0] * chain_len
    )
    cfg = IkConfig(
        population=args.population,
        generations=args.generations,
        mutation_sigma=args.mutation_sigma,
        seed=args.seed,
        tolerance=args.tolerance,
    )
    sol = solve(model, args.chain, objectives, seed_pose, cfg)
    print(json.dumps({
        "angles": sol.angles.tolist(),
        "fitness": sol.fitness,
        "tip_error": sol.tip_error,
        "converged": sol.converged,
    }))


def cmd_serve(args):
    service = WorkbenchService(
        model=_model_from_args(args),
        rate_hz=args.rate_hz,
        data_dir=args.data_dir,
        seed=args.seed,
    )
    print(f"serving on {args.host}:{args.port}")
    try:
        asyncio.run(serve(service, host=args.host, port=args.port))
    except KeyboardInterrupt:
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puppetbench",
                                     description="imitation-learning workbench")
    parser.add_argument("--model", help="robot model file (default: built-in)")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("record", help="record a scripted puppet demonstration")
    p.add_argument("--puppet", required=True)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--rate-hz", type=float, default=50.0)
    p.add_argument("--name", default="recording")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("annotate", help="add facial/audio events to an action")
    p.add_argument("--action", required=True)
    p.add_argument("--event", action="append", default=[],
                   help="time:kind:command, e.g. 1.0:facial:smile")
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("normalize", help="encode actions into a training dataset")
    p.add_argument("--actions", nargs="+", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train", help="train the policy on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-curve")
    p.add_argument("--epochs", type=int, default=20000)
    p.add_argument("--learning-rate", type=float, default=0.002)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--clip-norm", type=float, default=1.0)
    p.add_argument("--optimizer", choices=["momentum", "adam"], default="momentum")
    p.add_argument("--report-interval", type=int, default=100)
    p.add_argument("--n-cf", type=int, default=60)
    p.add_argument("--n-cs", type=int, default=20)
    p.add_argument("--tau-io", type=float, default=2.0)
    p.add_argument("--tau-cf", type=float, default=5.0)
    p.add_argument("--tau-cs", type=float, default=70.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="closed-loop generation from a checkpoint")
    p.add_argument("--net", required=True)
    p.add_argument("--sequence", required=True, help="trained sequence name or index")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("replay", help="drive the simulated bus with an action")
    p.add_argument("--action", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="PCA / separation / error reports")
    p.add_argument("--net", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--components", type=int, default=2)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ik-solve", help="debug solve for a chain target")
    p.add_argument("--chain", required=True)
    p.add_argument("--target", required=True, help="x,y,z in meters")
    p.add_argument("--orientation", help="w,x,y,z quaternion")
    p.add_argument("--orientation-weight", type=float, default=0.5)
    p.add_argument("--displacement-weight", type=float, default=0.0)
    p.add_argument("--seed-pose")
    p.add_argument("--population", type=int, default=64)
    p.add_argument("--generations", type=int, default=250)
    p.add_argument("--mutation-sigma", type=float, default=0.15)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.set_defaults(func=cmd_ik_solve)

    p = sub.add_parser("serve", help="run the service endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--rate-hz", type=float, default=50.0)
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
