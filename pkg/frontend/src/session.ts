/**
 * UI session state: a plain observable store rebuilt entirely from service
 * replies and pushes, so a page refresh loses nothing.
 */
import type { StatePayload, TrainStatus } from "./protocol.js";
import { Timeline } from "./timeline.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export interface PcaView {
  names: string[];
  projections: number[][][]; // per sequence, T x k
  explainedVariance: number[];
  separation: number;
}

export interface SessionState {
  connection: ConnectionStatus;
  jointNames: string[];
  positions: number[];
  torque: boolean[];
  recording: boolean;
  selectedAction: string | null;
  timeline: Timeline | null;
  training: TrainStatus | null;
  pca: PcaView | null;
  csTrajectory: number[][] | null;
  banner: string | null;
}

type Listener = (state: SessionState) => void;

export class SessionStore {
  private state: SessionState = {
    connection: "disconnected",
    jointNames: [],
    positions: [],
    torque: [],
    recording: false,
    selectedAction: null,
    timeline: null,
    training: null,
    pca: null,
    csTrajectory: null,
    banner: null,
  };
  private listeners = new Set<Listener>();

  get(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    listener(this.state);
    return () => this.listeners.delete(listener);
  }

  private commit(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const l of this.listeners) l(this.state);
  }

  setConnection(connection: ConnectionStatus): void {
    const patch: Partial<SessionState> = { connection };
    if (connection !== "connected") {
      // a disconnect pauses recording client-side and surfaces a banner
      patch.banner = connection === "disconnected" ? "connection lost" : null;
      patch.recording = false;
    } else {
      patch.banner = null;
    }
    this.commit(patch);
  }

  applyState(payload: StatePayload): void {
    this.commit({
      jointNames: payload.joint_names,
      positions: payload.positions,
      torque: payload.torque,
      recording: payload.recording,
    });
  }

  setRecording(recording: boolean): void {
    this.commit({ recording });
  }

  /** timeline edits are disabled while a recording is active */
  canEditTimeline(): boolean {
    return !this.state.recording && this.state.timeline !== null;
  }

  selectAction(name: string | null, timeline: Timeline | null): void {
    this.commit({ selectedAction: name, timeline });
  }

  setTraining(status: TrainStatus | null): void {
    this.commit({ training: status });
  }

  setPca(pca: PcaView | null): void {
    this.commit({ pca });
  }

  setCsTrajectory(cs: number[][] | null): void {
    this.commit({ csTrajectory: cs });
  }

  setBanner(banner: string | null): void {
    this.commit({ banner });
  }
}
