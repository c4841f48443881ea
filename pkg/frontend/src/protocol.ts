/**
 * Service protocol client.
 *
 * The workbench endpoint speaks line-delimited JSON over a persistent
 * bidirectional connection:
 *
 *   request  {"type": t,           "id": n, "payload": {...}}
 *   reply    {"type": t + "_reply", "id": n, "payload": {...}}
 *   error    {"type": "error",     "id": n, "payload": {"message": ...}}
 *
 * plus server-pushed "state_push" / "state_stream_end" stream messages.
 * The transport is abstract so browsers (WebSocket gateway) and tests
 * (raw TCP) share the same client.
 */

export interface LineTransport {
  send(line: string): void;
  onLine(cb: (line: string) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export interface ServiceMessage {
  type: string;
  id: number;
  payload: any;
}

export interface StatePayload {
  time: number;
  joint_names: string[];
  positions: number[];
  goals: number[];
  torque: boolean[];
  recording: boolean;
}

export interface ActionDoc {
  format_version: number;
  name: string;
  rate_hz: number;
  joint_names: string[];
  frames: number[][];
  facial_events: [number, number][];
  audio_events: [number, number][];
}

export interface TrainStatus {
  running: boolean;
  done: boolean;
  epoch: number;
  total_epochs: number;
  loss: number | null;
  error: string | null;
  curve: [number, number][];
}

export class ServiceError extends Error {}

interface Pending {
  resolve: (payload: any) => void;
  reject: (err: Error) => void;
}

export class MessageClient {
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private pushHandlers = new Set<(msg: ServiceMessage) => void>();
  private closed = false;

  constructor(private transport: LineTransport) {
    transport.onLine((line) => this.handleLine(line));
    transport.onClose(() => this.handleClose());
  }

  private handleLine(line: string): void {
    if (!line.trim()) return;
    let msg: ServiceMessage;
    try {
      msg = JSON.parse(line);
    } catch {
      return; // not ours to crash on; the server validates both ways
    }
    if (msg.type === "state_push" || msg.type === "state_stream_end") {
      for (const handler of this.pushHandlers) handler(msg);
      return;
    }
    const pending = this.pending.get(msg.id);
    if (!pending) return;
    this.pending.delete(msg.id);
    if (msg.type === "error") {
      pending.reject(new ServiceError(msg.payload?.message ?? "unknown error"));
    } else {
      pending.resolve(msg.payload);
    }
  }

  private handleClose(): void {
    this.closed = true;
    for (const [, p] of this.pending) p.reject(new ServiceError("connection closed"));
    this.pending.clear();
  }

  onPush(handler: (msg: ServiceMessage) => void): () => void {
    this.pushHandlers.add(handler);
    return () => this.pushHandlers.delete(handler);
  }

  request<T = any>(type: string, payload: object = {}): Promise<T> {
    if (this.closed) return Promise.reject(new ServiceError("connection closed"));
    const id = this.nextId++;
    const promise = new Promise<T>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.transport.send(JSON.stringify({ type, id, payload }));
    return promise;
  }

  getState(): Promise<StatePayload> {
    return this.request<StatePayload>("get_state");
  }

  close(): void {
    this.transport.close();
  }
}
