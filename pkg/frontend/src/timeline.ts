/**
 * Timeline model: facial/audio event markers on a recorded action.
 *
 * Markers live on frame ticks; edits go through tag_event / delete_event so
 * the server stays authoritative and the view is rebuilt from its replies.
 */
import type { ActionDoc } from "./protocol.js";

export type MarkerKind = "facial" | "audio";

export interface Marker {
  kind: MarkerKind;
  frame: number;
  command: number;
}

export class Timeline {
  readonly rateHz: number;
  readonly frames: number;
  markers: Marker[] = [];

  constructor(rateHz: number, frames: number) {
    this.rateHz = rateHz;
    this.frames = frames;
  }

  static fromAction(action: ActionDoc): Timeline {
    const tl = new Timeline(action.rate_hz, action.frames.length);
    for (const [frame, command] of action.facial_events)
      tl.markers.push({ kind: "facial", frame, command });
    for (const [frame, command] of action.audio_events)
      tl.markers.push({ kind: "audio", frame, command });
    tl.sort();
    return tl;
  }

  get duration(): number {
    return this.frames / this.rateHz;
  }

  frameAt(timeS: number): number {
    if (timeS < 0 || timeS > this.duration) {
      throw new Error(`marker time ${timeS}s outside 0..${this.duration.toFixed(3)}s`);
    }
    return Math.min(Math.round(timeS * this.rateHz), this.frames - 1);
  }

  timeOf(frame: number): number {
    return frame / this.rateHz;
  }

  add(timeS: number, kind: MarkerKind, command: number): Marker {
    const marker = { kind, frame: this.frameAt(timeS), command };
    this.markers.push(marker);
    this.sort();
    return marker;
  }

  remove(kind: MarkerKind, frame: number): void {
    this.markers = this.markers.filter((m) => !(m.kind === kind && m.frame === frame));
  }

  ofKind(kind: MarkerKind): Marker[] {
    return this.markers.filter((m) => m.kind === kind);
  }

  private sort(): void {
    this.markers.sort((a, b) => a.frame - b.frame || a.kind.localeCompare(b.kind));
  }
}
