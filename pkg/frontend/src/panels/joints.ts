/**
 * Joint panel: one slider per joint plus the stick figure.
 *
 * Idle: sliders mirror state pushes.  Recording: slider values become the
 * puppet and are emitted as puppet_frame messages at the configured rate.
 */
import type { MessageClient } from "../protocol.js";
import type { SessionStore } from "../session.js";
import { JOINT_LIMITS, clampAngle, figurePolylines } from "../robotfigure.js";

export class JointPanel {
  private sliders: HTMLInputElement[] = [];
  private values: number[] = JOINT_LIMITS.map(() => 0);
  private emitTimer: ReturnType<typeof setInterval> | null = null;
  private canvas: HTMLCanvasElement;

  constructor(
    private root: HTMLElement,
    private client: MessageClient,
    private store: SessionStore,
    private rateHz = 50,
  ) {
    this.canvas = document.createElement("canvas");
    this.canvas.width = 320;
    this.canvas.height = 420;
    this.canvas.className = "figure";
    root.appendChild(this.canvas);
    const grid = document.createElement("div");
    grid.className = "sliders";
    JOINT_LIMITS.forEach((lim, i) => {
      const row = document.createElement("label");
      row.textContent = lim.name;
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(lim.min);
      slider.max = String(lim.max);
      slider.step = "0.001";
      slider.value = "0";
      slider.addEventListener("input", () => {
        this.values[i] = clampAngle(i, Number(slider.value));
        this.draw();
      });
      row.appendChild(slider);
      grid.appendChild(row);
      this.sliders.push(slider);
    });
    root.appendChild(grid);

    store.subscribe((state) => {
      if (!state.recording) {
        // mirror the live robot while idle
        state.positions.forEach((v, i) => {
          if (this.sliders[i] && document.activeElement !== this.sliders[i]) {
            this.sliders[i].value = String(v);
            this.values[i] = v;
          }
        });
        this.stopEmitting();
      } else {
        this.startEmitting();
      }
      this.draw();
    });
    this.draw();
  }

  private startEmitting(): void {
    if (this.emitTimer) return;
    this.emitTimer = setInterval(() => {
      const positions: Record<string, number> = {};
      this.values.forEach((v, i) => {
        positions[String(i + 1)] = v; // bus ids are 1-based
      });
      this.client.request("puppet_frame", { positions }).catch(() => undefined);
    }, 1000 / this.rateHz);
  }

  private stopEmitting(): void {
    if (this.emitTimer) {
      clearInterval(this.emitTimer);
      this.emitTimer = null;
    }
  }

  /** playback support: drive goals from an action frame */
  setPose(frame: number[]): void {
    frame.forEach((v, i) => {
      this.values[i] = v;
      if (this.sliders[i]) this.sliders[i].value = String(v);
    });
    this.draw();
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.strokeStyle = "#2a6";
    ctx.lineWidth = 3;
    ctx.lineCap = "round";
    const scale = 380;
    const cx = width / 2;
    const cy = height * 0.55;
    for (const line of figurePolylines(this.values)) {
      ctx.beginPath();
      line.forEach((p, i) => {
        const sx = cx + p.x * scale;
        const sy = cy - p.y * scale;
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.stroke();
    }
    ctx.beginPath(); // head
    const headTop = figurePolylines(this.values)[0].at(-1)!;
    ctx.arc(cx + headTop.x * scale, cy - headTop.y * scale - 12, 14, 0, Math.PI * 2);
    ctx.stroke();
  }
}
