/**
 * Training and generation panel: launch training, watch the loss sparkline
 * via train_status polls, generate per sequence, play back on the stick
 * figure with event flashes, and show the Cs PCA scatter.
 */
import type { ActionDoc, MessageClient, TrainStatus } from "../protocol.js";
import type { PcaView, SessionStore } from "../session.js";
import type { JointPanel } from "./joints.js";

const SCATTER_COLORS = [
  "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#b0b000",
  "#a65628", "#f781bf", "#1b9e77", "#7570b3", "#66a61e",
];

export class TrainingPanel {
  private sparkline: HTMLCanvasElement;
  private scatter: HTMLCanvasElement;
  private statusLine: HTMLDivElement;
  private flash: HTMLDivElement;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private playbackTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private client: MessageClient,
    private store: SessionStore,
    private joints: JointPanel,
  ) {
    this.statusLine = document.createElement("div");
    this.sparkline = document.createElement("canvas");
    this.sparkline.width = 300;
    this.sparkline.height = 60;
    this.scatter = document.createElement("canvas");
    this.scatter.width = 300;
    this.scatter.height = 300;
    this.flash = document.createElement("div");
    this.flash.className = "event-flash";
    root.append(this.statusLine, this.sparkline, this.scatter, this.flash);
    store.subscribe((state) => {
      this.renderStatus(state.training);
      if (state.pca) this.renderScatter(state.pca);
    });
  }

  async startTraining(options: object = {}): Promise<void> {
    try {
      await this.client.request("start_train", options);
    } catch (err) {
      this.store.setBanner(String((err as Error).message));
      return;
    }
    this.pollTimer = setInterval(async () => {
      const status = await this.client.request<TrainStatus>("train_status");
      this.store.setTraining(status);
      if (status.done || status.error) {
        if (this.pollTimer) clearInterval(this.pollTimer);
        this.pollTimer = null;
        if (status.error) this.store.setBanner(`training failed: ${status.error}`);
        else await this.refreshAnalysis();
      }
    }, 500);
  }

  async refreshAnalysis(): Promise<void> {
    const a = await this.client.request<{
      names: string[];
      projections: number[][][];
      explained_variance: number[];
      separation: number;
    }>("get_analysis", { components: 2 });
    const pca: PcaView = {
      names: a.names,
      projections: a.projections,
      explainedVariance: a.explained_variance,
      separation: a.separation,
    };
    this.store.setPca(pca);
  }

  async generateAndPlay(sequence: string): Promise<void> {
    const gen = await this.client.request<{ name: string; cs: number[][] }>("generate", {
      sequence,
    });
    this.store.setCsTrajectory(gen.cs);
    const reply = await this.client.request<{ action: ActionDoc }>("get_action", {
      name: gen.name,
    });
    await this.playback(reply.action);
  }

  /** Drive the robot through the service frame by frame; flash events. */
  playback(action: ActionDoc): Promise<void> {
    this.stopPlayback();
    const facial = new Map(action.facial_events);
    const audio = new Map(action.audio_events);
    return new Promise((resolve) => {
      let t = 0;
      this.playbackTimer = setInterval(async () => {
        if (t >= action.frames.length) {
          this.stopPlayback();
          resolve();
          return;
        }
        const goals: Record<string, number> = {};
        action.frames[t].forEach((v, i) => (goals[String(i + 1)] = v));
        this.client.request("set_goals", { goals }).catch(() => undefined);
        this.joints.setPose(action.frames[t]);
        if (facial.has(t)) this.flashEvent("facial", facial.get(t)!);
        if (audio.has(t)) this.flashEvent("audio", audio.get(t)!);
        t += 1;
      }, 1000 / action.rate_hz);
    });
  }

  private stopPlayback(): void {
    if (this.playbackTimer) clearInterval(this.playbackTimer);
    this.playbackTimer = null;
  }

  private flashEvent(kind: string, command: number): void {
    this.flash.textContent = `${kind} #${command}`;
    this.flash.classList.add("active");
    setTimeout(() => this.flash.classList.remove("active"), 400);
  }

  private renderStatus(status: TrainStatus | null): void {
    if (!status) {
      this.statusLine.textContent = "no training yet";
      return;
    }
    const loss = status.loss == null ? "-" : status.loss.toExponential(2);
    this.statusLine.textContent =
      `epoch ${status.epoch}/${status.total_epochs} loss ${loss}` +
      (status.done ? " (done)" : status.error ? ` (failed: ${status.error})` : "");
    this.renderSparkline(status.curve);
  }

  private renderSparkline(curve: [number, number][]): void {
    const ctx = this.sparkline.getContext("2d");
    if (!ctx || curve.length < 2) return;
    const { width, height } = this.sparkline;
    ctx.clearRect(0, 0, width, height);
    const logs = curve.map(([, l]) => Math.log10(Math.max(l, 1e-12)));
    const lo = Math.min(...logs);
    const hi = Math.max(...logs);
    ctx.strokeStyle = "#37b";
    ctx.beginPath();
    logs.forEach((v, i) => {
      const x = (i / (logs.length - 1)) * width;
      const y = height - ((v - lo) / Math.max(hi - lo, 1e-9)) * height;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  private renderScatter(pca: PcaView): void {
    const ctx = this.scatter.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.scatter;
    ctx.clearRect(0, 0, width, height);
    const all = pca.projections.flat();
    if (!all.length) return;
    const xs = all.map((p) => p[0]);
    const ys = all.map((p) => p[1]);
    const sx = (x: number) =>
      ((x - Math.min(...xs)) / Math.max(Math.max(...xs) - Math.min(...xs), 1e-9)) * (width - 10) + 5;
    const sy = (y: number) =>
      height - (((y - Math.min(...ys)) / Math.max(Math.max(...ys) - Math.min(...ys), 1e-9)) * (height - 10) + 5);
    pca.projections.forEach((track, s) => {
      ctx.fillStyle = SCATTER_COLORS[s % SCATTER_COLORS.length];
      for (const p of track) {
        ctx.beginPath();
        ctx.arc(sx(p[0]), sy(p[1]), 2, 0, Math.PI * 2);
        ctx.fill();
      }
    });
  }
}
