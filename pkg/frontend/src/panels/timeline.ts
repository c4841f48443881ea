/**
 * Timeline editor panel: event markers over the selected action, edited
 * through tag_event / delete_event and rebuilt from the server's replies.
 */
import type { ActionDoc, MessageClient } from "../protocol.js";
import type { SessionStore } from "../session.js";
import { Timeline, type MarkerKind } from "../timeline.js";

export class TimelinePanel {
  private track: HTMLDivElement;
  private form: HTMLDivElement;
  private error: HTMLDivElement;
  private vocabulary: { facial: string[]; audio: string[] } = { facial: [], audio: [] };

  constructor(
    private root: HTMLElement,
    private client: MessageClient,
    private store: SessionStore,
  ) {
    this.track = document.createElement("div");
    this.track.className = "timeline-track";
    this.form = document.createElement("div");
    this.form.className = "timeline-form";
    this.error = document.createElement("div");
    this.error.className = "timeline-error";
    root.append(this.track, this.form, this.error);
    this.buildForm();
    store.subscribe(() => this.render());
  }

  async loadVocabulary(): Promise<void> {
    const listing = await this.client.request<{ vocabulary: { facial: string[]; audio: string[] } }>(
      "list_actions",
    );
    this.vocabulary = listing.vocabulary;
    this.buildForm();
  }

  async selectAction(name: string): Promise<void> {
    const reply = await this.client.request<{ action: ActionDoc }>("get_action", { name });
    this.store.selectAction(name, Timeline.fromAction(reply.action));
  }

  async addMarker(timeS: number, kind: MarkerKind, command: string): Promise<void> {
    const state = this.store.get();
    if (!this.store.canEditTimeline() || !state.selectedAction) {
      this.showError("timeline editing is disabled while recording");
      return;
    }
    try {
      state.timeline!.frameAt(timeS); // local validation for immediate feedback
      await this.client.request("tag_event", {
        action: state.selectedAction,
        time_s: timeS,
        kind,
        command,
      });
      await this.selectAction(state.selectedAction); // reload from the server
      this.showError(null);
    } catch (err) {
      this.showError(String((err as Error).message ?? err));
    }
  }

  async deleteMarker(kind: MarkerKind, frame: number): Promise<void> {
    const state = this.store.get();
    if (!this.store.canEditTimeline() || !state.selectedAction) return;
    await this.client.request("delete_event", {
      action: state.selectedAction,
      kind,
      frame,
    });
    await this.selectAction(state.selectedAction);
  }

  private showError(message: string | null): void {
    this.error.textContent = message ?? "";
  }

  private buildForm(): void {
    this.form.replaceChildren();
    const time = document.createElement("input");
    time.type = "number";
    time.step = "0.02";
    time.placeholder = "time (s)";
    const kind = document.createElement("select");
    for (const k of ["facial", "audio"]) {
      const option = document.createElement("option");
      option.value = option.textContent = k;
      kind.appendChild(option);
    }
    const command = document.createElement("select");
    const refreshCommands = () => {
      command.replaceChildren();
      const names = kind.value === "facial" ? this.vocabulary.facial : this.vocabulary.audio;
      for (const n of names) {
        const option = document.createElement("option");
        option.value = option.textContent = n;
        command.appendChild(option);
      }
    };
    kind.addEventListener("change", refreshCommands);
    refreshCommands();
    const add = document.createElement("button");
    add.textContent = "add marker";
    add.addEventListener("click", () =>
      this.addMarker(Number(time.value), kind.value as MarkerKind, command.value),
    );
    this.form.append(time, kind, command, add);
  }

  private render(): void {
    const state = this.store.get();
    this.track.replaceChildren();
    if (!state.timeline) return;
    const tl = state.timeline;
    for (const marker of tl.markers) {
      const el = document.createElement("span");
      el.className = `marker marker-${marker.kind}`;
      el.style.left = `${(100 * marker.frame) / tl.frames}%`;
      el.title = `${marker.kind} ${marker.command} @ ${tl.timeOf(marker.frame).toFixed(2)}s`;
      el.addEventListener("dblclick", () => this.deleteMarker(marker.kind, marker.frame));
      this.track.appendChild(el);
    }
  }
}
