/**
 * Teaching console bootstrap: connect, subscribe to state pushes, wire the
 * three panels into the page.
 */
import { MessageClient, type ServiceMessage, type StatePayload } from "./protocol.js";
import { WebSocketTransport } from "./transport.js";
import { SessionStore } from "./session.js";
import { JointPanel } from "./panels/joints.js";
import { TimelinePanel } from "./panels/timeline.js";
import { TrainingPanel } from "./panels/training.js";

export async function boot(root: HTMLElement, url: string): Promise<void> {
  const store = new SessionStore();
  store.setConnection("connecting");
  const transport = new WebSocketTransport(url);
  await transport.ready();
  const client = new MessageClient(transport);
  store.setConnection("connected");
  transport.onClose(() => store.setConnection("disconnected"));

  const banner = document.createElement("div");
  banner.className = "banner";
  root.appendChild(banner);
  store.subscribe((state) => {
    banner.textContent = state.banner ?? "";
    banner.style.display = state.banner ? "block" : "none";
  });

  const jointsRoot = document.createElement("section");
  const timelineRoot = document.createElement("section");
  const trainingRoot = document.createElement("section");
  root.append(jointsRoot, timelineRoot, trainingRoot);

  const joints = new JointPanel(jointsRoot, client, store);
  const timeline = new TimelinePanel(timelineRoot, client, store);
  const training = new TrainingPanel(trainingRoot, client, store, joints);
  await timeline.loadVocabulary();

  client.onPush((msg: ServiceMessage) => {
    if (msg.type === "state_push") store.applyState(msg.payload as StatePayload);
  });
  await client.request("subscribe_state", { rate_hz: 20.0 });

  const controls = document.createElement("nav");
  const recordBtn = document.createElement("button");
  recordBtn.textContent = "record";
  recordBtn.addEventListener("click", async () => {
    const state = store.get();
    if (!state.recording) {
      await client.request("start_record", { name: `take${Date.now() % 100000}` });
      recordBtn.textContent = "stop";
    } else {
      const reply = await client.request<{ name: string }>("stop_record");
      recordBtn.textContent = "record";
      await timeline.selectAction(reply.name);
    }
  });
  const trainBtn = document.createElement("button");
  trainBtn.textContent = "train";
  trainBtn.addEventListener("click", () => training.startTraining({ epochs: 2000 }));
  controls.append(recordBtn, trainBtn);
  root.prepend(controls);
}
