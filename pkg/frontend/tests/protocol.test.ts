import { describe, expect, it } from "vitest";
import { MessageClient, ServiceError, type LineTransport } from "../src/protocol.js";

/** Loopback transport with a scriptable server side. */
class FakeTransport implements LineTransport {
  sent: string[] = [];
  private lineHandlers: ((line: string) => void)[] = [];
  private closeHandlers: (() => void)[] = [];

  send(line: string): void {
    this.sent.push(line);
  }
  onLine(cb: (line: string) => void): void {
    this.lineHandlers.push(cb);
  }
  onClose(cb: () => void): void {
    this.closeHandlers.push(cb);
  }
  close(): void {
    for (const cb of this.closeHandlers) cb();
  }
  receive(msg: object): void {
    for (const cb of this.lineHandlers) cb(JSON.stringify(msg));
  }
}

describe("MessageClient", () => {
  it("matches replies to requests by id", async () => {
    const transport = new FakeTransport();
    const client = new MessageClient(transport);
    const p1 = client.request("get_state");
    const p2 = client.request("list_actions");
    const [m1, m2] = transport.sent.map((l) => JSON.parse(l));
    expect(m1.id).not.toBe(m2.id);
    // answer out of order
    transport.receive({ type: "list_actions_reply", id: m2.id, payload: { actions: [] } });
    transport.receive({ type: "get_state_reply", id: m1.id, payload: { positions: [1] } });
    expect(await p2).toEqual({ actions: [] });
    expect(await p1).toEqual({ positions: [1] });
  });

  it("rejects on error replies", async () => {
    const transport = new FakeTransport();
    const client = new MessageClient(transport);
    const p = client.request("tag_event", { action: "nope" });
    const m = JSON.parse(transport.sent[0]);
    transport.receive({ type: "error", id: m.id, payload: { message: "unknown action" } });
    await expect(p).rejects.toThrow(ServiceError);
    await expect(
      (async () => {
        const q = client.request("tag_event");
        const n = JSON.parse(transport.sent[1]);
        transport.receive({ type: "error", id: n.id, payload: { message: "boom" } });
        return q;
      })(),
    ).rejects.toThrow("boom");
  });

  it("routes stream pushes to push handlers, not requests", async () => {
    const transport = new FakeTransport();
    const client = new MessageClient(transport);
    const pushes: string[] = [];
    client.onPush((m) => pushes.push(m.type));
    const p = client.request("subscribe_state", { rate_hz: 10 });
    const m = JSON.parse(transport.sent[0]);
    transport.receive({ type: "state_push", id: m.id, payload: { positions: [] } });
    transport.receive({ type: "subscribe_state_reply", id: m.id, payload: { subscription: m.id } });
    transport.receive({ type: "state_push", id: m.id, payload: { positions: [] } });
    transport.receive({ type: "state_stream_end", id: m.id, payload: {} });
    expect(await p).toEqual({ subscription: m.id });
    expect(pushes).toEqual(["state_push", "state_push", "state_stream_end"]);
  });

  it("rejects pending requests when the connection closes", async () => {
    const transport = new FakeTransport();
    const client = new MessageClient(transport);
    const p = client.request("get_state");
    transport.close();
    await expect(p).rejects.toThrow("connection closed");
    await expect(client.request("get_state")).rejects.toThrow("connection closed");
  });
});
