/**
 * End-to-end teaching round-trip against a live workbench server: records a
 * 2 s single-joint ramp through puppet_frame messages, checks the stored
 * sequence against the emitted frames within wire quantization, and verifies
 * timeline markers survive a full server restart from the data directory.
 */
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { MessageClient, type ActionDoc } from "../src/protocol.js";
import { TcpTransport } from "./tcp.js";

const QUANT = 0.5e-3; // signed 16-bit millirad wire format

interface Server {
  proc: ChildProcess;
  port: number;
}

function startServer(dataDir: string): Promise<Server> {
  return new Promise((resolve, reject) => {
    const proc = spawn("python3", [
      "-m", "puppetbench.cli", "serve", "--port", "0", "--data-dir", dataDir,
    ]);
    let out = "";
    const onData = (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/listening on [\d.]+:(\d+)/);
      if (m) {
        proc.stdout?.off("data", onData);
        resolve({ proc, port: Number(m[1]) });
      }
    };
    proc.stdout?.on("data", onData);
    proc.on("error", reject);
    proc.on("exit", (code) => reject(new Error(`server exited early (${code}): ${out}`)));
    setTimeout(() => reject(new Error(`server startup timeout: ${out}`)), 15000);
  });
}

function stopServer(server: Server): Promise<void> {
  return new Promise((resolve) => {
    server.proc.removeAllListeners("exit");
    server.proc.on("exit", () => resolve());
    server.proc.kill("SIGTERM");
    setTimeout(() => {
      server.proc.kill("SIGKILL");
      resolve();
    }, 3000);
  });
}

async function connect(port: number): Promise<MessageClient> {
  return new MessageClient(await TcpTransport.connect(port));
}

const sleepUntil = (deadline: number) =>
  new Promise((r) => setTimeout(r, Math.max(0, deadline - Date.now())));

describe("teaching round-trip against the live server", () => {
  let dataDir: string;
  let server: Server;

  beforeAll(async () => {
    dataDir = mkdtempSync(join(tmpdir(), "teachui-"));
    server = await startServer(dataDir);
  }, 30000);

  afterAll(async () => {
    if (server) await stopServer(server);
    rmSync(dataDir, { recursive: true, force: true });
  });

  it("records a 2 s single-joint ramp within quantization", async () => {
    const client = await connect(server.port);
    const emitted: number[] = [];
    await client.request("start_record", { name: "ramp", rate_hz: 50 });
    const t0 = Date.now();
    for (let i = 0; i < 100; i++) {
      await sleepUntil(t0 + i * 20);
      const value = i * 0.008; // 0.8 rad over 2 s on joint 1
      emitted.push(value);
      await client.request("puppet_frame", { positions: { "1": value } });
    }
    await sleepUntil(t0 + 100 * 20);
    const stopped = await client.request<{ name: string; frames: number }>("stop_record");
    expect(stopped.name).toBe("ramp");
    expect(stopped.frames).toBeGreaterThanOrEqual(80);
    expect(stopped.frames).toBeLessThanOrEqual(120);

    const reply = await client.request<{ action: ActionDoc }>("get_action", { name: "ramp" });
    const trace = reply.action.frames.map((f) => f[0]);
    // every stored sample is one of the emitted values up to wire quantization
    for (const value of trace) {
      const nearest = Math.min(...emitted.map((e) => Math.abs(e - value)));
      expect(nearest).toBeLessThanOrEqual(QUANT + 1e-12);
    }
    // and the ramp shape survives: monotone, spanning most of the range
    for (let i = 1; i < trace.length; i++) {
      expect(trace[i] + 1e-12).toBeGreaterThanOrEqual(trace[i - 1]);
    }
    expect(Math.max(...trace) - Math.min(...trace)).toBeGreaterThan(0.5);
    // untouched joints stayed at zero
    expect(reply.action.frames.every((f) => Math.abs(f[4]) <= QUANT)).toBe(true);
    client.close();
  }, 30000);

  it("timeline markers survive save and a server restart", async () => {
    let client = await connect(server.port);
    const tagged = await client.request<{ facial_events: [number, number][] }>("tag_event", {
      action: "ramp",
      time_s: 1.0,
      kind: "facial",
      command: "smile",
    });
    expect(tagged.facial_events).toContainEqual([50, 1]);
    await client.request("tag_event", {
      action: "ramp",
      time_s: 0.5,
      kind: "audio",
      command: "greet",
    });
    // reload within the same server
    let doc = (await client.request<{ action: ActionDoc }>("get_action", { name: "ramp" })).action;
    expect(doc.facial_events).toContainEqual([50, 1]);
    expect(doc.audio_events).toContainEqual([25, 1]);
    client.close();

    // full restart from the data directory
    await stopServer(server);
    server = await startServer(dataDir);
    client = await connect(server.port);
    doc = (await client.request<{ action: ActionDoc }>("get_action", { name: "ramp" })).action;
    expect(doc.facial_events).toContainEqual([50, 1]);
    expect(doc.audio_events).toContainEqual([25, 1]);
    // deleting a marker persists too
    await client.request("delete_event", { action: "ramp", kind: "facial", frame: 50 });
    doc = (await client.request<{ action: ActionDoc }>("get_action", { name: "ramp" })).action;
    expect(doc.facial_events).not.toContainEqual([50, 1]);
    client.close();
  }, 60000);

  it("rejects markers beyond the action duration", async () => {
    const client = await connect(server.port);
    await expect(
      client.request("tag_event", {
        action: "ramp",
        time_s: 99.0,
        kind: "facial",
        command: "smile",
      }),
    ).rejects.toThrow(/outside/);
    client.close();
  }, 15000);
});
