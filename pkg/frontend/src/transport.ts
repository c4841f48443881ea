/**
 * Browser transport: WebSocket carrying one JSON message per ws frame,
 * bridged to the TCP endpoint by any line-to-frame gateway (e.g. websocat).
 */
import type { LineTransport } from "./protocol.js";

export class WebSocketTransport implements LineTransport {
  private ws: WebSocket;
  private lineHandlers: ((line: string) => void)[] = [];
  private closeHandlers: (() => void)[] = [];
  private buffer = "";

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (ev) => {
      // a gateway may batch lines into one frame; split defensively
      this.buffer += String(ev.data);
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        for (const cb of this.lineHandlers) cb(line);
      }
      if (this.buffer.trim().startsWith("{") && this.buffer.trim().endsWith("}")) {
        const line = this.buffer;
        this.buffer = "";
        for (const cb of this.lineHandlers) cb(line);
      }
    };
    this.ws.onclose = () => {
      for (const cb of this.closeHandlers) cb();
    };
  }

  ready(): Promise<void> {
    if (this.ws.readyState === WebSocket.OPEN) return Promise.resolve();
    return new Promise((resolve, reject) => {
      this.ws.addEventListener("open", () => resolve());
      this.ws.addEventListener("error", () => reject(new Error("websocket error")));
    });
  }

  send(line: string): void {
    this.ws.send(line + "\n");
  }

  onLine(cb: (line: string) => void): void {
    this.lineHandlers.push(cb);
  }

  onClose(cb: () => void): void {
    this.closeHandlers.push(cb);
  }

  close(): void {
    this.ws.close();
  }
}
