/** Message transport abstraction so the app logic is testable offline. */

import { WireMessage, parseMessage, encodeMessage, Kind } from "./protocol.js";

export interface Transport {
  send(kind: Kind, payload: object): void;
  onMessage(handler: (msg: WireMessage) => void): void;
  onStatus(handler: (connected: boolean) => void): void;
  close(): void;
}

/** Browser WebSocket transport with automatic reconnect; inputs produced
 * while disconnected are simply dropped by the caller's send attempts. */
export class WebSocketTransport implements Transport {
  private ws: WebSocket | null = null;
  private url: string;
  private seq = 0;
  private messageHandler: ((msg: WireMessage) => void) | null = null;
  private statusHandler: ((connected: boolean) => void) | null = null;
  private closed = false;
  private reconnectDelayMs: number;

  constructor(url: string, reconnectDelayMs = 1000) {
    this.url = url;
    this.reconnectDelayMs = reconnectDelayMs;
    this.connect();
  }

  private connect(): void {
    if (this.closed) return;
    this.ws = new WebSocket(this.url);
    this.ws.onopen = () => this.statusHandler?.(true);
    this.ws.onmessage = (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg) this.messageHandler?.(msg);
    };
    this.ws.onclose = () => {
      this.statusHandler?.(false);
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
  }

  send(kind: Kind, payload: object): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(encodeMessage(kind, this.seq++, payload));
    }
  }

  onMessage(handler: (msg: WireMessage) => void): void {
    this.messageHandler = handler;
  }

  onStatus(handler: (connected: boolean) => void): void {
    this.statusHandler = handler;
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
