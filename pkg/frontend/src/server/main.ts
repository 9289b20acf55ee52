/**
 * Console relay: bridges the controller's TCP line protocol to the
 * browser. Keeps one reconnecting socket to the operator bridge, fans
 * telemetry out to browser clients over server-sent events, and forwards
 * validated commands, returning the bridge's reply.
 *
 *   node dist/server/main.js --bridge 127.0.0.1:4777 --port 8780
 */

import { EventEmitter } from "node:events";
import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import {
  CommandRequest,
  TelemetryRecord,
  commandToLine,
  isCommandReply,
  parseTelemetryLine,
} from "../shared/protocol.js";
import { RingBuffer } from "../shared/ring.js";

const RECONNECT_MS = 500;
const COMMAND_TIMEOUT_MS = 3000;
const REPLAY_RECORDS = 600;

interface Pending {
  resolve: (reply: string) => void;
  timer: NodeJS.Timeout;
}

/** Reconnecting client for the operator bridge socket. */
export class BridgeLink extends EventEmitter {
  connected = false;
  readonly records: RingBuffer<TelemetryRecord>;
  private socket: net.Socket | null = null;
  private buffer = "";
  private pending: Pending[] = [];
  private stopped = false;

  constructor(readonly host: string, readonly port: number,
              ringCapacity = 1800) {
    super();
    this.records = new RingBuffer<TelemetryRecord>(ringCapacity);
  }

  start(): void {
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.socket?.destroy();
    for (const p of this.pending.splice(0)) {
      clearTimeout(p.timer);
      p.resolve("err bridge closed");
    }
  }

  private connect(): void {
    if (this.stopped) return;
    const socket = net.connect(this.port, this.host);
    this.socket = socket;
    socket.setEncoding("utf8");
    socket.on("connect", () => {
      this.connected = true;
      this.emit("status", true);
    });
    socket.on("data", (chunk: string) => this.onData(chunk));
    const drop = () => {
      if (this.socket !== socket) return;
      const wasConnected = this.connected;
      this.connected = false;
      this.socket = null;
      if (wasConnected) this.emit("status", false);
      if (!this.stopped) setTimeout(() => this.connect(), RECONNECT_MS);
    };
    socket.on("error", drop);
    socket.on("close", drop);
  }

  private onData(chunk: string): void {
    this.buffer += chunk;
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (!line) continue;
      const record = parseTelemetryLine(line);
      if (record) {
        this.records.push(record);
        this.emit("record", record, line);
      } else if (isCommandReply(line)) {
        const p = this.pending.shift();
        if (p) {
          clearTimeout(p.timer);
          p.resolve(line);
        }
      }
    }
  }

  /** Send one command line; resolves with the bridge's reply line.
   * Replies come back in send order on the shared stream. */
  sendCommand(line: string): Promise<string> {
    return new Promise((resolve) => {
      if (!this.connected || !this.socket) {
        resolve("err bridge offline");
        return;
      }
      const timer = setTimeout(() => {
        const i = this.pending.findIndex((p) => p.timer === timer);
        if (i >= 0) this.pending.splice(i, 1);
        resolve("err bridge timeout");
      }, COMMAND_TIMEOUT_MS);
      this.pending.push({ resolve, timer });
      this.socket.write(line + "\n");
    });
  }
}

const CONTENT_TYPES: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".json": "application/json",
  ".png": "image/png",
};

export interface ConsoleServer {
  server: http.Server;
  link: BridgeLink;
  port: number;
  close(): void;
}

function readBody(req: http.IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    let body = "";
    req.on("data", (c) => {
      body += c;
      if (body.length > 65536) reject(new Error("body too large"));
    });
    req.on("end", () => resolve(body));
    req.on("error", reject);
  });
}

export function startConsoleServer(opts: {
  bridgeHost: string;
  bridgePort: number;
  httpPort: number;
  staticDir: string;
}): Promise<ConsoleServer> {
  const link = new BridgeLink(opts.bridgeHost, opts.bridgePort);
  link.start();
  const sseClients = new Set<http.ServerResponse>();

  link.on("record", (_rec: TelemetryRecord, line: string) => {
    for (const res of sseClients) res.write(`data: ${line}\n\n`);
  });
  link.on("status", (up: boolean) => {
    const payload = JSON.stringify({ bridgeConnected: up });
    for (const res of sseClients) res.write(`event: status\ndata: ${payload}\n\n`);
  });

  const server = http.createServer(async (req, res) => {
    const url = new URL(req.url ?? "/", "http://localhost");
    try {
      if (req.method === "GET" && url.pathname === "/events") {
        res.writeHead(200, {
          "content-type": "text/event-stream",
          "cache-control": "no-cache",
          connection: "keep-alive",
        });
        res.write(`event: status\ndata: ${JSON.stringify({
          bridgeConnected: link.connected })}\n\n`);
        const recent = link.records.toArray().slice(-REPLAY_RECORDS);
        for (const rec of recent) res.write(`data: ${JSON.stringify(rec)}\n\n`);
        sseClients.add(res);
        req.on("close", () => sseClients.delete(res));
        return;
      }
      if (req.method === "GET" && url.pathname === "/status") {
        res.writeHead(200, { "content-type": "application/json" });
        res.end(JSON.stringify({
          bridgeConnected: link.connected,
          records: link.records.length,
          lastTick: link.records.last()?.tick ?? null,
        }));
        return;
      }
      if (req.method === "POST" && url.pathname === "/command") {
        const body = await readBody(req);
        let request: CommandRequest;
        try {
          request = JSON.parse(body);
        } catch {
          res.writeHead(400, { "content-type": "application/json" });
          res.end(JSON.stringify({ ok: false, error: "bad json" }));
          return;
        }
        const { line, error } = commandToLine(request);
        if (!line) {
          res.writeHead(400, { "content-type": "application/json" });
          res.end(JSON.stringify({ ok: false, error }));
          return;
        }
        const reply = await link.sendCommand(line);
        res.writeHead(200, { "content-type": "application/json" });
        res.end(JSON.stringify({ ok: reply.startsWith("ok"), reply }));
        return;
      }
      if (req.method === "GET") {
        const rel = url.pathname === "/" ? "index.html" : url.pathname.slice(1);
        const file = path.normalize(path.join(opts.staticDir, rel));
        if (!file.startsWith(path.normalize(opts.staticDir))) {
          res.writeHead(403).end();
          return;
        }
        if (fs.existsSync(file) && fs.statSync(file).isFile()) {
          res.writeHead(200, {
            "content-type": CONTENT_TYPES[path.extname(file)] ??
              "application/octet-stream",
          });
          fs.createReadStream(file).pipe(res);
          return;
        }
      }
      res.writeHead(404).end("not found");
    } catch (err) {
      res.writeHead(500).end(String(err));
    }
  });

  return new Promise((resolve) => {
    server.listen(opts.httpPort, "127.0.0.1", () => {
      const address = server.address() as net.AddressInfo;
      resolve({
        server,
        link,
        port: address.port,
        close() {
          for (const res of sseClients) res.end();
          sseClients.clear();
          link.stop();
          server.close();
        },
      });
    });
  });
}

function parseArgs(argv: string[]): {
  bridgeHost: string; bridgePort: number; httpPort: number; staticDir: string;
} {
  let bridge = "127.0.0.1:4777";
  let httpPort = 8780;
  let staticDir = path.join(
    path.dirname(fileURLToPath(import.meta.url)), "..", "..", "static");
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--bridge" && argv[i + 1]) bridge = argv[++i];
    else if (argv[i] === "--port" && argv[i + 1]) httpPort = Number(argv[++i]);
    else if (argv[i] === "--static" && argv[i + 1]) staticDir = argv[++i];
  }
  const sep = bridge.lastIndexOf(":");
  return {
    bridgeHost: bridge.slice(0, sep),
    bridgePort: Number(bridge.slice(sep + 1)),
    httpPort,
    staticDir,
  };
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (entry === fileURLToPath(import.meta.url)) {
  const opts = parseArgs(process.argv.slice(2));
  startConsoleServer(opts).then(({ port }) => {
    console.log(`console on http://127.0.0.1:${port} ` +
      `(bridge ${opts.bridgeHost}:${opts.bridgePort})`);
  });
}
