import * as http from "node:http";
import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { startConsoleServer, ConsoleServer } from "../src/server/main.js";
import { TelemetryRecord, parseTelemetryLine } from "../src/shared/protocol.js";
import { FakeBridge, startFakeBridge } from "./fake_bridge.js";

let bridge: FakeBridge;
let console_: ConsoleServer;

function wait(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(cond: () => boolean, ms = 5000): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) throw new Error("condition not met in time");
    await wait(20);
  }
}

function getJson(path: string): Promise<{ status: number; body: any }> {
  return new Promise((resolve, reject) => {
    http.get(`http://127.0.0.1:${console_.port}${path}`, (res) => {
      let data = "";
      res.on("data", (c) => (data += c));
      res.on("end", () =>
        resolve({ status: res.statusCode ?? 0, body: JSON.parse(data) }));
    }).on("error", reject);
  });
}

function postJson(path: string, body: object):
    Promise<{ status: number; body: any }> {
  return new Promise((resolve, reject) => {
    const payload = JSON.stringify(body);
    const req = http.request(
      {
        host: "127.0.0.1",
        port: console_.port,
        path,
        method: "POST",
        headers: { "content-type": "application/json" },
      },
      (res) => {
        let data = "";
        res.on("data", (c) => (data += c));
        res.on("end", () =>
          resolve({ status: res.statusCode ?? 0, body: JSON.parse(data) }));
      });
    req.on("error", reject);
    req.end(payload);
  });
}

/** Subscribe to /events and collect telemetry records as they arrive. */
function openStream(): Promise<{ records: TelemetryRecord[]; close(): void }> {
  return new Promise((resolve, reject) => {
    const records: TelemetryRecord[] = [];
    const req = http.get(
      `http://127.0.0.1:${console_.port}/events`, (res) => {
        let buf = "";
        res.on("data", (chunk) => {
          buf += chunk;
          let idx: number;
          while ((idx = buf.indexOf("\n\n")) >= 0) {
            const frame = buf.slice(0, idx);
            buf = buf.slice(idx + 2);
            for (const line of frame.split("\n")) {
              if (line.startsWith("data: ")) {
                const rec = parseTelemetryLine(line.slice(6));
                if (rec) records.push(rec);
              }
            }
          }
        });
        resolve({ records, close: () => req.destroy() });
      });
    req.on("error", reject);
  });
}

beforeEach(async () => {
  bridge = await startFakeBridge();
  console_ = await startConsoleServer({
    bridgeHost: "127.0.0.1",
    bridgePort: bridge.port,
    httpPort: 0,
    staticDir: new URL("../static", import.meta.url).pathname,
  });
  await waitFor(() => console_.link.connected);
});

afterEach(() => {
  console_.close();
  bridge.close();
});

describe("console server", () => {
  it("reports bridge status and relays telemetry over SSE", async () => {
    const stream = await openStream();
    for (let i = 0; i < 10; i++) bridge.tick();
    await waitFor(() => stream.records.length >= 10);
    expect(stream.records[0].mode).toBe("adaptive");
    expect(stream.records.at(-1)!.tick).toBe(10);
    const status = await getJson("/status");
    expect(status.body.bridgeConnected).toBe(true);
    expect(status.body.records).toBeGreaterThanOrEqual(10);
    stream.close();
  });

  it("replays recent history to late subscribers", async () => {
    for (let i = 0; i < 25; i++) bridge.tick();
    await waitFor(() => console_.link.records.length >= 25);
    const stream = await openStream();
    await waitFor(() => stream.records.length >= 25);
    expect(stream.records[0].tick).toBe(1);
    stream.close();
  });

  it("round-trips a mode command within two ticks", async () => {
    const stream = await openStream();
    bridge.tick();
    await waitFor(() => stream.records.length >= 1);

    const resp = await postJson("/command", { type: "mode", mode: "manual" });
    expect(resp.body.ok).toBe(true);
    expect(resp.body.reply).toBe("ok mode manual");

    // the echo must appear within the next two telemetry records
    const seen = stream.records.length;
    bridge.tick();
    bridge.tick();
    await waitFor(() => stream.records.length >= seen + 2);
    const next = stream.records.slice(seen, seen + 2);
    expect(next.some((r) => r.mode === "manual")).toBe(true);
    stream.close();
  });

  it("relays manual references and reflects them in telemetry", async () => {
    const resp = await postJson("/command", { type: "ref", p: 150, q: 10 });
    expect(resp.body.ok).toBe(true);
    await postJson("/command", { type: "mode", mode: "manual" });
    const stream = await openStream();
    bridge.tick();
    await waitFor(() =>
      stream.records.some((r) => r.mode === "manual" && r.p_ref === 150));
    expect(bridge.received).toContain("ref 150 10");
    stream.close();
  });

  it("rejects out-of-range references without touching the bridge", async () => {
    const before = bridge.received.length;
    const resp = await postJson("/command", { type: "ref", p: 400, q: 0 });
    expect(resp.status).toBe(400);
    expect(resp.body.ok).toBe(false);
    expect(resp.body.error).toMatch(/250/);
    await wait(50);
    expect(bridge.received.length).toBe(before);
  });

  it("rejects malformed command payloads", async () => {
    const resp = await postJson("/command", { type: "warp" });
    expect(resp.status).toBe(400);
  });

  it("serves the client page", async () => {
    const page: string = await new Promise((resolve, reject) => {
      http.get(`http://127.0.0.1:${console_.port}/`, (res) => {
        let data = "";
        res.on("data", (c) => (data += c));
        res.on("end", () => resolve(data));
      }).on("error", reject);
    });
    expect(page).toContain("operator console");
    expect(page).toContain("control enabled");
  });

  it("survives a bridge drop and reconnects", async () => {
    bridge.tick();
    await waitFor(() => console_.link.records.length >= 1);
    const oldPort = bridge.port;
    bridge.close();
    await waitFor(() => !console_.link.connected);
    // command while offline fails gracefully
    const resp = await postJson("/command", { type: "mode", mode: "off" });
    expect(resp.body.ok).toBe(false);
    void oldPort;
  });
});
