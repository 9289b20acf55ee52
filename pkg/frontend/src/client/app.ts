/** Operator console client: streams telemetry over SSE into rolling
 * charts and posts operator commands. All displayed values come straight
 * from bridge records; nothing is computed here beyond drawing. */

import {
  MODES,
  Mode,
  P_MAX_KW,
  TelemetryRecord,
  parseTelemetryLine,
  validateReference,
} from "../shared/protocol.js";
import { RingBuffer } from "../shared/ring.js";
import { RollingChart } from "./chart.js";

const WINDOW_DEFAULT_S = 120;
const TICKS_PER_SECOND = 10;

const $ = (id: string) => document.getElementById(id) as HTMLElement;

let windowS = WINDOW_DEFAULT_S;
let ring = new RingBuffer<TelemetryRecord>(windowS * TICKS_PER_SECOND + 60);
let dirty = false;

const powerChart = new RollingChart(
  $("chart-power") as HTMLCanvasElement,
  {
    series: [
      { key: "p_pcc", color: "#e8eaed", label: "P_PCC" },
      { key: "p_ref", color: "#4c9ffe", label: "P_ref" },
      { key: "p_dem_bar", color: "#9a6ee8", label: "P_dem(rl)", dashed: true },
    ],
    yLabel: "kW at PCC",
  });

const commandChart = new RollingChart(
  $("chart-command") as HTMLCanvasElement,
  {
    series: [
      { key: "cmd_p", color: "#ff6a5e", label: "cmd P" },
      { key: "cmd_q", color: "#ffb45e", label: "cmd Q", dashed: true },
    ],
    guides: [
      { y: P_MAX_KW, color: "#904040" },
      { y: -P_MAX_KW, color: "#904040" },
    ],
    yLabel: "inverter command (kW / kvar)",
  });

const socChart = new RollingChart(
  $("chart-soc") as HTMLCanvasElement,
  {
    series: [{ key: "soc", color: "#58d68d", label: "SoC" }],
    bands: [
      { from: 20, to: 30, color: "rgba(240,170,60,0.18)" },
      { from: 80, to: 90, color: "rgba(240,170,60,0.18)" },
      { from: 0, to: 20, color: "rgba(230,80,80,0.16)" },
      { from: 90, to: 100, color: "rgba(230,80,80,0.16)" },
    ],
    yLabel: "battery SoC (%)",
    fixedRange: [0, 100],
  });

function redraw(): void {
  const records = ring.toArray();
  const last = records[records.length - 1];
  const tNow = last ? last.t : 0;
  powerChart.draw(records as unknown as Record<string, number>[], tNow, windowS);
  commandChart.draw(records as unknown as Record<string, number>[], tNow, windowS);
  socChart.draw(records as unknown as Record<string, number>[], tNow, windowS,
                !!last?.recovery);
}

function frame(): void {
  if (dirty) {
    dirty = false;
    redraw();
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

// -- status & stream -------------------------------------------------------

function setBanner(text: string | null): void {
  const banner = $("banner");
  if (text) {
    banner.textContent = text;
    banner.classList.remove("hidden");
  } else {
    banner.classList.add("hidden");
  }
}

function onRecord(rec: TelemetryRecord): void {
  ring.push(rec);
  dirty = true;
  $("stat-tick").textContent = String(rec.tick);
  $("stat-soc").textContent = rec.soc.toFixed(2) + " %";
  $("stat-ppcc").textContent = rec.p_pcc.toFixed(1) + " kW";
  $("stat-cmd").textContent =
    `${rec.cmd_p.toFixed(1)} / ${rec.cmd_q.toFixed(1)}`;
  $("stat-mode").textContent = rec.mode;
  for (const mode of MODES) {
    $(`mode-${mode}`).classList.toggle("active", rec.mode === mode);
  }
  $("flag-recovery").classList.toggle("on", rec.recovery);
  $("flag-stale").classList.toggle("on", rec.stale);
  $("flag-sat").classList.toggle("on", rec.sat_p || rec.sat_q);
}

function connect(): void {
  const source = new EventSource("/events");
  source.onopen = () => setBanner(null);
  source.onerror = () => setBanner("console server unreachable, retrying...");
  source.onmessage = (ev) => {
    const rec = parseTelemetryLine(ev.data);
    if (rec) onRecord(rec);
  };
  source.addEventListener("status", (ev) => {
    const status = JSON.parse((ev as MessageEvent).data);
    setBanner(status.bridgeConnected ? null
      : "controller bridge offline, retrying...");
  });
}
connect();

// -- command panel ----------------------------------------------------------

function controlEnabled(): boolean {
  return ($("control-enable") as HTMLInputElement).checked;
}

async function post(command: object): Promise<void> {
  const out = $("cmd-result");
  if (!controlEnabled()) {
    out.textContent = "control disabled";
    return;
  }
  try {
    const resp = await fetch("/command", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(command),
    });
    const body = await resp.json();
    out.textContent = body.reply ?? body.error ?? "no reply";
    out.classList.toggle("err", !body.ok);
  } catch (err) {
    out.textContent = `send failed: ${err}`;
    out.classList.add("err");
  }
}

for (const mode of MODES) {
  $(`mode-${mode}`).addEventListener("click", () => {
    void post({ type: "mode", mode: mode as Mode });
  });
}

$("ref-send").addEventListener("click", () => {
  const p = Number(($("ref-p") as HTMLInputElement).value);
  const q = Number(($("ref-q") as HTMLInputElement).value);
  const bad = validateReference(p, q);
  const out = $("ref-error");
  if (bad) {
    out.textContent = bad;  // rejected client-side, nothing is sent
    return;
  }
  out.textContent = "";
  void post({ type: "ref", p, q });
});

$("gains-send").addEventListener("click", () => {
  const loop = ($("gains-loop") as HTMLSelectElement).value as "p" | "q";
  const k_p = Number(($("gain-kp") as HTMLInputElement).value);
  const k_i = Number(($("gain-ki") as HTMLInputElement).value);
  const k_d = Number(($("gain-kd") as HTMLInputElement).value);
  void post({ type: "gains", loop, k_p, k_i, k_d });
});

$("window-apply").addEventListener("click", () => {
  const v = Number(($("window-s") as HTMLInputElement).value);
  if (Number.isFinite(v) && v >= 10 && v <= 3600) {
    windowS = v;
    const fresh = new RingBuffer<TelemetryRecord>(
      windowS * TICKS_PER_SECOND + 60);
    for (const rec of ring.toArray().slice(-fresh.capacity)) fresh.push(rec);
    ring = fresh;
    dirty = true;
  }
});
