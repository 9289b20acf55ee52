/** Minimal rolling time-series chart on a 2D canvas. */

export interface Series {
  key: string;
  color: string;
  label: string;
  dashed?: boolean;
}

export interface Band {
  from: number;
  to: number;
  color: string;
}

export interface Guide {
  y: number;
  color: string;
}

export interface ChartOptions {
  series: Series[];
  bands?: Band[];
  guides?: Guide[];
  yLabel: string;
  fixedRange?: [number, number];
}

type Sample = Record<string, number>;

export class RollingChart {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement,
              private opts: ChartOptions) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  draw(samples: Sample[], tNow: number, windowS: number,
       highlight = false): void {
    const { ctx, canvas } = this;
    const w = canvas.width, h = canvas.height;
    const left = 46, right = 8, top = 8, bottom = 18;
    ctx.clearRect(0, 0, w, h);
    ctx.fillStyle = highlight ? "#3a1d1d" : "#14181d";
    ctx.fillRect(0, 0, w, h);

    const t0 = tNow - windowS;
    const visible = samples.filter((s) => s.t >= t0);
    let lo = Infinity, hi = -Infinity;
    if (this.opts.fixedRange) {
      [lo, hi] = this.opts.fixedRange;
    } else {
      for (const s of visible) {
        for (const ser of this.opts.series) {
          const v = s[ser.key];
          if (Number.isFinite(v)) {
            lo = Math.min(lo, v);
            hi = Math.max(hi, v);
          }
        }
      }
      for (const g of this.opts.guides ?? []) {
        lo = Math.min(lo, g.y);
        hi = Math.max(hi, g.y);
      }
      if (!Number.isFinite(lo)) { lo = 0; hi = 1; }
      if (hi - lo < 1e-6) { hi += 1; lo -= 1; }
      const pad = 0.08 * (hi - lo);
      lo -= pad;
      hi += pad;
    }

    const px = (t: number) => left + ((t - t0) / windowS) * (w - left - right);
    const py = (v: number) => top + (1 - (v - lo) / (hi - lo)) * (h - top - bottom);

    for (const band of this.opts.bands ?? []) {
      ctx.fillStyle = band.color;
      const y1 = py(Math.min(band.to, hi));
      const y2 = py(Math.max(band.from, lo));
      ctx.fillRect(left, y1, w - left - right, Math.max(0, y2 - y1));
    }
    for (const guide of this.opts.guides ?? []) {
      ctx.strokeStyle = guide.color;
      ctx.setLineDash([4, 4]);
      ctx.beginPath();
      ctx.moveTo(left, py(guide.y));
      ctx.lineTo(w - right, py(guide.y));
      ctx.stroke();
      ctx.setLineDash([]);
    }

    ctx.strokeStyle = "#3a4250";
    ctx.strokeRect(left, top, w - left - right, h - top - bottom);
    ctx.fillStyle = "#8b98a9";
    ctx.font = "10px sans-serif";
    const ticks = 4;
    for (let i = 0; i <= ticks; i++) {
      const v = lo + ((hi - lo) * i) / ticks;
      ctx.fillText(v.toFixed(Math.abs(hi - lo) > 20 ? 0 : 1), 2,
                   py(v) + 3);
    }
    ctx.fillText(`${this.opts.yLabel}  (last ${windowS}s)`, left + 4, h - 5);

    for (const ser of this.opts.series) {
      ctx.strokeStyle = ser.color;
      ctx.lineWidth = 1.3;
      ctx.setLineDash(ser.dashed ? [5, 3] : []);
      ctx.beginPath();
      let started = false;
      for (const s of visible) {
        const v = s[ser.key];
        if (!Number.isFinite(v)) continue;
        const x = px(s.t), y = py(v);
        if (started) ctx.lineTo(x, y);
        else { ctx.moveTo(x, y); started = true; }
      }
      ctx.stroke();
      ctx.setLineDash([]);
    }

    let lx = left + 6;
    for (const ser of this.opts.series) {
      ctx.fillStyle = ser.color;
      ctx.fillText(ser.label, lx, top + 10);
      lx += ctx.measureText(ser.label).width + 14;
    }
  }
}
