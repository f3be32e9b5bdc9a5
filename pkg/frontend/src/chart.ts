// Time series of one (node, property) pair using converted values.
// Unconvertible samples break the line into segments; replay seeks
// truncate the series back to the cursor.

export interface Sample {
  t: number;
  value: number | null; // null = unconvertible, renders as a gap
}

export class ChartSeries {
  samples: Sample[] = [];

  add(t: number, value: number | null): void {
    // playback can revisit a timestamp after a backward step; drop the
    // stale tail so the series stays ordered
    while (this.samples.length > 0 && this.samples[this.samples.length - 1].t > t) {
      this.samples.pop();
    }
    this.samples.push({ t, value });
  }

  truncateAfter(t: number): void {
    this.samples = this.samples.filter((s) => s.t <= t);
  }

  clear(): void {
    this.samples = [];
  }

  /** Contiguous runs of convertible samples; gaps split segments. */
  segments(): Sample[][] {
    const out: Sample[][] = [];
    let current: Sample[] = [];
    for (const sample of this.samples) {
      if (sample.value === null) {
        if (current.length > 0) out.push(current);
        current = [];
      } else {
        current.push(sample);
      }
    }
    if (current.length > 0) out.push(current);
    return out;
  }

  extent(): { t0: number; t1: number; lo: number; hi: number } | null {
    const values = this.samples.filter((s) => s.value !== null);
    if (values.length === 0) return null;
    const ts = this.samples.map((s) => s.t);
    const vs = values.map((s) => s.value!);
    return {
      t0: Math.min(...ts),
      t1: Math.max(...ts),
      lo: Math.min(...vs),
      hi: Math.max(...vs),
    };
  }
}

const SVG_NS = "http://www.w3.org/2000/svg";

export class ChartView {
  series = new ChartSeries();
  selection: { node: number; prop: number } | null = null;

  constructor(private svg: SVGSVGElement) {}

  select(node: number, prop: number): void {
    if (this.selection && this.selection.node === node && this.selection.prop === prop) {
      return;
    }
    this.selection = { node, prop };
    this.series.clear();
  }

  render(): void {
    const width = this.svg.clientWidth || 600;
    const height = this.svg.clientHeight || 180;
    this.svg.innerHTML = "";
    const extent = this.series.extent();
    if (!extent) return;
    const spanT = Math.max(1, extent.t1 - extent.t0);
    const spanV = Math.max(1e-9, extent.hi - extent.lo);
    const pad = 14;
    const px = (t: number) => pad + ((t - extent.t0) / spanT) * (width - 2 * pad);
    const py = (v: number) => height - pad - ((v - extent.lo) / spanV) * (height - 2 * pad);

    for (const segment of this.series.segments()) {
      if (segment.length === 1) {
        const dot = document.createElementNS(SVG_NS, "circle");
        dot.setAttribute("cx", String(px(segment[0].t)));
        dot.setAttribute("cy", String(py(segment[0].value!)));
        dot.setAttribute("r", "3");
        dot.setAttribute("class", "chart-dot");
        this.svg.appendChild(dot);
        continue;
      }
      const line = document.createElementNS(SVG_NS, "polyline");
      line.setAttribute(
        "points",
        segment.map((s) => `${px(s.t)},${py(s.value!)}`).join(" "),
      );
      line.setAttribute("class", "chart-line");
      this.svg.appendChild(line);
    }

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(pad));
    label.setAttribute("y", "12");
    label.setAttribute("class", "chart-label");
    label.textContent = `${extent.lo.toPrecision(4)} … ${extent.hi.toPrecision(4)}`;
    this.svg.appendChild(label);
  }
}
