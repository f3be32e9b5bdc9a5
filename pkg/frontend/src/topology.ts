// Topology monitor: nodes as labeled vertices, directed edges for
// links. Clicking a node reveals its properties in the detail panel;
// nodes unheard-from for longer than the staleness threshold dim out.

import { ForceLayout } from "./layout.js";
import type { ViewModel, NodeView } from "./model.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const NODE_RADIUS = 16;

export class TopologyView {
  layout: ForceLayout;
  selected: number | null = null;
  staleAfterMs = 60_000;
  showRaw = false;
  /** In replay mode staleness is judged against the cursor, not the clock. */
  now: () => number = () => Date.now();

  private animating = false;
  private dragging: number | null = null;

  constructor(
    private svg: SVGSVGElement,
    private model: ViewModel,
    private detail: HTMLElement,
    private emptyNotice: HTMLElement,
  ) {
    this.layout = new ForceLayout(svg.clientWidth || 800, svg.clientHeight || 520);
    svg.addEventListener("pointermove", (e) => this.onDrag(e));
    svg.addEventListener("pointerup", () => (this.dragging = null));
    svg.addEventListener("pointerleave", () => (this.dragging = null));
  }

  start(): void {
    if (this.animating) return;
    this.animating = true;
    const frame = () => {
      if (!this.animating) return;
      this.layout.step(2);
      this.render();
      requestAnimationFrame(frame);
    };
    requestAnimationFrame(frame);
  }

  stop(): void {
    this.animating = false;
  }

  private onDrag(e: PointerEvent): void {
    if (this.dragging === null) return;
    const rect = this.svg.getBoundingClientRect();
    this.layout.pin(this.dragging, e.clientX - rect.left, e.clientY - rect.top);
  }

  render(): void {
    const addresses = this.model.nodeAddresses();
    const edges = this.model.edges();
    this.layout.width = this.svg.clientWidth || this.layout.width;
    this.layout.height = this.svg.clientHeight || this.layout.height;
    this.layout.sync(addresses, edges.map((e) => [e.src, e.dst]));
    this.emptyNotice.style.display = addresses.length === 0 ? "block" : "none";

    this.svg.innerHTML =
      '<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ' +
      'markerWidth="7" markerHeight="7" orient="auto-start-reverse">' +
      '<path d="M 0 0 L 10 5 L 0 10 z" class="edge-arrow"/></marker></defs>';

    const cutoff = this.now() - this.staleAfterMs;
    const pos = this.layout.positions();

    for (const edge of edges) {
      const a = pos.get(edge.src);
      const b = pos.get(edge.dst);
      if (!a || !b) continue; // link destination not yet heard from
      const d = Math.max(1, Math.hypot(b.x - a.x, b.y - a.y));
      const trim = (NODE_RADIUS + 4) / d;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(a.x + (b.x - a.x) * trim));
      line.setAttribute("y1", String(a.y + (b.y - a.y) * trim));
      line.setAttribute("x2", String(b.x - (b.x - a.x) * trim));
      line.setAttribute("y2", String(b.y - (b.y - a.y) * trim));
      line.setAttribute("class", "edge");
      line.setAttribute("marker-end", "url(#arrow)");
      this.svg.appendChild(line);
    }

    for (const addr of addresses) {
      const node = this.model.nodes.get(addr)!;
      const p = pos.get(addr);
      if (!p) continue;
      const group = document.createElementNS(SVG_NS, "g");
      const stale = node.lastSeen > 0 && node.lastSeen < cutoff;
      group.setAttribute(
        "class",
        "node" +
          (stale ? " stale" : "") +
          (this.selected === addr ? " selected" : ""),
      );
      group.addEventListener("pointerdown", (e) => {
        e.preventDefault();
        this.select(addr);
        this.dragging = addr;
      });
      group.addEventListener("dblclick", () => this.layout.unpin(addr));

      const circle = document.createElementNS(SVG_NS, "circle");
      circle.setAttribute("cx", String(p.x));
      circle.setAttribute("cy", String(p.y));
      circle.setAttribute("r", String(NODE_RADIUS));
      group.appendChild(circle);

      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(p.x));
      label.setAttribute("y", String(p.y + 4));
      label.setAttribute("text-anchor", "middle");
      label.textContent = String(addr);
      group.appendChild(label);

      this.svg.appendChild(group);
    }

    this.renderDetail();
  }

  select(addr: number | null): void {
    this.selected = addr;
    this.renderDetail();
  }

  private renderDetail(): void {
    const node = this.selected !== null ? this.model.nodes.get(this.selected) : undefined;
    if (!node) {
      this.detail.innerHTML = '<p class="hint">select a node to inspect it</p>';
      return;
    }
    this.detail.innerHTML = "";
    const title = document.createElement("h3");
    title.textContent = `node ${node.address}`;
    this.detail.appendChild(title);
    this.detail.appendChild(this.propsTable(node));

    for (const link of node.links.values()) {
      const head = document.createElement("h4");
      head.textContent = `link → ${link.dest}`;
      this.detail.appendChild(head);
      const table = document.createElement("table");
      for (const [pid, prop] of link.props) {
        table.appendChild(this.propRow(pid, prop));
      }
      this.detail.appendChild(table);
    }
  }

  private propsTable(node: NodeView): HTMLTableElement {
    const table = document.createElement("table");
    for (const [pid, prop] of node.props) {
      table.appendChild(this.propRow(pid, prop, node.address));
    }
    return table;
  }

  private propRow(pid: number, prop: { name: string; raw: number; value: number | null; error: string | null }, chartAddr?: number): HTMLTableRowElement {
    const row = document.createElement("tr");
    const name = document.createElement("td");
    name.textContent = prop.name;
    const value = document.createElement("td");
    if (prop.error) {
      value.textContent = `raw ${prop.raw} (${prop.error})`;
      value.className = "unconvertible";
    } else {
      value.textContent = this.showRaw
        ? `${formatValue(prop.value)} (raw ${prop.raw})`
        : formatValue(prop.value);
    }
    row.appendChild(name);
    row.appendChild(value);
    if (chartAddr !== undefined) {
      const chart = document.createElement("td");
      const btn = document.createElement("button");
      btn.textContent = "chart";
      btn.className = "mini";
      btn.addEventListener("click", () => this.onChartRequest?.(chartAddr, pid));
      chart.appendChild(btn);
      row.appendChild(chart);
    }
    return row;
  }

  onChartRequest: ((addr: number, pid: number) => void) | null = null;
}

function formatValue(value: number | null): string {
  if (value === null) return "n/a";
  return Math.abs(value) >= 1000 || Number.isInteger(value)
    ? String(value)
    : value.toPrecision(6);
}
