// Small force-directed layout: pairwise repulsion, springs along edges,
// gentle gravity toward the center. Deterministic initial placement so
// the same topology always settles the same way; dragged nodes pin.

export interface Body {
  id: number;
  x: number;
  y: number;
  vx: number;
  vy: number;
  pinned: boolean;
}

const REPULSION = 6000;
const SPRING = 0.02;
const REST_LENGTH = 120;
const GRAVITY = 0.01;
const DAMPING = 0.85;
const GOLDEN_ANGLE = Math.PI * (3 - Math.sqrt(5));

export class ForceLayout {
  private bodies = new Map<number, Body>();
  private edges: Array<[number, number]> = [];
  private placed = 0;

  constructor(
    public width: number,
    public height: number,
  ) {}

  /** Add/remove bodies to match the given ids; keeps existing positions. */
  sync(ids: number[], edges: Array<[number, number]>): void {
    const wanted = new Set(ids);
    for (const id of [...this.bodies.keys()]) {
      if (!wanted.has(id)) this.bodies.delete(id);
    }
    for (const id of ids) {
      if (!this.bodies.has(id)) {
        // spiral placement: deterministic and collision-free
        const angle = this.placed * GOLDEN_ANGLE;
        const radius = 40 + 14 * Math.sqrt(this.placed);
        this.placed += 1;
        this.bodies.set(id, {
          id,
          x: this.width / 2 + radius * Math.cos(angle),
          y: this.height / 2 + radius * Math.sin(angle),
          vx: 0,
          vy: 0,
          pinned: false,
        });
      }
    }
    this.edges = edges.filter(([a, b]) => wanted.has(a) && wanted.has(b));
  }

  step(iterations = 1): void {
    for (let i = 0; i < iterations; i++) this.tick();
  }

  private tick(): void {
    const bodies = [...this.bodies.values()];
    for (let i = 0; i < bodies.length; i++) {
      for (let j = i + 1; j < bodies.length; j++) {
        const a = bodies[i];
        const b = bodies[j];
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let d2 = dx * dx + dy * dy;
        if (d2 < 1) {
          // coincident bodies: nudge apart deterministically
          dx = 0.5 + (a.id % 7) * 0.1;
          dy = 0.5 + (b.id % 5) * 0.1;
          d2 = dx * dx + dy * dy;
        }
        const force = REPULSION / d2;
        const d = Math.sqrt(d2);
        const fx = (dx / d) * force;
        const fy = (dy / d) * force;
        a.vx -= fx;
        a.vy -= fy;
        b.vx += fx;
        b.vy += fy;
      }
    }
    for (const [srcId, dstId] of this.edges) {
      const a = this.bodies.get(srcId)!;
      const b = this.bodies.get(dstId)!;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const d = Math.max(1, Math.hypot(dx, dy));
      const force = SPRING * (d - REST_LENGTH);
      const fx = (dx / d) * force;
      const fy = (dy / d) * force;
      a.vx += fx;
      a.vy += fy;
      b.vx -= fx;
      b.vy -= fy;
    }
    for (const body of this.bodies.values()) {
      if (body.pinned) {
        body.vx = 0;
        body.vy = 0;
        continue;
      }
      body.vx += (this.width / 2 - body.x) * GRAVITY;
      body.vy += (this.height / 2 - body.y) * GRAVITY;
      body.vx *= DAMPING;
      body.vy *= DAMPING;
      body.x += body.vx;
      body.y += body.vy;
      const margin = 24;
      body.x = Math.min(this.width - margin, Math.max(margin, body.x));
      body.y = Math.min(this.height - margin, Math.max(margin, body.y));
    }
  }

  pin(id: number, x: number, y: number): void {
    const body = this.bodies.get(id);
    if (body) {
      body.pinned = true;
      body.x = x;
      body.y = y;
      body.vx = 0;
      body.vy = 0;
    }
  }

  unpin(id: number): void {
    const body = this.bodies.get(id);
    if (body) body.pinned = false;
  }

  get(id: number): Body | undefined {
    return this.bodies.get(id);
  }

  positions(): Map<number, { x: number; y: number }> {
    const out = new Map<number, { x: number; y: number }>();
    for (const body of this.bodies.values()) out.set(body.id, { x: body.x, y: body.y });
    return out;
  }
}
