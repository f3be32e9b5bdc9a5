import { describe, expect, it } from "vitest";

import { ForceLayout } from "../src/layout.js";

function distance(layout: ForceLayout, a: number, b: number): number {
  const pa = layout.get(a)!;
  const pb = layout.get(b)!;
  return Math.hypot(pa.x - pb.x, pa.y - pb.y);
}

describe("ForceLayout", () => {
  it("is deterministic for the same topology", () => {
    const make = () => {
      const layout = new ForceLayout(800, 600);
      layout.sync([0, 1, 2, 3], [[0, 1], [1, 2]]);
      layout.step(200);
      return [...layout.positions().entries()];
    };
    expect(make()).toEqual(make());
  });

  it("keeps every body inside the viewport", () => {
    const layout = new ForceLayout(800, 600);
    layout.sync([...Array(30).keys()], []);
    layout.step(300);
    for (const { x, y } of layout.positions().values()) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(800);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(600);
      expect(Number.isFinite(x) && Number.isFinite(y)).toBe(true);
    }
  });

  it("pulls linked nodes closer than unlinked ones", () => {
    const layout = new ForceLayout(800, 600);
    layout.sync([1, 2, 3, 4], [[1, 2]]);
    layout.step(400);
    expect(distance(layout, 1, 2)).toBeLessThan(distance(layout, 3, 4));
  });

  it("drops bodies that leave the topology", () => {
    const layout = new ForceLayout(800, 600);
    layout.sync([1, 2, 3], [[1, 2], [2, 3]]);
    layout.sync([1, 2], [[1, 2]]);
    expect(layout.get(3)).toBeUndefined();
    layout.step(10); // edges referencing removed bodies must be gone too
  });

  it("pinned bodies stay where they are dragged", () => {
    const layout = new ForceLayout(800, 600);
    layout.sync([1, 2], [[1, 2]]);
    layout.pin(1, 100, 100);
    layout.step(100);
    const body = layout.get(1)!;
    expect(body.x).toBe(100);
    expect(body.y).toBe(100);
    layout.unpin(1);
    layout.step(50);
    expect(layout.get(1)!.x).not.toBe(100);
  });
});
