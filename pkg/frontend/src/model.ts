// The view model: an in-memory mirror of the gateway's network state,
// mutated only by received events (full states and diffs). Rendering
// components read from it; they never talk to the network themselves.

import type { DiffJson, NodeJson, PropValue, StateJson } from "./types.js";

export interface PropView {
  name: string;
  raw: number;
  value: number | null;
  error: string | null;
}

export interface LinkView {
  dest: number;
  lastSeen: number;
  props: Map<number, PropView>;
}

export interface NodeView {
  address: number;
  lastSeen: number;
  props: Map<number, PropView>;
  links: Map<number, LinkView>;
}

export interface EdgeView {
  src: number;
  dst: number;
  props: Map<number, PropView>;
  lastSeen: number;
}

function propsFromJson(json: Record<string, PropValue>): Map<number, PropView> {
  const out = new Map<number, PropView>();
  for (const [pid, pv] of Object.entries(json)) {
    out.set(Number(pid), { name: pv.name, raw: pv.raw, value: pv.value, error: pv.error });
  }
  return out;
}

export class ViewModel {
  t = 0;
  packetCount = 0;
  discardCount = 0;
  nodes = new Map<number, NodeView>();
  env = new Map<number, PropView>();
  cursorT: number | null = null; // replay cursor, null in live mode
  connected = false;

  private listeners: Array<() => void> = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  notify(): void {
    for (const fn of this.listeners) fn();
  }

  /** Full resync; yields the same model as streaming every diff. */
  applyState(state: StateJson): void {
    this.t = state.t;
    this.packetCount = state.packet_count;
    this.discardCount = state.discard_count;
    this.nodes = new Map();
    for (const node of Object.values(state.nodes)) {
      this.nodes.set(node.address, this.nodeFromJson(node));
    }
    this.env = propsFromJson(state.env);
    this.notify();
  }

  private nodeFromJson(json: NodeJson): NodeView {
    const links = new Map<number, LinkView>();
    for (const link of Object.values(json.links)) {
      links.set(link.dest, {
        dest: link.dest,
        lastSeen: link.last_seen,
        props: propsFromJson(link.props),
      });
    }
    return {
      address: json.address,
      lastSeen: json.last_seen,
      props: propsFromJson(json.props),
      links,
    };
  }

  applyDiff(diff: DiffJson): void {
    this.t = diff.t;
    this.packetCount = diff.packet_count;
    this.discardCount = diff.discard_count;
    for (const entry of diff.entries) {
      if (entry.subject === "env") {
        this.applyProp(this.env, entry.property_id!, entry);
        continue;
      }
      if ("node" in entry.subject) {
        const addr = entry.subject.node;
        if (entry.property_id === null && entry.new === null) {
          this.nodes.delete(addr);
          continue;
        }
        const node = this.ensureNode(addr);
        if (entry.property_id === null) {
          node.lastSeen = entry.new!;
        } else {
          this.applyProp(node.props, entry.property_id, entry);
        }
        continue;
      }
      const [src, dst] = entry.subject.link;
      const node = this.ensureNode(src);
      if (entry.property_id === null && entry.new === null) {
        node.links.delete(dst);
        continue;
      }
      let link = node.links.get(dst);
      if (!link) {
        link = { dest: dst, lastSeen: 0, props: new Map() };
        node.links.set(dst, link);
      }
      if (entry.property_id === null) {
        link.lastSeen = entry.new!;
      } else {
        this.applyProp(link.props, entry.property_id, entry);
      }
    }
    this.notify();
  }

  private ensureNode(addr: number): NodeView {
    let node = this.nodes.get(addr);
    if (!node) {
      node = { address: addr, lastSeen: 0, props: new Map(), links: new Map() };
      this.nodes.set(addr, node);
    }
    return node;
  }

  private applyProp(
    props: Map<number, PropView>,
    pid: number,
    entry: { new: number | null; name?: string; value?: number | null; error?: string | null },
  ): void {
    if (entry.new === null) {
      props.delete(pid);
      return;
    }
    const existing = props.get(pid);
    props.set(pid, {
      name: entry.name ?? existing?.name ?? `#${pid}`,
      raw: entry.new,
      value: entry.value ?? null,
      error: entry.error ?? null,
    });
  }

  edges(): EdgeView[] {
    const out: EdgeView[] = [];
    for (const node of this.nodes.values()) {
      for (const link of node.links.values()) {
        out.push({
          src: node.address,
          dst: link.dest,
          props: link.props,
          lastSeen: link.lastSeen,
        });
      }
    }
    return out;
  }

  nodeAddresses(): number[] {
    return [...this.nodes.keys()].sort((a, b) => a - b);
  }
}
