import { Gateway } from "./api.js";
import { ChartView } from "./chart.js";
import { ViewModel } from "./model.js";
import { ReplayTransport } from "./replay.js";
import { TopologyView } from "./topology.js";
import type { DiffJson, LiveEvent } from "./types.js";

const $ = <T extends HTMLElement = HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

function toast(message: string): void {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  $("toasts").appendChild(el);
  setTimeout(() => el.remove(), 4000);
}

function chartFromDiff(chart: ChartView, diff: DiffJson): void {
  if (!chart.selection) return;
  for (const entry of diff.entries) {
    if (entry.subject === "env" || !("node" in entry.subject)) continue;
    if (entry.subject.node !== chart.selection.node) continue;
    if (entry.property_id !== chart.selection.prop || entry.new === null) continue;
    chart.series.add(diff.t, entry.error ? null : (entry.value ?? null));
  }
  chart.render();
}

function main(): void {
  const gateway = new Gateway();
  const liveModel = new ViewModel();
  const replayModel = new ViewModel();

  const liveTopology = new TopologyView(
    $("live-canvas") as unknown as SVGSVGElement,
    liveModel, $("live-detail"), $("live-empty"));
  const replayTopology = new TopologyView(
    $("replay-canvas") as unknown as SVGSVGElement,
    replayModel, $("replay-detail"), $("replay-empty"));
  const liveChart = new ChartView($("live-chart") as unknown as SVGSVGElement);
  const replayChart = new ChartView($("replay-chart") as unknown as SVGSVGElement);

  liveTopology.onChartRequest = (addr, pid) => {
    liveChart.select(addr, pid);
    $("live-chart-title").textContent = `node ${addr} / property ${pid}`;
  };
  replayTopology.onChartRequest = (addr, pid) => {
    replayChart.select(addr, pid);
    $("replay-chart-title").textContent = `node ${addr} / property ${pid}`;
  };

  const staleInput = $<HTMLInputElement>("stale-threshold");
  staleInput.addEventListener("change", () => {
    const seconds = Number(staleInput.value) || 60;
    liveTopology.staleAfterMs = seconds * 1000;
    replayTopology.staleAfterMs = seconds * 1000;
  });

  // live wiring ---------------------------------------------------------
  const statusBanner = $("status");
  const counters = $("counters");

  liveModel.onChange(() => {
    counters.textContent =
      `packets ${liveModel.packetCount} / discarded ${liveModel.discardCount}`;
  });

  gateway.liveSocket({
    onEvent: (event: LiveEvent) => {
      if (event.type === "diff") {
        liveModel.applyDiff(event.diff);
        chartFromDiff(liveChart, event.diff);
      } else if (event.type === "discard") {
        liveModel.discardCount += 1;
        toast(`discarded packet: ${event.reason}`);
      } else if (event.type === "checkpoint") {
        toast(`checkpoint sealed at ${new Date(event.t).toISOString()} (${event.logs} logs)`);
      }
    },
    onStatus: (connected) => {
      liveModel.connected = connected;
      statusBanner.className = connected ? "status ok" : "status down";
      statusBanner.textContent = connected ? "live" : "disconnected, retrying";
      if (connected) {
        // resync: applying the snapshot equals having streamed every diff
        void gateway.state().then((s) => liveModel.applyState(s));
      }
    },
  });

  // replay wiring -------------------------------------------------------
  const transport = new ReplayTransport(gateway, replayModel, {
    scrubber: $<HTMLInputElement>("scrubber"),
    ticks: $("scrubber-ticks"),
    playPause: $<HTMLButtonElement>("play-pause"),
    stepBack: $<HTMLButtonElement>("step-back"),
    stepForward: $<HTMLButtonElement>("step-forward"),
    speed: $<HTMLSelectElement>("speed"),
    cursor: $("cursor"),
  });
  transport.onDiff = (diff) => chartFromDiff(replayChart, diff);
  transport.onFullState = (cursorT) => {
    replayChart.series.truncateAfter(cursorT);
    replayChart.render();
  };
  replayTopology.now = () => replayModel.cursorT ?? Date.now();

  // tabs ----------------------------------------------------------------
  const tabs = { live: $("tab-live"), replay: $("tab-replay") };
  const panes = { live: $("pane-live"), replay: $("pane-replay") };

  function show(which: "live" | "replay"): void {
    for (const key of ["live", "replay"] as const) {
      tabs[key].classList.toggle("active", key === which);
      panes[key].style.display = key === which ? "grid" : "none";
    }
    if (which === "replay") {
      liveTopology.stop();
      replayTopology.start();
      void transport.open().catch((err) => toast(String(err)));
    } else {
      replayTopology.stop();
      liveTopology.start();
      void transport.close();
    }
  }

  tabs.live.addEventListener("click", () => show("live"));
  tabs.replay.addEventListener("click", () => show("replay"));
  show("live");

  void gateway.state().then((s) => liveModel.applyState(s));
}

window.addEventListener("load", main);
