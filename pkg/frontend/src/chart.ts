/**
 * Deterministic chart scene for the effect monitor.
 *
 * renderMonitor turns a raw monitor payload into a plain data structure
 * (one diff line, one confidence band, one interaction bar series, and
 * significance markers) with fixed pixel layout, so snapshot tests and
 * the SVG serializer both see byte-identical output for equal input.
 * Malformed payloads yield an error panel instead of a partial chart.
 */

import {
  buildMonitorViewModel,
  MonitorPayloadError,
  MonitorViewModel,
} from "./monitor.js";

export const CHART_WIDTH = 640;
export const CHART_HEIGHT = 320;

const MARGIN_LEFT = 48;
const MARGIN_RIGHT = 16;
const MARGIN_TOP = 16;
const BAR_STRIP_HEIGHT = 56;
const BAR_STRIP_GAP = 12;
const MARGIN_BOTTOM = 24;

const PLOT_LEFT = MARGIN_LEFT;
const PLOT_RIGHT = CHART_WIDTH - MARGIN_RIGHT;
const PLOT_TOP = MARGIN_TOP;
const PLOT_BOTTOM =
  CHART_HEIGHT - MARGIN_BOTTOM - BAR_STRIP_HEIGHT - BAR_STRIP_GAP;
const BAR_BASELINE = CHART_HEIGHT - MARGIN_BOTTOM;

export interface ScenePoint {
  x: number;
  y: number;
}

export interface SceneBar {
  day: number;
  count: number;
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface SceneMarker {
  day: number;
  x: number;
  y: number;
}

export interface ChartSceneBody {
  kind: "chart";
  width: number;
  height: number;
  experimentId: string;
  line: ScenePoint[];
  band: { upper: ScenePoint[]; lower: ScenePoint[] };
  bars: SceneBar[];
  markers: SceneMarker[];
  zeroLineY: number;
  dayTicks: { day: number; x: number }[];
}

export interface EmptyScene {
  kind: "empty";
  message: string;
}

export interface ErrorScene {
  kind: "error";
  message: string;
}

export type ChartScene = ChartSceneBody | EmptyScene | ErrorScene;

function round2(value: number): number {
  return Math.round(value * 100) / 100;
}

function makeDayScale(days: number[]): (day: number) => number {
  const lo = Math.min(...days);
  const hi = Math.max(...days);
  if (lo === hi) {
    const center = (PLOT_LEFT + PLOT_RIGHT) / 2;
    return () => round2(center);
  }
  const span = PLOT_RIGHT - PLOT_LEFT;
  return (day) => round2(PLOT_LEFT + ((day - lo) / (hi - lo)) * span);
}

function makeDiffScale(vm: MonitorViewModel): (value: number) => number {
  // Zero stays inside the domain so the reference line and the marker
  // rule are visible on every chart.
  let lo = 0;
  let hi = 0;
  for (let i = 0; i < vm.diffs.length; i += 1) {
    const band = vm.ciBands[i]!;
    lo = Math.min(lo, vm.diffs[i]!, band.low ?? vm.diffs[i]!);
    hi = Math.max(hi, vm.diffs[i]!, band.high ?? vm.diffs[i]!);
  }
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const pad = (hi - lo) * 0.05;
  lo -= pad;
  hi += pad;
  const span = PLOT_BOTTOM - PLOT_TOP;
  return (value) => round2(PLOT_BOTTOM - ((value - lo) / (hi - lo)) * span);
}

function pickDayTicks(days: number[]): number[] {
  const step = Math.max(1, Math.ceil(days.length / 8));
  const ticks: number[] = [];
  for (let i = 0; i < days.length; i += step) {
    ticks.push(days[i]!);
  }
  const last = days[days.length - 1]!;
  if (ticks[ticks.length - 1] !== last) {
    ticks.push(last);
  }
  return ticks;
}

export function sceneFromViewModel(vm: MonitorViewModel): ChartScene {
  if (vm.days.length === 0) {
    return { kind: "empty", message: "no estimates in the requested window" };
  }
  const dayX = makeDayScale(vm.days);
  const diffY = makeDiffScale(vm);

  const line: ScenePoint[] = vm.days.map((day, i) => ({
    x: dayX(day),
    y: diffY(vm.diffs[i]!),
  }));

  const upper: ScenePoint[] = [];
  const lower: ScenePoint[] = [];
  for (let i = 0; i < vm.days.length; i += 1) {
    const band = vm.ciBands[i]!;
    if (band.low === null || band.high === null) {
      continue;
    }
    upper.push({ x: dayX(vm.days[i]!), y: diffY(band.high) });
    lower.push({ x: dayX(vm.days[i]!), y: diffY(band.low) });
  }

  const maxCount = Math.max(1, ...vm.interactions);
  const slotWidth = (PLOT_RIGHT - PLOT_LEFT) / vm.days.length;
  const barWidth = round2(Math.max(1, Math.min(12, slotWidth * 0.6)));
  const bars: SceneBar[] = vm.days.map((day, i) => {
    const height = round2((vm.interactions[i]! / maxCount) * BAR_STRIP_HEIGHT);
    return {
      day,
      count: vm.interactions[i]!,
      x: round2(dayX(day) - barWidth / 2),
      y: round2(BAR_BASELINE - height),
      width: barWidth,
      height,
    };
  });

  const markers: SceneMarker[] = vm.days
    .map((day, i) => ({ day, i }))
    .filter(({ day }) => vm.significantDays.has(day))
    .map(({ day, i }) => ({ day, x: dayX(day), y: diffY(vm.diffs[i]!) }));

  return {
    kind: "chart",
    width: CHART_WIDTH,
    height: CHART_HEIGHT,
    experimentId: vm.experimentId,
    line,
    band: { upper, lower },
    bars,
    markers,
    zeroLineY: diffY(0),
    dayTicks: pickDayTicks(vm.days).map((day) => ({ day, x: dayX(day) })),
  };
}

export function renderMonitor(payload: unknown): ChartScene {
  let vm: MonitorViewModel;
  try {
    vm = buildMonitorViewModel(payload);
  } catch (err) {
    if (err instanceof MonitorPayloadError) {
      return { kind: "error", message: err.message };
    }
    throw err;
  }
  return sceneFromViewModel(vm);
}

function pathFrom(points: ScenePoint[]): string {
  return points
    .map((p, i) => `${i === 0 ? "M" : "L"}${p.x},${p.y}`)
    .join(" ");
}

/** Serialize a scene to standalone SVG text. Pure string assembly: equal
 * scenes give equal markup. */
export function sceneToSvg(scene: ChartScene): string {
  if (scene.kind === "empty") {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${CHART_WIDTH}" height="${CHART_HEIGHT}">` +
      `<text class="empty-state" x="${CHART_WIDTH / 2}" y="${CHART_HEIGHT / 2}" text-anchor="middle">` +
      `${scene.message}</text></svg>`
    );
  }
  if (scene.kind === "error") {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${CHART_WIDTH}" height="${CHART_HEIGHT}">` +
      `<rect class="error-panel" x="8" y="8" width="${CHART_WIDTH - 16}" height="48" fill="#fdd"/>` +
      `<text class="error-text" x="16" y="36">${escapeXml(scene.message)}</text></svg>`
    );
  }
  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${scene.width}" height="${scene.height}">`,
  ];
  if (scene.band.upper.length > 0) {
    const ring = [...scene.band.upper, ...[...scene.band.lower].reverse()];
    parts.push(
      `<polygon class="ci-band" points="${ring.map((p) => `${p.x},${p.y}`).join(" ")}" fill="#cde" opacity="0.6"/>`,
    );
  }
  parts.push(
    `<line class="zero-line" x1="${PLOT_LEFT}" y1="${scene.zeroLineY}" x2="${PLOT_RIGHT}" y2="${scene.zeroLineY}" stroke="#999" stroke-dasharray="4 3"/>`,
  );
  parts.push(
    `<path class="diff-line" d="${pathFrom(scene.line)}" fill="none" stroke="#125" stroke-width="1.5"/>`,
  );
  for (const bar of scene.bars) {
    parts.push(
      `<rect class="interaction-bar" x="${bar.x}" y="${bar.y}" width="${bar.width}" height="${bar.height}" fill="#8ab"/>`,
    );
  }
  for (const marker of scene.markers) {
    parts.push(
      `<circle class="significance-marker" cx="${marker.x}" cy="${marker.y}" r="4" fill="#c33" data-day="${marker.day}"/>`,
    );
  }
  for (const tick of scene.dayTicks) {
    parts.push(
      `<text class="day-tick" x="${tick.x}" y="${scene.height - 6}" text-anchor="middle" font-size="10">${tick.day}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

function escapeXml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
