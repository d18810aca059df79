// DOM painting. Deliberately thin: every list renders in the exact order
// the API returned it, and all interaction is delegated to callbacks.

import { AgentRow, MapPoint, RankingRow, StatsReport } from "./api.js";
import { Viewport, toPixel } from "./mapview.js";
import { ViewSnapshot } from "./state.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderRecommendations(
  container: HTMLElement,
  view: ViewSnapshot,
  onFollow: (cluster: number) => void,
): void {
  container.replaceChildren();
  const heading = el("div", "query-label");
  heading.append(el("span", "tag", "query"), el("span", undefined, view.response.label));
  container.append(heading);
  if (view.response.isolated || view.response.recommendations.length === 0) {
    container.append(
      el("p", "empty", "No usage relationships recorded for this item yet."),
    );
    return;
  }
  const list = el("ol", "recommendations");
  for (const rec of view.response.recommendations) {
    const item = el("li");
    const button = el("button", "rec-row");
    button.append(
      el("span", "rec-rank", `#${rec.rank}`),
      el("span", "rec-label", rec.label),
      el("span", "rec-score", rec.score.toFixed(1)),
    );
    button.addEventListener("click", () => onFollow(rec.cluster));
    item.append(button);
    list.append(item);
  }
  container.append(list);
}

export function renderMessage(container: HTMLElement, kind: string, text: string): void {
  container.replaceChildren(el("p", `message ${kind}`, text));
}

export function renderCandidates(
  container: HTMLElement,
  text: string,
  candidates: { cluster: number; label: string }[],
  onPick: (cluster: number) => void,
): void {
  container.replaceChildren(el("p", "message ambiguous", text));
  for (const candidate of candidates) {
    const card = el("button", "candidate");
    card.textContent = candidate.label;
    card.addEventListener("click", () => onPick(candidate.cluster));
    container.append(card);
  }
}

export function renderBreadcrumbs(
  container: HTMLElement,
  labels: string[],
  onBack: () => void,
): void {
  container.replaceChildren();
  if (labels.length === 0) return;
  const back = el("button", "back", "← back");
  back.addEventListener("click", onBack);
  container.append(back);
  const crumbs = el("span", "crumbs", labels.join("  ›  "));
  container.append(crumbs);
}

export function renderRankings(
  table: HTMLTableElement,
  rows: RankingRow[],
  onPick: (title: string) => void,
): void {
  const body = table.tBodies[0] ?? table.createTBody();
  body.replaceChildren();
  for (const row of rows) {
    const tr = document.createElement("tr");
    const flag = row.flag ? "★" : "";
    for (const value of [String(row.rank), row.prw.toFixed(3), row.if03.toFixed(3), flag]) {
      tr.append(el("td", undefined, value));
    }
    const title = el("td", "journal-title", row.title);
    title.addEventListener("click", () => onPick(row.title));
    tr.append(title);
    body.append(tr);
  }
}

export function renderAgents(table: HTMLTableElement, rows: AgentRow[]): void {
  const body = table.tBodies[0] ?? table.createTBody();
  body.replaceChildren();
  for (const row of rows) {
    const tr = document.createElement("tr");
    if (row.flagged) tr.className = "flagged";
    tr.append(
      el("td", undefined, String(row.rank)),
      el("td", undefined, row.requester),
      el("td", undefined, String(row.count)),
      el("td", undefined, row.flagged ? "⚑" : ""),
    );
    body.append(tr);
  }
}

export function renderStats(container: HTMLElement, stats: StatsReport): void {
  const shares = Object.entries(stats.referent_type_shares)
    .map(([genre, share]) => `${genre} ${(share * 100).toFixed(0)}%`)
    .join(", ");
  container.replaceChildren(
    el("span", "stat", `${stats.events.toLocaleString()} events`),
    el("span", "stat", `${stats.unique_referents.toLocaleString()} referents (${shares})`),
    el("span", "stat", `${stats.unique_requesters.toLocaleString()} requesters`),
    el("span", "stat", `${stats.journal_nodes.toLocaleString()} journals / ${stats.journal_edges.toLocaleString()} relations`),
  );
}

export function paintMap(
  canvas: HTMLCanvasElement,
  points: MapPoint[],
  view: Viewport,
  hover: MapPoint | null,
  dragBox: { ax: number; ay: number; bx: number; by: number } | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#f8f9fb";
  ctx.fillRect(0, 0, width, height);
  ctx.fillStyle = "#3a6ea5";
  for (const p of points) {
    const { px, py } = toPixel(p, view, width, height);
    if (px < -4 || px > width + 4 || py < -4 || py > height + 4) continue;
    ctx.beginPath();
    ctx.arc(px, py, 3, 0, Math.PI * 2);
    ctx.fill();
  }
  if (hover) {
    const { px, py } = toPixel(hover, view, width, height);
    ctx.fillStyle = "#d1495b";
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fill();
    ctx.font = "12px system-ui, sans-serif";
    const label = hover.label;
    const tw = ctx.measureText(label).width;
    const lx = Math.min(px + 8, width - tw - 6);
    const ly = Math.max(py - 8, 14);
    ctx.fillStyle = "rgba(255,255,255,0.92)";
    ctx.fillRect(lx - 3, ly - 12, tw + 6, 16);
    ctx.fillStyle = "#222";
    ctx.fillText(label, lx, ly);
  }
  if (dragBox) {
    ctx.strokeStyle = "#d1495b";
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(
      Math.min(dragBox.ax, dragBox.bx),
      Math.min(dragBox.ay, dragBox.by),
      Math.abs(dragBox.bx - dragBox.ax),
      Math.abs(dragBox.by - dragBox.ay),
    );
    ctx.setLineDash([]);
  }
}
