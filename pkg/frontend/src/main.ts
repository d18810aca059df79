// Wiring: one ExplorerState drives the page; the map and rankings views
// load once and can seed the query form.

import { ApiClient, MapPoint } from "./api.js";
import { fullExtent, hitTest, zoomTo, Viewport } from "./mapview.js";
import {
  paintMap,
  renderAgents,
  renderBreadcrumbs,
  renderCandidates,
  renderMessage,
  renderRankings,
  renderRecommendations,
  renderStats,
} from "./render.js";
import { canSubmit, ExplorerState, MAX_K, MIN_K } from "./state.js";

const api = new ApiClient("");
const state = new ExplorerState(api);

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

const doiInput = $("q-doi") as HTMLInputElement;
const titleInput = $("q-title") as HTMLInputElement;
const issnInput = $("q-issn") as HTMLInputElement;
const yearInput = $("q-year") as HTMLInputElement;
const kInput = $("q-k") as HTMLInputElement;
const submitButton = $("q-submit") as HTMLButtonElement;
const results = $("results");
const breadcrumbs = $("breadcrumbs");

function syncForm(): void {
  state.form.doi = doiInput.value;
  state.form.title = titleInput.value;
  state.form.issn = issnInput.value;
  state.form.year = yearInput.value;
  state.form.k = Math.max(MIN_K, Math.min(MAX_K, Number(kInput.value) || 10));
  submitButton.disabled = !canSubmit(state.form);
}

function pushFormToInputs(): void {
  doiInput.value = state.form.doi;
  titleInput.value = state.form.title;
  issnInput.value = state.form.issn;
  yearInput.value = state.form.year;
  kInput.value = String(state.form.k);
  submitButton.disabled = !canSubmit(state.form);
}

function showCurrent(): void {
  renderBreadcrumbs(breadcrumbs, state.breadcrumbLabels, () => {
    if (state.back()) showCurrent();
  });
  if (state.current) {
    renderRecommendations(results, state.current, follow);
  }
}

async function follow(cluster: number): Promise<void> {
  const outcome = await state.follow(cluster);
  applyOutcome(outcome);
}

function applyOutcome(outcome: Awaited<ReturnType<ExplorerState["submit"]>>): void {
  switch (outcome.kind) {
    case "ok":
      showCurrent();
      break;
    case "not_found":
      renderBreadcrumbs(breadcrumbs, state.breadcrumbLabels, () => {
        if (state.back()) showCurrent();
      });
      renderMessage(results, "not-found", `No match: ${outcome.message}`);
      break;
    case "ambiguous":
      renderCandidates(results, `Two items tie for this query; pick one:`, outcome.candidates, follow);
      break;
    case "error":
      renderMessage(results, "error", `${outcome.message}. Check the API and retry.`);
      break;
    case "stale":
      break; // superseded; a newer response already rendered
  }
}

$("query-form").addEventListener("submit", async (ev) => {
  ev.preventDefault();
  syncForm();
  applyOutcome(await state.submit());
});
for (const input of [doiInput, titleInput, issnInput, yearInput, kInput]) {
  input.addEventListener("input", syncForm);
}

// -- rankings -----------------------------------------------------------

async function loadRankings(): Promise<void> {
  const rows = await api.rankings(30);
  renderRankings($("rankings-table") as HTMLTableElement, rows, (title) => {
    state.seedFromJournal(title, title);
    pushFormToInputs();
    titleInput.focus();
  });
}

// -- agents + stats -------------------------------------------------------

async function loadSidebars(): Promise<void> {
  renderStats($("stats"), await api.stats());
  renderAgents($("agents-table") as HTMLTableElement, await api.agents(15));
}

// -- interest map ----------------------------------------------------------

const canvas = $("map-canvas") as HTMLCanvasElement;
let mapPoints: MapPoint[] = [];
let viewport: Viewport = fullExtent([]);
let hover: MapPoint | null = null;
let drag: { ax: number; ay: number; bx: number; by: number } | null = null;
const journalTitles = new Map<string, string>();

function repaint(): void {
  paintMap(canvas, mapPoints, viewport, hover, drag);
}

async function loadMap(): Promise<void> {
  mapPoints = await api.map();
  viewport = fullExtent(mapPoints);
  try {
    const rows = await api.rankings(500);
    for (const row of rows) journalTitles.set(row.title, row.title);
  } catch {
    // rankings are optional for the map view
  }
  repaint();
}

canvas.addEventListener("mousemove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const px = ev.clientX - rect.left;
  const py = ev.clientY - rect.top;
  if (drag) {
    drag.bx = px;
    drag.by = py;
  } else {
    hover = hitTest(mapPoints, px, py, viewport, canvas.width, canvas.height);
  }
  repaint();
});
canvas.addEventListener("mousedown", (ev) => {
  const rect = canvas.getBoundingClientRect();
  drag = {
    ax: ev.clientX - rect.left,
    ay: ev.clientY - rect.top,
    bx: ev.clientX - rect.left,
    by: ev.clientY - rect.top,
  };
});
canvas.addEventListener("mouseup", (ev) => {
  if (!drag) return;
  const rect = canvas.getBoundingClientRect();
  const bx = ev.clientX - rect.left;
  const by = ev.clientY - rect.top;
  const wasClick = Math.abs(bx - drag.ax) < 5 && Math.abs(by - drag.ay) < 5;
  if (wasClick) {
    const picked = hitTest(mapPoints, bx, by, viewport, canvas.width, canvas.height);
    if (picked) {
      state.seedFromJournal(picked.label, journalTitles.get(picked.label));
      pushFormToInputs();
    }
  } else {
    viewport = zoomTo(viewport, drag.ax, drag.ay, bx, by, canvas.width, canvas.height);
  }
  drag = null;
  repaint();
});
canvas.addEventListener("dblclick", () => {
  viewport = fullExtent(mapPoints);
  repaint();
});
canvas.addEventListener("mouseleave", () => {
  hover = null;
  drag = null;
  repaint();
});

// -- boot -------------------------------------------------------------------

function reportLoadFailure(error: unknown): void {
  const message =
    error instanceof Error && error.message.includes("artifacts")
      ? "Pipeline artifacts are missing: run `resolverlogs pipeline` first, then reload."
      : `API unavailable: ${error instanceof Error ? error.message : error}`;
  renderMessage($("results"), "error", message);
}

syncForm();
Promise.all([loadRankings(), loadSidebars(), loadMap()]).catch(reportLoadFailure);
