// Geometry for the interest-map scatter: data<->pixel transforms, nearest
// point hit-testing for hover labels, and box-zoom viewport arithmetic.
// Pure functions here; the canvas painting lives in render.ts.

import { MapPoint } from "./api.js";

export interface Viewport {
  x0: number;
  x1: number;
  y0: number;
  y1: number;
}

export function fullExtent(points: MapPoint[], pad = 0.08): Viewport {
  if (points.length === 0) {
    return { x0: -1, x1: 1, y0: -1, y1: 1 };
  }
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const p of points) {
    x0 = Math.min(x0, p.x);
    x1 = Math.max(x1, p.x);
    y0 = Math.min(y0, p.y);
    y1 = Math.max(y1, p.y);
  }
  const dx = (x1 - x0) || 1;
  const dy = (y1 - y0) || 1;
  return { x0: x0 - dx * pad, x1: x1 + dx * pad, y0: y0 - dy * pad, y1: y1 + dy * pad };
}

export function toPixel(
  p: { x: number; y: number },
  view: Viewport,
  width: number,
  height: number,
): { px: number; py: number } {
  const px = ((p.x - view.x0) / (view.x1 - view.x0)) * width;
  const py = height - ((p.y - view.y0) / (view.y1 - view.y0)) * height;
  return { px, py };
}

export function fromPixel(
  px: number,
  py: number,
  view: Viewport,
  width: number,
  height: number,
): { x: number; y: number } {
  return {
    x: view.x0 + (px / width) * (view.x1 - view.x0),
    y: view.y0 + ((height - py) / height) * (view.y1 - view.y0),
  };
}

/** Nearest point within `radius` pixels of the cursor, or null. */
export function hitTest(
  points: MapPoint[],
  px: number,
  py: number,
  view: Viewport,
  width: number,
  height: number,
  radius = 8,
): MapPoint | null {
  let best: MapPoint | null = null;
  let bestDist = radius * radius;
  for (const p of points) {
    const { px: qx, py: qy } = toPixel(p, view, width, height);
    const d = (qx - px) * (qx - px) + (qy - py) * (qy - py);
    if (d <= bestDist) {
      best = p;
      bestDist = d;
    }
  }
  return best;
}

/** Viewport for a dragged pixel box; falls back to the current view for
 * degenerate (click-sized) boxes. */
export function zoomTo(
  view: Viewport,
  ax: number,
  ay: number,
  bx: number,
  by: number,
  width: number,
  height: number,
): Viewport {
  if (Math.abs(ax - bx) < 5 || Math.abs(ay - by) < 5) {
    return view;
  }
  const a = fromPixel(Math.min(ax, bx), Math.max(ay, by), view, width, height);
  const b = fromPixel(Math.max(ax, bx), Math.min(ay, by), view, width, height);
  return { x0: a.x, x1: b.x, y0: a.y, y1: b.y };
}
