/**
 * Edit-canvas model: strokes live as vector polylines (lossless undo,
 * resolution-independent) and are rasterized to constraint planes only
 * when a job is submitted.
 */

import type { EditRequestBody } from "./api";
import type { Patch, Stroke } from "./state";

export interface RasterPlanes {
  /** H x W x 3 color targets in [0,1]; only meaningful where mask is 1. */
  color: number[][][];
  /** H x W; 1 = color constraint applies here. */
  mask: number[][];
  /** H x W; 1 along edge-pen paths. */
  edge: number[][];
  hasColor: boolean;
  hasEdge: boolean;
}

function zeros2d(h: number, w: number): number[][] {
  return Array.from({ length: h }, () => Array(w).fill(0));
}

/** Stamp a filled disc into the planes; later strokes override earlier ones. */
function stamp(planes: RasterPlanes, stroke: Stroke, cx: number, cy: number): void {
  const h = planes.mask.length;
  const w = planes.mask[0].length;
  const r = stroke.radius;
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(h - 1, Math.ceil(cy + r));
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(w - 1, Math.ceil(cx + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if ((x - cx) ** 2 + (y - cy) ** 2 > r * r) continue;
      if (stroke.tool === "brush") {
        planes.mask[y][x] = 1;
        planes.color[y][x] = [...stroke.color];
      } else if (stroke.tool === "eraser") {
        planes.mask[y][x] = 0;
        planes.color[y][x] = [0, 0, 0];
      } else {
        planes.edge[y][x] = 1;
      }
    }
  }
}

/**
 * Pasted patches form the base layer; strokes apply on top of them, so a
 * patch can be touched up with the brush or partly removed with the eraser.
 */
export function rasterize(
  strokes: Stroke[],
  height: number,
  width: number,
  patches: Patch[] = [],
): RasterPlanes {
  const planes: RasterPlanes = {
    color: Array.from({ length: height }, () => Array.from({ length: width }, () => [0, 0, 0])),
    mask: zeros2d(height, width),
    edge: zeros2d(height, width),
    hasColor: false,
    hasEdge: false,
  };
  for (const patch of patches) {
    patch.pixels.forEach((row, dy) => {
      const y = patch.y + dy;
      if (y < 0 || y >= height) return;
      row.forEach((rgb, dx) => {
        const x = patch.x + dx;
        if (x < 0 || x >= width) return;
        planes.color[y][x] = [...rgb];
        planes.mask[y][x] = 1;
      });
    });
  }
  for (const stroke of strokes) {
    if (stroke.points.length === 0) continue;
    let prev = stroke.points[0];
    stamp(planes, stroke, prev.x, prev.y);
    for (const pt of stroke.points.slice(1)) {
      // interpolate so fast drags leave no gaps
      const dist = Math.hypot(pt.x - prev.x, pt.y - prev.y);
      const steps = Math.max(1, Math.ceil(dist / Math.max(1, stroke.radius / 2)));
      for (let s = 1; s <= steps; s++) {
        const f = s / steps;
        stamp(planes, stroke, prev.x + f * (pt.x - prev.x), prev.y + f * (pt.y - prev.y));
      }
      prev = pt;
    }
  }
  planes.hasColor = planes.mask.some((row) => row.some((v) => v > 0));
  planes.hasEdge = planes.edge.some((row) => row.some((v) => v > 0));
  return planes;
}

/** True when the canvas carries no effective constraint (Run stays disabled). */
export function isEmptyCanvas(
  strokes: Stroke[],
  height: number,
  width: number,
  patches: Patch[] = [],
): boolean {
  const planes = rasterize(strokes, height, width, patches);
  return !planes.hasColor && !planes.hasEdge;
}

/**
 * Build the /edit request parts from the canvas.  A color-only canvas omits
 * the edge plane entirely, which disables the edge term server-side; an
 * edge-only canvas likewise omits color and mask.  Returns null when there
 * is nothing to submit.
 */
export function toEditConstraints(
  strokes: Stroke[],
  height: number,
  width: number,
  patches: Patch[] = [],
): Pick<EditRequestBody, "color" | "mask" | "edge"> | null {
  const planes = rasterize(strokes, height, width, patches);
  if (!planes.hasColor && !planes.hasEdge) return null;
  const out: Pick<EditRequestBody, "color" | "mask" | "edge"> = {};
  if (planes.hasColor) {
    out.color = planes.color;
    out.mask = planes.mask;
  }
  if (planes.hasEdge) {
    out.edge = planes.edge;
  }
  return out;
}
