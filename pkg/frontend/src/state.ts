import type { Rendered, WireLatent } from "./api";

export interface StrokePoint {
  x: number;
  y: number;
}

export type Tool = "brush" | "eraser" | "edge";

export interface Stroke {
  tool: Tool;
  /** RGB in [0,1]; ignored for eraser and edge strokes. */
  color: [number, number, number];
  radius: number;
  points: StrokePoint[];
}

export interface CoarseToFineState {
  /** Fixed sub-vectors for scales 0..prefix.length-1. */
  prefix: number[][];
  gridSeed: number;
  grid: Rendered[] | null;
  /** Set once a candidate at the finest scale has been chosen. */
  final: Rendered | null;
}

export interface FusionState {
  a: Rendered | null;
  b: Rendered | null;
  takeFromA: boolean[];
  result: Rendered | null;
}

export interface EditHistoryEntry {
  latent: WireLatent;
  image_png_b64: string;
  loss: number;
  trace: number[];
  init_kind: string;
}

/** A block of pixels pasted onto the canvas as color constraints. */
export interface Patch {
  x: number;
  y: number;
  /** Rows x cols x RGB in [0,1]. */
  pixels: number[][][];
}

export interface EditState {
  strokes: Stroke[];
  patches: Patch[];
  history: EditHistoryEntry[];
}

export interface SessionState {
  version: 1;
  model: string | null;
  coarse: CoarseToFineState;
  fusion: FusionState;
  edit: EditState;
}

const KEY = "scalebranch-studio/session/v1";

export function emptySession(): SessionState {
  return {
    version: 1,
    model: null,
    coarse: { prefix: [], gridSeed: 0, grid: null, final: null },
    fusion: { a: null, b: null, takeFromA: [], result: null },
    edit: { strokes: [], patches: [], history: [] },
  };
}

export function saveSession(state: SessionState, storage: Storage = localStorage): void {
  storage.setItem(KEY, JSON.stringify(state));
}

export function loadSession(storage: Storage = localStorage): SessionState | null {
  const raw = storage.getItem(KEY);
  if (raw === null) return null;
  try {
    const parsed = JSON.parse(raw) as SessionState;
    return parsed.version === 1 ? parsed : null;
  } catch {
    return null; // corrupt entry; start fresh
  }
}

export function clearSession(storage: Storage = localStorage): void {
  storage.removeItem(KEY);
}

export const SESSION_KEY = KEY;
