/**
 * Pure state transitions for the coarse-to-fine selection loop.
 *
 * The server is stateless: each candidate response carries its full latent,
 * and the client keeps only the prefix of sub-vectors the user has locked
 * in so far.  `prefix.length` IS the current scale.
 */

import type { Rendered } from "./api";
import type { CoarseToFineState } from "./state";

export function currentScale(c: CoarseToFineState): number {
  return c.prefix.length;
}

export function isComplete(c: CoarseToFineState, branches: number): boolean {
  return c.final !== null && c.prefix.length === branches;
}

/** Fresh loop: nothing locked, no grid yet. */
export function resetLoop(seed: number): CoarseToFineState {
  return { prefix: [], gridSeed: seed, grid: null, final: null };
}

/**
 * Lock the chosen candidate's sub-vector at the current scale.  At the
 * finest scale the candidate's latent is complete, so it becomes the
 * session's final image verbatim — rendering it again through /generate
 * must reproduce the same bytes.
 */
export function applySelection(
  c: CoarseToFineState,
  candidate: Rendered,
  branches: number,
): CoarseToFineState {
  const scale = currentScale(c);
  if (scale >= branches) throw new Error("selection past the finest scale");
  const sub = candidate.latent.subvectors[scale];
  const prefix = [...c.prefix, [...sub]];
  return {
    prefix,
    gridSeed: c.gridSeed,
    grid: null,
    final: prefix.length === branches ? candidate : null,
  };
}

/**
 * Re-open an earlier scale: keep locked sub-vectors below it, drop
 * everything at or above it (finer choices no longer apply).
 */
export function backTo(c: CoarseToFineState, scale: number): CoarseToFineState {
  if (scale < 0 || scale > c.prefix.length) throw new Error(`bad scale ${scale}`);
  return { prefix: c.prefix.slice(0, scale), gridSeed: c.gridSeed, grid: null, final: null };
}
