/** Cross-scale fusion: which sub-vectors come from slot A vs slot B. */

export function takeList(toggles: boolean[]): number[] {
  const out: number[] = [];
  toggles.forEach((fromA, t) => {
    if (fromA) out.push(t);
  });
  return out;
}

export interface FusePreset {
  name: string;
  toggles: (branches: number) => boolean[];
}

/** The two classic compositions: coarse structure from one side, detail from the other. */
export const FUSE_PRESETS: FusePreset[] = [
  {
    name: "structure A, detail B",
    toggles: (n) => Array.from({ length: n }, (_, t) => t === 0),
  },
  {
    name: "structure B, detail A",
    toggles: (n) => Array.from({ length: n }, (_, t) => t !== 0),
  },
  { name: "all A", toggles: (n) => Array(n).fill(true) },
  { name: "all B", toggles: (n) => Array(n).fill(false) },
];
