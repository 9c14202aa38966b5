// Quick-advice palette: canonical template sentences (guaranteed
// in-vocabulary server-side) and the board regions they name.

import type { Head, RegionJson } from "./types.js";

export type QuadrantId = "top_left" | "top_right" | "bottom_left" | "bottom_right";
export type HalfId = "left" | "right" | "top" | "bottom";
export type DirectionId = "up" | "down" | "left" | "right";

export const QUADRANTS: QuadrantId[] = ["top_left", "top_right", "bottom_left", "bottom_right"];
export const DIRECTIONS: DirectionId[] = ["up", "down", "left", "right"];
const HALVES: HalfId[] = ["left", "right", "top", "bottom"];

export const QUADRANT_PHRASE: Record<QuadrantId, string> = {
  top_left: "top left",
  top_right: "top right",
  bottom_left: "lower left",
  bottom_right: "lower right",
};

const HALF_PHRASE: Record<HalfId, string> = {
  left: "left half",
  right: "right half",
  top: "top half",
  bottom: "bottom half",
};

export function quadrantSentence(head: Head, q: QuadrantId): string {
  return `the ${head} is in the ${QUADRANT_PHRASE[q]}`;
}

export function directionSentence(d: DirectionId): string {
  return `move ${d}`;
}

// Board convention: x grows rightward, z grows upward; both span [-1, 1].
export function quadrantRegion(q: QuadrantId): RegionJson {
  const right = q === "top_right" || q === "bottom_right";
  const top = q === "top_left" || q === "top_right";
  return {
    x_min: right ? 0 : -1,
    x_max: right ? 1 : 0,
    z_min: top ? 0 : -1,
    z_max: top ? 1 : 0,
  };
}

export function halfRegion(h: HalfId): RegionJson {
  switch (h) {
    case "left":
      return { x_min: -1, x_max: 0, z_min: -1, z_max: 1 };
    case "right":
      return { x_min: 0, x_max: 1, z_min: -1, z_max: 1 };
    case "top":
      return { x_min: -1, x_max: 1, z_min: 0, z_max: 1 };
    case "bottom":
      return { x_min: -1, x_max: 1, z_min: -1, z_max: 0 };
  }
}

/** Region named by an advice sentence, if it contains a quadrant or half
 *  phrase. Lets the overlay be re-derived from session history alone, so a
 *  hard refresh reconstructs the same view after a palette click. */
export function regionFromAdviceText(text: string): RegionJson | null {
  const t = text.toLowerCase();
  for (const q of QUADRANTS) {
    if (t.includes(QUADRANT_PHRASE[q])) return quadrantRegion(q);
  }
  for (const h of HALVES) {
    if (t.includes(HALF_PHRASE[h])) return halfRegion(h);
  }
  return null;
}
