// Pure projections of the backend session JSON into view state. Nothing in
// here talks to the network or the DOM, so a hard refresh plus one GET
// reconstructs the identical view.

import type { Overlay } from "./board.js";
import type { Head, RegionJson, SessionJson, TurnJson, Vec3 } from "./types.js";
import { regionFromAdviceText } from "./palette.js";

export interface ViewControls {
  quadrantPalette: boolean;
  directionPalette: boolean;
  adviceBox: boolean;
  retry: boolean;
  accept: boolean;
}

/** Controls are enabled iff the backend will accept the matching event. */
export function controlsFor(expected: string[]): ViewControls {
  const has = (kind: string) => expected.includes(kind);
  return {
    quadrantPalette: has("restrictive_advice"),
    directionPalette: has("corrective_advice"),
    adviceBox: has("restrictive_advice") || has("corrective_advice"),
    retry: has("retry"),
    accept: has("accept"),
  };
}

const regionKey = (r: RegionJson) => `${r.x_min},${r.x_max},${r.z_min},${r.z_max}`;

/** Advice-region overlays for a session: machine-issued regions come back
 *  verbatim in advice_regions; regions named by advice sentences (palette
 *  clicks, recognizable free text) are re-derived from the history. */
export function overlaysFor(session: SessionJson): Overlay[] {
  const out: Overlay[] = [];
  const seen = new Set<string>();
  const push = (head: Head, region: RegionJson) => {
    const key = `${head}|${regionKey(region)}`;
    if (!seen.has(key)) {
      seen.add(key);
      out.push({ head, region });
    }
  };
  for (const [head, regions] of Object.entries(session.advice_regions)) {
    for (const region of regions) push(head as Head, region);
  }
  for (const turn of session.history) {
    if (!turn.event) continue;
    for (const [head, text] of Object.entries(turn.event.sentences)) {
      const region = regionFromAdviceText(text);
      if (region) push(head as Head, region);
    }
  }
  return out;
}

const fmt = (v: Vec3) => `(${v[0].toFixed(2)}, ${v[2].toFixed(2)})`;

export function describeTurn(turn: TurnJson, index: number): string {
  const p = turn.prediction;
  let line = `#${index + 1} source ${fmt(p.source)} target ${fmt(p.target)}`;
  if (turn.event) {
    const sentences = Object.entries(turn.event.sentences)
      .map(([head, text]) => `${head}: “${text}”`)
      .join(", ");
    line += ` — ${turn.event.kind}${sentences ? ` ${sentences}` : ""}`;
  }
  return line;
}
