import { describe, expect, test } from "vitest";

import { controlsFor, describeTurn, overlaysFor } from "../src/state.js";
import { quadrantRegion } from "../src/palette.js";
import type { PredictionJson, SessionJson, TurnJson } from "../src/types.js";

const prediction = (sx = 0.1, tz = -0.4): PredictionJson => ({
  source: [sx, 0.1, 0.2],
  target: [0.5, 0.1, tz],
  advice_used: { source: null, target: null },
});

function makeSession(overrides: Partial<SessionJson> = {}): SessionJson {
  return {
    session_id: "abc123",
    protocol: "restrictive",
    phase: "awaiting_feedback",
    example: {
      id: "ex-1",
      instruction: "move the block",
      world: { blocks: [[0, 0.1, 0]], block_length: 0.1524 },
      source_index: 0,
      gold_source: [0, 0.1, 0],
      gold_target: [0.5, 0.1, 0.5],
    },
    history: [{ prediction: prediction(), event: null }],
    models: { predictor: "restrictive" },
    retry_used: false,
    advice_regions: {},
    expected_events: ["restrictive_advice", "accept"],
    board: { blocks: [[0, 0.1, 0]], block_length: 0.1524 },
    prediction: prediction(),
    ...overrides,
  };
}

describe("controlsFor", () => {
  test("restrictive session awaiting feedback", () => {
    const c = controlsFor(["restrictive_advice", "accept"]);
    expect(c.quadrantPalette).toBe(true);
    expect(c.adviceBox).toBe(true);
    expect(c.accept).toBe(true);
    expect(c.directionPalette).toBe(false);
    expect(c.retry).toBe(false);
  });

  test("corrective enables the direction palette instead", () => {
    const c = controlsFor(["corrective_advice", "accept"]);
    expect(c.directionPalette).toBe(true);
    expect(c.adviceBox).toBe(true);
    expect(c.quadrantPalette).toBe(false);
  });

  test("retry session exposes only retry and accept", () => {
    const c = controlsFor(["retry", "accept"]);
    expect(c.retry).toBe(true);
    expect(c.accept).toBe(true);
    expect(c.adviceBox).toBe(false);
    expect(c.quadrantPalette).toBe(false);
  });

  test("done sessions enable nothing", () => {
    const c = controlsFor([]);
    expect(Object.values(c).every((v) => v === false)).toBe(true);
  });
});

describe("overlaysFor", () => {
  test("machine-issued regions come straight from advice_regions", () => {
    const s = makeSession({
      protocol: "retry",
      advice_regions: {
        source: [quadrantRegion("top_left")],
        target: [quadrantRegion("bottom_right")],
      },
      expected_events: ["retry", "accept"],
    });
    const overlays = overlaysFor(s);
    expect(overlays).toHaveLength(2);
    expect(overlays[0]).toEqual({ head: "source", region: quadrantRegion("top_left") });
    expect(overlays[1]).toEqual({ head: "target", region: quadrantRegion("bottom_right") });
  });

  test("regions named by advice sentences are re-derived from history", () => {
    const advised: TurnJson = {
      prediction: prediction(),
      event: {
        kind: "restrictive_advice",
        sentences: { target: "the target is in the lower left" },
        heads: [],
      },
    };
    const s = makeSession({
      phase: "done",
      history: [advised, { prediction: prediction(0.2, -0.6), event: null }],
      expected_events: [],
    });
    expect(overlaysFor(s)).toEqual([
      { head: "target", region: quadrantRegion("bottom_left") },
    ]);
  });

  test("sentence-derived duplicates of server regions collapse", () => {
    const s = makeSession({
      protocol: "retry",
      advice_regions: { target: [quadrantRegion("top_right")] },
      history: [
        {
          prediction: prediction(),
          event: {
            kind: "retry",
            sentences: { target: "the target is in the top right" },
            heads: ["target"],
          },
        },
      ],
    });
    expect(overlaysFor(s)).toHaveLength(1);
  });

  test("free text without a region phrase adds no overlay", () => {
    const s = makeSession({
      history: [
        {
          prediction: prediction(),
          event: {
            kind: "corrective_advice",
            sentences: { target: "move down" },
            heads: [],
          },
        },
        { prediction: prediction(), event: null },
      ],
    });
    expect(overlaysFor(s)).toEqual([]);
  });
});

describe("describeTurn", () => {
  test("coordinates and the event sentence", () => {
    const turn: TurnJson = {
      prediction: {
        source: [0.123, 0.1, 0.456],
        target: [-0.5, 0.1, -0.25],
        advice_used: { source: null, target: null },
      },
      event: {
        kind: "restrictive_advice",
        sentences: { target: "the target is in the top left" },
        heads: [],
      },
    };
    const line = describeTurn(turn, 0);
    expect(line).toContain("#1 source (0.12, 0.46) target (-0.50, -0.25)");
    expect(line).toContain("restrictive_advice");
    expect(line).toContain("the target is in the top left");
  });

  test("turns without an event stay plain", () => {
    const line = describeTurn({ prediction: prediction(), event: null }, 1);
    expect(line.startsWith("#2 ")).toBe(true);
    expect(line).not.toContain("—");
  });
});
