// Top-down board renderer. View coordinates are an affine map of board
// units; everything inside the board rectangle is painted under a clip so
// overlays can never escape it.

import type { Head, PredictionJson, RegionJson, Vec3, WorldJson } from "./types.js";

const BOARD_MIN = -1.0;
const BOARD_MAX = 1.0;

export interface PixelPoint {
  px: number;
  py: number;
}

export interface PixelRect {
  px: number;
  py: number;
  w: number;
  h: number;
}

export class BoardTransform {
  readonly scale: number;
  readonly cx: number;
  readonly cy: number;

  constructor(width: number, height: number, margin = 16) {
    const span = BOARD_MAX - BOARD_MIN;
    this.scale = Math.max(1, Math.min((width - 2 * margin) / span, (height - 2 * margin) / span));
    this.cx = width / 2;
    this.cy = height / 2;
  }

  /** Board (x, z) to pixels; z points up on the board, y down on screen. */
  toPixel(x: number, z: number): PixelPoint {
    return { px: this.cx + x * this.scale, py: this.cy - z * this.scale };
  }

  boardRect(): PixelRect {
    const tl = this.toPixel(BOARD_MIN, BOARD_MAX);
    const side = (BOARD_MAX - BOARD_MIN) * this.scale;
    return { px: tl.px, py: tl.py, w: side, h: side };
  }

  /** Region to pixels, clamped to the board rectangle first. */
  regionToPixel(r: RegionJson): PixelRect {
    const clamp = (v: number) => Math.min(Math.max(v, BOARD_MIN), BOARD_MAX);
    const x0 = clamp(r.x_min);
    const x1 = clamp(r.x_max);
    const z0 = clamp(r.z_min);
    const z1 = clamp(r.z_max);
    const tl = this.toPixel(x0, z1);
    return { px: tl.px, py: tl.py, w: (x1 - x0) * this.scale, h: (z1 - z0) * this.scale };
  }
}

export interface Overlay {
  head: Head;
  region: RegionJson;
}

export interface GoldMarkers {
  source: Vec3;
  target: Vec3;
}

export interface BoardScene {
  world: WorldJson;
  predictions: PredictionJson[]; // oldest first; the latest is drawn solid
  overlays: Overlay[];
  gold: GoldMarkers | null;
}

export const OVERLAY_FILL: Record<Head, string> = {
  source: "rgba(230, 126, 34, 0.22)",
  target: "rgba(52, 152, 219, 0.22)",
};

const OVERLAY_EDGE: Record<Head, string> = {
  source: "rgba(230, 126, 34, 0.8)",
  target: "rgba(52, 152, 219, 0.8)",
};

const MARKER_COLOR: Record<Head, string> = { source: "#c0392b", target: "#2980b9" };
const GOLD_COLOR = "#27ae60";
const MARK = 6; // marker half-size in pixels

function drawCross(ctx: CanvasRenderingContext2D, p: PixelPoint): void {
  ctx.beginPath();
  ctx.moveTo(p.px - MARK, p.py - MARK);
  ctx.lineTo(p.px + MARK, p.py + MARK);
  ctx.moveTo(p.px - MARK, p.py + MARK);
  ctx.lineTo(p.px + MARK, p.py - MARK);
  ctx.stroke();
}

function drawCircle(ctx: CanvasRenderingContext2D, p: PixelPoint): void {
  ctx.beginPath();
  ctx.arc(p.px, p.py, MARK, 0, 2 * Math.PI);
  ctx.stroke();
}

/** Paint the scene and return the overlay rectangles in pixels. The rects
 *  (and a marker count) are also mirrored onto the canvas element's data
 *  attributes so scripted tests can observe draw state without a real 2d
 *  context. */
export function drawBoard(canvas: HTMLCanvasElement, scene: BoardScene): PixelRect[] {
  const t = new BoardTransform(canvas.width, canvas.height);
  const rects = scene.overlays.map((o) => t.regionToPixel(o.region));
  canvas.dataset.overlays = JSON.stringify(rects.map((r) => [r.px, r.py, r.w, r.h]));
  canvas.dataset.markers = String(2 * scene.predictions.length + (scene.gold ? 2 : 0));

  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    ctx = null; // DOM shims without canvas support
  }
  if (!ctx) return rects;

  const board = t.boardRect();
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.save();

  ctx.fillStyle = "#fcfcf7";
  ctx.fillRect(board.px, board.py, board.w, board.h);

  ctx.beginPath();
  ctx.rect(board.px, board.py, board.w, board.h);
  ctx.clip();

  // quadrant axes
  ctx.strokeStyle = "rgba(0, 0, 0, 0.12)";
  ctx.lineWidth = 1;
  const o = t.toPixel(0, 0);
  ctx.beginPath();
  ctx.moveTo(board.px, o.py);
  ctx.lineTo(board.px + board.w, o.py);
  ctx.moveTo(o.px, board.py);
  ctx.lineTo(o.px, board.py + board.h);
  ctx.stroke();

  // blocks as squares of one block length
  const side = scene.world.block_length * t.scale;
  for (const [bx, , bz] of scene.world.blocks) {
    const p = t.toPixel(bx, bz);
    ctx.fillStyle = "#d5d5cd";
    ctx.strokeStyle = "#9a9a92";
    ctx.fillRect(p.px - side / 2, p.py - side / 2, side, side);
    ctx.strokeRect(p.px - side / 2, p.py - side / 2, side, side);
  }

  // advice-region overlays
  for (let i = 0; i < scene.overlays.length; i++) {
    const head = scene.overlays[i].head;
    const r = rects[i];
    ctx.fillStyle = OVERLAY_FILL[head];
    ctx.fillRect(r.px, r.py, r.w, r.h);
    ctx.strokeStyle = OVERLAY_EDGE[head];
    ctx.strokeRect(r.px, r.py, r.w, r.h);
  }

  // predictions: source is an 'x', target a circle; older turns faded
  ctx.lineWidth = 2;
  scene.predictions.forEach((pred, i) => {
    ctx.globalAlpha = i === scene.predictions.length - 1 ? 1.0 : 0.3;
    ctx.strokeStyle = MARKER_COLOR.source;
    drawCross(ctx, t.toPixel(pred.source[0], pred.source[2]));
    ctx.strokeStyle = MARKER_COLOR.target;
    drawCircle(ctx, t.toPixel(pred.target[0], pred.target[2]));
  });
  ctx.globalAlpha = 1.0;

  // gold markers (debug view)
  if (scene.gold) {
    ctx.strokeStyle = GOLD_COLOR;
    drawCross(ctx, t.toPixel(scene.gold.source[0], scene.gold.source[2]));
    drawCircle(ctx, t.toPixel(scene.gold.target[0], scene.gold.target[2]));
  }

  ctx.restore();
  ctx.strokeStyle = "#444";
  ctx.lineWidth = 1.5;
  ctx.strokeRect(board.px, board.py, board.w, board.h);
  return rects;
}

export function clearBoard(canvas: HTMLCanvasElement): void {
  canvas.dataset.overlays = "[]";
  canvas.dataset.markers = "0";
  let ctx: CanvasRenderingContext2D | null = null;
  try {
    ctx = canvas.getContext("2d");
  } catch {
    ctx = null;
  }
  if (ctx) ctx.clearRect(0, 0, canvas.width, canvas.height);
}
