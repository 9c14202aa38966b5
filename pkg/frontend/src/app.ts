// DOM controller. Single active session per tab; optimistic UI is disabled —
// every transition waits for the backend response, then re-renders from the
// returned session JSON.

import { ApiClient, ApiError } from "./api.js";
import { clearBoard, drawBoard, type BoardScene } from "./board.js";
import {
  DIRECTIONS,
  QUADRANTS,
  QUADRANT_PHRASE,
  directionSentence,
  quadrantSentence,
} from "./palette.js";
import { controlsFor, describeTurn, overlaysFor } from "./state.js";
import type { Head, OracleJson, SessionJson } from "./types.js";

const PROTOCOLS = [
  "baseline",
  "restrictive",
  "corrective",
  "retry",
  "selfgen_union",
  "selfgen_input_specific",
];

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

let client: ApiClient;
let session: SessionJson | null = null;
let oracle: OracleJson | null = null;
let busy = false;

let protocolSel: HTMLSelectElement;
let exampleInput: HTMLInputElement;
let newBtn: HTMLButtonElement;
let headSel: HTMLSelectElement;
let board: HTMLCanvasElement;
let quadrantPad: HTMLDivElement;
let directionPad: HTMLDivElement;
let adviceRow: HTMLDivElement;
let adviceInput: HTMLInputElement;
let sendBtn: HTMLButtonElement;
let retryBtn: HTMLButtonElement;
let acceptBtn: HTMLButtonElement;
let oracleChk: HTMLInputElement;
let oracleOut: HTMLPreElement;
let banner: HTMLDivElement;
let bannerText: HTMLSpanElement;
let bannerClose: HTMLButtonElement;
let hint: HTMLDivElement;
let phaseSpan: HTMLSpanElement;
let sessionSpan: HTMLSpanElement;
let instructionP: HTMLParagraphElement;
let historyList: HTMLOListElement;

export function initApp(baseUrl = ""): void {
  client = new ApiClient(baseUrl);
  session = null;
  oracle = null;
  busy = false;

  protocolSel = $("protocol");
  exampleInput = $("example-id");
  newBtn = $("new-session");
  headSel = $("head");
  board = $("board");
  quadrantPad = $("quadrant-pad");
  directionPad = $("direction-pad");
  adviceRow = $("advice-row");
  adviceInput = $("advice-text");
  sendBtn = $("send-advice");
  retryBtn = $("retry");
  acceptBtn = $("accept");
  oracleChk = $("oracle-toggle");
  oracleOut = $("oracle-out");
  banner = $("banner");
  bannerText = $("banner-text");
  bannerClose = $("banner-close");
  hint = $("hint");
  phaseSpan = $("phase");
  sessionSpan = $("session-label");
  instructionP = $("instruction");
  historyList = $("history");

  protocolSel.innerHTML = "";
  for (const p of PROTOCOLS) {
    const opt = document.createElement("option");
    opt.value = p;
    opt.textContent = p.replaceAll("_", " ");
    protocolSel.appendChild(opt);
  }

  quadrantPad.innerHTML = "";
  for (const q of QUADRANTS) {
    const btn = document.createElement("button");
    btn.id = `quad-${q}`;
    btn.textContent = QUADRANT_PHRASE[q];
    btn.title = quadrantSentence("target", q);
    btn.onclick = () => submitAdvice(quadrantSentence(selectedHead(), q));
    quadrantPad.appendChild(btn);
  }
  directionPad.innerHTML = "";
  for (const d of DIRECTIONS) {
    const btn = document.createElement("button");
    btn.id = `dir-${d}`;
    btn.textContent = directionSentence(d);
    btn.onclick = () => submitAdvice(directionSentence(d));
    directionPad.appendChild(btn);
  }

  newBtn.onclick = () => {
    void transition(async () => {
      oracle = null;
      return client.createSession(protocolSel.value, exampleInput.value.trim() || null);
    });
  };
  sendBtn.onclick = () => {
    const text = adviceInput.value.trim();
    if (text) submitAdvice(text);
  };
  adviceInput.onkeydown = (e) => {
    if (e.key === "Enter") sendBtn.click();
  };
  retryBtn.onclick = () => {
    if (session) void transition(() => client.retry(session!.session_id));
  };
  acceptBtn.onclick = () => {
    if (session) void transition(() => client.accept(session!.session_id));
  };
  headSel.onchange = () => render();
  oracleChk.onchange = () => {
    if (oracleChk.checked && session) {
      void refreshOracle().then(render);
    } else {
      oracle = null;
      render();
    }
  };
  bannerClose.onclick = () => {
    banner.hidden = true;
  };

  render();
}

const selectedHead = (): Head => (headSel.value === "source" ? "source" : "target");

function submitAdvice(text: string): void {
  if (!session) return;
  void transition(async () => {
    const next = await client.sendAdvice(session!.session_id, selectedHead(), text);
    adviceInput.value = "";
    return next;
  });
}

/** Run one backend mutation; map failures to the right surface: 422 advice
 *  problems become an inline hint, 409 re-syncs from GET, everything else
 *  lands in the banner. */
async function transition(fn: () => Promise<SessionJson>): Promise<void> {
  busy = true;
  hint.textContent = "";
  render();
  try {
    session = await fn();
    if (oracleChk.checked) await refreshOracle();
  } catch (err) {
    if (err instanceof ApiError && err.status === 422 && err.code === "untokenizable_advice") {
      hint.textContent = err.message;
    } else if (err instanceof ApiError && err.status === 409) {
      showBanner(`session moved on: ${err.message}`);
      if (session) {
        try {
          session = await client.getSession(session.session_id);
        } catch {
          // keep the stale view; the banner already says we are out of sync
        }
      }
    } else if (err instanceof ApiError) {
      const detail = err.expected.length ? ` (expected: ${err.expected.join(", ")})` : "";
      showBanner(`${err.message}${detail}`);
    } else {
      showBanner(String(err));
    }
  } finally {
    busy = false;
    render();
  }
}

async function refreshOracle(): Promise<void> {
  if (!session) return;
  try {
    oracle = await client.oracle(session.session_id);
  } catch (err) {
    oracle = null;
    showBanner(err instanceof ApiError ? err.message : String(err));
  }
}

function showBanner(message: string): void {
  bannerText.textContent = message;
  banner.hidden = false;
}

function formatOracle(o: OracleJson): string {
  const f = (v: [number, number, number]) => `(${v[0].toFixed(2)}, ${v[2].toFixed(2)})`;
  const lines = [
    `gold source ${f(o.gold_source)}  error ${o.errors.source.toFixed(3)}`,
    `gold target ${f(o.gold_target)}  error ${o.errors.target.toFixed(3)}`,
  ];
  if (o.advice) {
    const said = Object.entries(o.advice.sentences)
      .map(([head, text]) => `${head}: “${text}”`)
      .join(", ");
    lines.push(`oracle would send ${o.advice.kind}${said ? ` ${said}` : ""}`);
  }
  return lines.join("\n");
}

function render(): void {
  const s = session;
  sessionSpan.textContent = s ? `${s.protocol} · ${s.session_id.slice(0, 8)}` : "—";
  phaseSpan.textContent = s ? s.phase : "no session";
  instructionP.textContent = s ? s.example.instruction : "";

  historyList.innerHTML = "";
  if (s) {
    s.history.forEach((turn, i) => {
      const li = document.createElement("li");
      li.textContent = describeTurn(turn, i);
      historyList.appendChild(li);
    });
  }

  // visibility follows the protocol; enablement follows expected_events
  const proto = s?.protocol;
  quadrantPad.hidden = proto !== "restrictive";
  directionPad.hidden = proto !== "corrective";
  adviceRow.hidden = proto !== "restrictive" && proto !== "corrective";
  retryBtn.hidden = proto !== "retry";
  acceptBtn.hidden = !(proto === "restrictive" || proto === "corrective" || proto === "retry");

  const c = controlsFor(s ? s.expected_events : []);
  for (const q of QUADRANTS) {
    $(`quad-${q}`).toggleAttribute("disabled", busy || !c.quadrantPalette);
  }
  for (const d of DIRECTIONS) {
    $(`dir-${d}`).toggleAttribute("disabled", busy || !c.directionPalette);
  }
  adviceInput.disabled = busy || !c.adviceBox;
  sendBtn.disabled = busy || !c.adviceBox;
  retryBtn.disabled = busy || !c.retry;
  acceptBtn.disabled = busy || !c.accept;
  newBtn.disabled = busy;
  oracleChk.disabled = busy || !s;

  if (s) {
    const scene: BoardScene = {
      world: s.board,
      predictions: s.history.map((t) => t.prediction),
      overlays: overlaysFor(s),
      gold: oracleChk.checked && oracle ? { source: oracle.gold_source, target: oracle.gold_target } : null,
    };
    drawBoard(board, scene);
  } else {
    clearBoard(board);
  }

  const showOracle = Boolean(oracleChk.checked && oracle);
  oracleOut.hidden = !showOracle;
  oracleOut.textContent = showOracle && oracle ? formatOracle(oracle) : "";
}

// Browser boot: index.html opts in via <body data-autoinit="1">; tests call
// initApp() themselves with the service URL.
if (typeof document !== "undefined" && document.body?.dataset.autoinit === "1") {
  const boot = () => initApp("");
  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", boot);
  } else {
    boot();
  }
}
