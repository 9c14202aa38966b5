// Wire types for the /v1/ session API. These mirror the server's JSON
// verbatim; the UI never invents fields of its own.

export type Vec3 = [number, number, number];

export type Head = "source" | "target";

export type Phase = "awaiting_predict" | "awaiting_feedback" | "done";

export type ProtocolId =
  | "baseline"
  | "restrictive"
  | "corrective"
  | "retry"
  | "selfgen_union"
  | "selfgen_input_specific";

export interface WorldJson {
  blocks: Vec3[];
  block_length: number;
}

export interface ExampleJson {
  id: string;
  instruction: string;
  world: WorldJson;
  source_index: number;
  gold_source: Vec3;
  gold_target: Vec3;
}

export interface PredictionJson {
  source: Vec3;
  target: Vec3;
  advice_used: Record<string, string | null>;
}

export interface EventJson {
  kind: string;
  sentences: Record<string, string>;
  heads: string[];
}

export interface TurnJson {
  prediction: PredictionJson;
  event: EventJson | null;
}

export interface RegionJson {
  x_min: number;
  x_max: number;
  z_min: number;
  z_max: number;
}

export interface RegionPredictionJson {
  probs: number[];
  top1: string;
  top2: string;
}

export interface SessionJson {
  session_id: string;
  protocol: ProtocolId;
  phase: Phase;
  example: ExampleJson;
  history: TurnJson[];
  models: Record<string, string>;
  retry_used: boolean;
  advice_regions: Record<string, RegionJson[]>;
  expected_events: string[];
  region_predictions?: Record<string, RegionPredictionJson>;
  board: WorldJson;
  prediction: PredictionJson | null;
}

export interface OracleJson {
  gold_source: Vec3;
  gold_target: Vec3;
  errors: Record<string, number>;
  advice: EventJson | null;
}

export interface ModelInfoJson {
  id: string;
  architecture: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  expected?: string[];
}
