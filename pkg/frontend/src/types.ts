/** Wire types for the /api/v1 endpoints. */

export interface Roi {
  label: string;
  row0: number;
  col0: number;
  height: number;
  width: number;
}

export interface MetricsRecord {
  rmse: number | null;
  cnr: number | null;
  roi_std: Record<string, number>;
  resolution_proxy: number | null;
  rmse_unavailable?: boolean;
}

export interface CandidateMeta {
  index: number;
  iteration: number;
  loss: number | null;
  distance_to_target: number | null;
  distance_to_t_low: number | null;
  distance_to_t_high: number | null;
  metrics: MetricsRecord | null;
}

export type DirectionStatus =
  | "idle"
  | "building"
  | "complete"
  | "cancelled"
  | "failed";

export type Direction = "low_noise" | "high_resolution";

export interface CurveSummary {
  indices: number[];
  min_index?: number;
  max_index?: number;
  status?: string;
  directions: Record<Direction, DirectionStatus>;
  k?: number;
  candidates: Record<string, CandidateMeta>;
}

export interface SessionCreated {
  id: string;
  checkpoint: string;
  candidate0: CandidateMeta;
  curve: CurveSummary;
}

export interface RawImage {
  height: number;
  width: number;
  /** HU values, row-major */
  values: Float32Array;
}
