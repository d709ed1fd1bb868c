/** Typed client for the session service. At most one in-flight fetch per
 * resource kind: a newer request aborts the previous one (rapid slider
 * movement cancels stale image fetches). */

import { parseImage } from "./imgformat.js";
import type {
  CurveSummary,
  Direction,
  MetricsRecord,
  RawImage,
  Roi,
  SessionCreated,
} from "./types.js";

export class ApiClient {
  private controllers = new Map<string, AbortController>();

  constructor(private baseUrl: string = "") {}

  private async request(
    kind: string,
    path: string,
    init: RequestInit = {},
  ): Promise<Response> {
    this.controllers.get(kind)?.abort();
    const controller = new AbortController();
    this.controllers.set(kind, controller);
    const resp = await fetch(this.baseUrl + path, {
      ...init,
      signal: controller.signal,
    });
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`${resp.status} ${path}: ${body}`);
    }
    return resp;
  }

  async listCheckpoints(): Promise<{ id: string; kind: string }[]> {
    const resp = await this.request("checkpoints", "/api/v1/checkpoints");
    return (await resp.json()).checkpoints;
  }

  async createSession(payload: {
    checkpoint: string;
    image_b64?: string;
    clean_b64?: string;
    phantom?: object;
    flat_roi?: Roi;
  }): Promise<SessionCreated> {
    const resp = await this.request("session", "/api/v1/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    return resp.json();
  }

  async getCurve(sessionId: string): Promise<CurveSummary> {
    const resp = await this.request(
      "curve",
      `/api/v1/sessions/${sessionId}/curve`,
    );
    return resp.json();
  }

  async startSweep(
    sessionId: string,
    direction: Direction,
    config: object = {},
  ): Promise<void> {
    await this.request("sweep", `/api/v1/sessions/${sessionId}/sweeps`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ direction, config }),
    });
  }

  async cancelSweep(sessionId: string, direction: Direction): Promise<void> {
    await this.request(
      "sweep-cancel",
      `/api/v1/sessions/${sessionId}/sweeps/${direction}`,
      { method: "DELETE" },
    );
  }

  /** Raw float candidate; windowing happens client-side for display. */
  async getCandidateRaw(
    sessionId: string,
    index: number,
    fetchKind = "candidate",
  ): Promise<RawImage> {
    const resp = await this.request(
      fetchKind,
      `/api/v1/sessions/${sessionId}/candidates/${index}?format=raw`,
    );
    return parseImage(await resp.arrayBuffer());
  }

  async getCandidateMetrics(
    sessionId: string,
    index: number,
    rois: Roi[],
    cnr?: { foreground: string; background: string },
  ): Promise<MetricsRecord> {
    const resp = await this.request(
      "metrics",
      `/api/v1/sessions/${sessionId}/candidates/${index}/metrics`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ rois, cnr }),
      },
    );
    return resp.json();
  }
}
