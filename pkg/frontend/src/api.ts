/** Thin typed client over the service HTTP API.

The console holds no write path of its own: every mutation below maps
one-to-one onto a documented endpoint. `fetchFn` is injectable so view
models can be tested against a scripted transport.
*/

import type {
  ClusterDetail,
  ClusterSummary,
  Health,
  PreviewResult,
  ReviewRow,
  ReviewVerdict,
  SubmissionOutcome,
} from "./types.js";

export interface ClientConfig {
  baseUrl: string;
  token?: string;
}

/** Non-2xx response decoded from the service's {error, detail} envelope. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  private readonly baseUrl: string;
  private readonly token: string | undefined;
  private readonly fetchFn: FetchLike;

  constructor(config: ClientConfig, fetchFn?: FetchLike) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.token = config.token;
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(path: string, init: RequestInit): Promise<T> {
    const headers: Record<string, string> = {
      "Content-Type": "application/json",
    };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchFn(this.baseUrl + path, {
      ...init,
      headers,
    });
    if (!response.ok) {
      let code = "error";
      let detail = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { error?: string; detail?: string };
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, code, detail);
    }
    return (await response.json()) as T;
  }

  private get<T>(path: string, params?: Record<string, string>): Promise<T> {
    const query = params ? "?" + new URLSearchParams(params).toString() : "";
    return this.request<T>(path + query, { method: "GET" });
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, { method: "POST", body: JSON.stringify(body) });
  }

  listReviews(state = "pending"): Promise<ReviewRow[]> {
    return this.get<{ reviews: ReviewRow[] }>("/v1/reviews", { state }).then(
      (body) => body.reviews,
    );
  }

  resolveReview(id: string, verdict: ReviewVerdict, reviewer?: string): Promise<ReviewRow> {
    return this.post<ReviewRow>(`/v1/reviews/${encodeURIComponent(id)}`, {
      verdict,
      reviewer: reviewer ?? null,
    });
  }

  submitMessage(text: string, language = "und"): Promise<SubmissionOutcome> {
    return this.post<SubmissionOutcome>("/v1/messages", { text, language });
  }

  previewMatch(text: string): Promise<PreviewResult> {
    return this.post<PreviewResult>("/v1/messages", { text, preview: true });
  }

  addManualMatch(idA: string, idB: string, reviewer?: string): Promise<{ cluster_id: number }> {
    return this.post<{ cluster_id: number }>("/v1/matches", {
      id_a: idA,
      id_b: idB,
      reviewer: reviewer ?? null,
    });
  }

  listClusters(minSize = 1): Promise<ClusterSummary[]> {
    return this.get<{ clusters: ClusterSummary[] }>("/v1/clusters", {
      min_size: String(minSize),
    }).then((body) => body.clusters);
  }

  clusterDetail(id: number): Promise<ClusterDetail> {
    return this.get<ClusterDetail>(`/v1/clusters/${id}`);
  }

  health(): Promise<Health> {
    return this.get<Health>("/v1/health");
  }
}
