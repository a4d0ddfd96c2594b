/** Types mirroring the service JSON contracts, plus a sequenced client.
 *
 * The client allows one in-flight query; responses arriving for anything
 * but the newest sequence number are discarded, so a slow request can
 * never overwrite the result of a later one.
 */

export interface QueryRequest {
  text?: string;
  yaml?: string;
  bbox?: [number, number, number, number];
  max_results?: number;
}

export interface ResolutionProperty {
  descriptor: string;
  bundle_id: string;
  keys: string[];
  score: number;
}

export interface ResolutionSlot {
  entity_id: number;
  descriptor: string;
  bundle_id: string;
  score: number;
  properties: ResolutionProperty[];
}

export interface PointGeometry {
  type: "Point";
  coordinates: [number, number];
}

export interface PolygonGeometry {
  type: "Polygon";
  coordinates: [number, number][][];
}

export interface LineGeometry {
  type: "LineString";
  coordinates: [number, number][];
}

export type FeatureGeometry = PointGeometry | PolygonGeometry | LineGeometry;

export interface FeatureProperties {
  slot_id: number;
  assignment_index: number;
  osm_kind: string;
  osm_id: number;
  tags: Record<string, string>;
  centroid: { lat: number; lon: number };
  links: Record<string, string>;
}

export interface ResultFeature {
  type: "Feature";
  geometry: FeatureGeometry;
  properties: FeatureProperties;
}

export interface QueryResponse {
  status: "ok";
  ir: string;
  resolution: ResolutionSlot[];
  results: { type: "FeatureCollection"; features: ResultFeature[] };
  diagnostics: {
    warnings: string[];
    timings_ms: Record<string, number>;
    candidate_counts: Record<string, number>;
    assignments: number;
    truncated: boolean;
  };
}

export interface BundleSuggestion {
  bundle_id: string;
  score: number;
}

export interface ErrorDetail {
  status: "error";
  kind: string;
  message: string;
  span?: [number, number];
  violations?: { path: string; message: string }[];
  slot_path?: string;
  descriptor?: string;
  name?: string;
  suggestions?: BundleSuggestion[] | string[];
}

export type QueryOutcome =
  | { ok: true; body: QueryResponse }
  | { ok: false; status: number; detail: ErrorDetail };

interface FetchResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string, init: RequestInit) => Promise<FetchResponse>;

function asDetail(status: number, payload: unknown): ErrorDetail {
  if (payload && typeof payload === "object" && "detail" in payload) {
    const detail = (payload as { detail: unknown }).detail;
    if (detail && typeof detail === "object" && "kind" in detail) {
      return detail as ErrorDetail;
    }
    return { status: "error", kind: "http", message: JSON.stringify(detail) };
  }
  return { status: "error", kind: "http", message: `HTTP ${status}` };
}

export async function postQuery(
  baseUrl: string,
  request: QueryRequest,
  fetchFn: FetchLike,
): Promise<QueryOutcome> {
  let response: FetchResponse;
  try {
    response = await fetchFn(`${baseUrl}/v1/query`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
  } catch (err) {
    return {
      ok: false,
      status: 0,
      detail: { status: "error", kind: "network", message: String(err) },
    };
  }
  const payload = await response.json().catch(() => null);
  if (response.status === 200) {
    return { ok: true, body: payload as QueryResponse };
  }
  return { ok: false, status: response.status, detail: asDetail(response.status, payload) };
}

/** Resolves to null when a newer submit superseded this one. */
export class SequencedClient {
  private seq = 0;

  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike,
  ) {}

  get currentSeq(): number {
    return this.seq;
  }

  async submit(request: QueryRequest): Promise<{ seq: number; outcome: QueryOutcome } | null> {
    this.seq += 1;
    const seq = this.seq;
    const outcome = await postQuery(this.baseUrl, request, this.fetchFn);
    if (seq !== this.seq) {
      return null;
    }
    return { seq, outcome };
  }
}
