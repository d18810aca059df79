// Typed client for the read-only analytics API. Every call is a plain GET;
// the fetch implementation is injectable so tests can record traffic.

export interface Recommendation {
  rank: number;
  cluster: number;
  label: string;
  score: number;
}

export interface RecommendResponse {
  cluster: number;
  label: string;
  isolated: boolean;
  recommendations: Recommendation[];
}

export interface AmbiguousCandidate {
  cluster: number;
  label: string;
}

export interface RankingRow {
  rank: number;
  prw: number;
  if03: number;
  title: string;
  flag: boolean;
}

export interface MapPoint {
  label: string;
  x: number;
  y: number;
}

export interface AgentRow {
  rank: number;
  requester: string;
  count: number;
  flagged: boolean;
}

export interface StatsReport {
  events: number;
  unique_referents: number;
  unique_requesters: number;
  referent_type_shares: Record<string, number>;
  journal_nodes: number;
  journal_edges: number;
  [key: string]: unknown;
}

export interface RecommendQuery {
  doi?: string;
  title?: string;
  issn?: string;
  year?: string;
  k?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public candidates: AmbiguousCandidate[] = [],
  ) {
    super(message);
  }
}

export type FetchLike = (url: string) => Promise<Response>;

function defaultFetch(url: string): Promise<Response> {
  return fetch(url); // no init object: plain GET by construction
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = defaultFetch,
  ) {}

  private async get<T>(path: string, params: Record<string, string>): Promise<T> {
    const query = new URLSearchParams(params).toString();
    const url = `${this.base}${path}${query ? "?" + query : ""}`;
    const response = await this.fetchFn(url);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(
        response.status,
        typeof body.error === "string" ? body.error : "unknown",
        typeof body.detail === "string" ? body.detail : response.statusText,
        Array.isArray(body.candidates) ? body.candidates : [],
      );
    }
    return body as T;
  }

  recommend(query: RecommendQuery): Promise<RecommendResponse> {
    const params: Record<string, string> = {};
    if (query.doi) params.doi = query.doi;
    if (query.title) params.title = query.title;
    if (query.issn) params.issn = query.issn;
    if (query.year) params.year = query.year;
    params.k = String(query.k ?? 10);
    return this.get("/api/recommend", params);
  }

  recommendCluster(cluster: number, k: number): Promise<RecommendResponse> {
    return this.get(`/api/recommend/${cluster}`, { k: String(k) });
  }

  async rankings(limit: number): Promise<RankingRow[]> {
    const body = await this.get<{ rows: RankingRow[] }>("/api/rankings", {
      limit: String(limit),
    });
    return body.rows;
  }

  async map(): Promise<MapPoint[]> {
    const body = await this.get<{ points: MapPoint[] }>("/api/map", {});
    return body.points;
  }

  async agents(limit: number): Promise<AgentRow[]> {
    const body = await this.get<{ rows: AgentRow[] }>("/api/agents", {
      limit: String(limit),
    });
    return body.rows;
  }

  stats(): Promise<StatsReport> {
    return this.get("/api/stats", {});
  }
}
