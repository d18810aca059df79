// Recorded-response transport for tests: serves canned payloads through
// the real ApiClient and logs every request line for traffic assertions.

import { ApiClient, RecommendResponse } from "../src/api.js";

export interface Recorded {
  status: number;
  body: unknown;
}

export class FakeTransport {
  requests: string[] = [];
  private routes = new Map<string, Recorded>();
  private gates = new Map<string, () => Promise<void>>();

  route(url: string, body: unknown, status = 200): void {
    this.routes.set(url, { status, body });
  }

  /** Delay a URL's response until the returned release function runs. */
  gate(url: string): () => void {
    let release!: () => void;
    const barrier = new Promise<void>((resolve) => (release = resolve));
    this.gates.set(url, () => barrier);
    return release;
  }

  fetch = async (url: string): Promise<Response> => {
    this.requests.push(url);
    const gate = this.gates.get(url);
    if (gate) await gate();
    const recorded = this.routes.get(url);
    if (!recorded) {
      return new Response(JSON.stringify({ error: "not_found", detail: `no route ${url}` }), {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    return new Response(JSON.stringify(recorded.body), {
      status: recorded.status,
      headers: { "content-type": "application/json" },
    });
  };
}

export function recommendation(rank: number, cluster: number, score: number): {
  rank: number;
  cluster: number;
  label: string;
  score: number;
} {
  return { rank, cluster, label: `Article ${cluster}. Journal ${cluster % 7}`, score };
}

export function recommendResponse(cluster: number, neighbors: number[]): RecommendResponse {
  return {
    cluster,
    label: `Article ${cluster}. Journal ${cluster % 7}`,
    isolated: neighbors.length === 0,
    recommendations: neighbors.map((n, i) => recommendation(i + 1, n, 10 - i)),
  };
}

export function clientOver(transport: FakeTransport): ApiClient {
  return new ApiClient("", transport.fetch);
}
