// UI contract against a live API instance on synthetic data.
//
// Start one first, e.g.:
//   resolverlogs synth --store /tmp/ui/events.log --events 60000 \
//       --requesters 400 --referents 2000 --journals 30 \
//       --requester-zipf 0.8 --variant-rate 0.08 --seed 9 --if-out /tmp/ui/if.tsv
//   resolverlogs pipeline --store-path /tmp/ui/events.log \
//       --artifacts-dir /tmp/ui/artifacts --if-file /tmp/ui/if.tsv
//   resolverlogs serve-api --store-path /tmp/ui/events.log \
//       --artifacts-dir /tmp/ui/artifacts --bind 127.0.0.1:8011
// then:
//   EXPLORER_API_BASE=http://127.0.0.1:8011 npm test -- live

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ExplorerState } from "../src/state.js";

const base = process.env.EXPLORER_API_BASE ?? "";

describe.skipIf(!base)("live API contract", () => {
  function recordingClient(): { api: ApiClient; requests: { url: string; init?: RequestInit }[] } {
    const requests: { url: string; init?: RequestInit }[] = [];
    const api = new ApiClient(base, (url) => {
      requests.push({ url });
      return fetch(url); // GET by construction: no init object exists
    });
    return { api, requests };
  }

  async function connectedCluster(api: ApiClient): Promise<number> {
    // find a query cluster with at least one recommendation
    const rows = await api.rankings(1);
    expect(rows.length).toBeGreaterThan(0);
    for (let cluster = 0; cluster < 5000; cluster++) {
      try {
        const res = await api.recommendCluster(cluster, 5);
        if (res.recommendations.length > 0) return cluster;
      } catch {
        // unknown cluster ids are fine; keep probing
      }
    }
    throw new Error("no connected cluster found");
  }

  it("renders results in API order and replays three hops losslessly", async () => {
    const { api, requests } = recordingClient();
    const state = new ExplorerState(api);
    const start = await connectedCluster(api);

    expect((await state.follow(start)).kind).toBe("ok");
    const first = state.current!;
    const scores = first.response.recommendations.map((r) => r.score);
    expect([...scores].sort((a, b) => b - a)).toEqual(scores);
    expect(first.response.recommendations.map((r) => r.rank)).toEqual(
      scores.map((_, i) => i + 1),
    );

    // three-hop exploration, then back x3 restores the initial view
    let hops = 0;
    while (hops < 3) {
      const next = state.current!.response.recommendations[0];
      if (!next) break;
      expect((await state.follow(next.cluster)).kind).toBe("ok");
      hops++;
    }
    expect(hops).toBeGreaterThan(0);
    const fetchesBeforeBack = requests.length;
    for (let i = 0; i < hops; i++) {
      expect(state.back()).toBe(true);
    }
    expect(state.current!.response).toEqual(first.response);
    expect(requests.length).toBe(fetchesBeforeBack); // back is cache-only

    // all traffic went to documented GET endpoints
    for (const r of requests) {
      expect(r.init).toBeUndefined();
      expect(new URL(r.url).pathname.startsWith("/api/")).toBe(true);
    }
  });

  it("map points exist and seed the query form", async () => {
    const { api } = recordingClient();
    const state = new ExplorerState(api);
    const points = await api.map();
    expect(points.length).toBeGreaterThan(2);
    state.seedFromJournal(points[0].label);
    expect(state.form.issn !== "" || state.form.title !== "").toBe(true);
  });
});
