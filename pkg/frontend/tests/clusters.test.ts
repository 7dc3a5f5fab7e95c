import { describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import { ClusterBrowserModel } from "../src/clusters.js";
import { fakeFetch, type Call } from "./fake.js";

const CONFIG = { baseUrl: "http://svc" };

const DETAIL = {
  id: 1,
  size: 3,
  members: [
    { id: "msg-000001", text: "first" },
    { id: "msg-000002", text: "second" },
    { id: "msg-000003", text: "third" },
  ],
  representatives: {
    medoid: { id: "msg-000002", text: "second" },
    anti_medoid: { id: "msg-000003", text: "third" },
    random: { id: "msg-000001", text: "first" },
  },
};

describe("cluster listing", () => {
  it("sorts by size descending with id as tiebreak", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: {
        clusters: [
          { id: 4, size: 2 },
          { id: 1, size: 7 },
          { id: 2, size: 2 },
        ],
      },
    }));
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn));
    await model.load();
    expect(model.list()).toEqual([
      { id: 1, size: 7 },
      { id: 2, size: 2 },
      { id: 4, size: 2 },
    ]);
    expect(calls[0]!.url).toBe("http://svc/v1/clusters?min_size=2");
  });

  it("passes a custom singleton-inclusive min size", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({ status: 200, body: { clusters: [] } }));
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn), 1);
    await model.load();
    expect(calls[0]!.url).toBe("http://svc/v1/clusters?min_size=1");
    expect(model.isEmpty).toBe(true);
  });

  it("raises a banner when the service is unreachable", async () => {
    const { fetchFn } = fakeFetch(() => new TypeError("fetch failed"));
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn));
    await expect(model.load()).rejects.toThrow();
    expect(model.banner).toContain("network failure");
  });
});

describe("drill-down and attach", () => {
  it("opens cluster detail with the three representatives", async () => {
    const { fetchFn } = fakeFetch((call: Call) =>
      call.url.endsWith("/v1/clusters/1")
        ? { status: 200, body: DETAIL }
        : { status: 200, body: { clusters: [] } },
    );
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn));
    await model.open(1);
    expect(model.detail?.representatives.medoid.text).toBe("second");
    model.close();
    expect(model.detail).toBeNull();
  });

  it("attach posts the match, then resyncs and opens the merge", async () => {
    const { fetchFn, calls } = fakeFetch((call: Call) => {
      if (call.url.endsWith("/v1/matches")) {
        return { status: 200, body: { cluster_id: 1 } };
      }
      if (call.url.includes("/v1/clusters?")) {
        return { status: 200, body: { clusters: [{ id: 1, size: 3 }] } };
      }
      return { status: 200, body: DETAIL };
    });
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn));
    const merged = await model.attach("msg-000001", "msg-000003", "ana");
    expect(merged).toBe(1);
    expect(calls.map((c) => c.method)).toEqual(["POST", "GET", "GET"]);
    expect(calls[0]!.body).toEqual({ id_a: "msg-000001", id_b: "msg-000003", reviewer: "ana" });
    expect(model.detail?.id).toBe(1);
    expect(model.list()).toEqual([{ id: 1, size: 3 }]);
  });
});

describe("match preview search", () => {
  it("stores the preview and sends the read-only flag", async () => {
    const { fetchFn, calls } = fakeFetch(() => ({
      status: 200,
      body: {
        preview: true,
        decision: "suggested",
        best_cosine: 0.92,
        candidates: [{ id: "msg-000001", text: "first", cosine: 0.92, cluster_id: 1 }],
      },
    }));
    const model = new ClusterBrowserModel(new Client(CONFIG, fetchFn));
    const result = await model.search("is this claim known");
    expect(result.decision).toBe("suggested");
    expect(calls[0]!.body).toEqual({ text: "is this claim known", preview: true });
    expect(model.preview?.candidates[0]?.cluster_id).toBe(1);
    model.clearSearch();
    expect(model.preview).toBeNull();
  });
});
