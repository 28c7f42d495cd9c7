import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "../src/api.js";
import { FakeServer } from "./fakeServer.js";

describe("ApiClient", () => {
  it("lists clouds", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    const clouds = await api.listClouds();
    expect(clouds).toEqual([
      { cloud_id: "c1", n_points: 12, has_ground_truth: true },
    ]);
  });

  it("creates a session and fetches a decoded snapshot", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    const created = await api.createSession("c1", 3);
    expect(created.session_id).toBe("s1");
    expect(created.num_classes).toBe(3);
    const snap = await api.getSnapshot("s1");
    expect(snap.phase).toBe("seeding");
    expect(snap.nPoints).toBe(12);
    expect(Array.from(snap.labels)).toEqual(new Array(12).fill(-1));
  });

  it("posts seeds and reports the server click total", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    await api.createSession("c1", 3);
    const resp = await api.submitSeeds("s1", [
      [0, 0],
      [4, 1],
      [8, 2],
    ]);
    expect(resp).toEqual({ phase: "training", clicks_total: 3 });
    const body = srv.requests.at(-1)!.body as { seeds: unknown };
    expect(body.seeds).toEqual([
      [0, 0],
      [4, 1],
      [8, 2],
    ]);
  });

  it("surfaces 422 rejections as ApiError without state changes", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    await api.createSession("c1", 3);
    await expect(api.submitSeeds("s1", [[0, 0]])).rejects.toThrow(ApiError);
    await expect(api.submitSeeds("s1", [[0, 0]])).rejects.toMatchObject({
      status: 422,
    });
    expect(srv.clicks).toBe(0);
    expect(srv.phase).toBe("seeding");
  });

  it("surfaces phase conflicts as 409", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    await api.createSession("c1", 3);
    await expect(api.finalize("s1")).rejects.toMatchObject({ status: 409 });
  });

  it("runs train/corrections/finalize against the lifecycle", async () => {
    const srv = new FakeServer();
    const api = new ApiClient("", srv.fetch);
    await api.createSession("c1", 3);
    await api.submitSeeds("s1", [
      [0, 0],
      [4, 1],
      [8, 2],
    ]);
    const t = await api.train("s1");
    expect(t.status).toBe("training");
    // busy: mutating calls are rejected while the job runs
    await expect(api.submitCorrections("s1", [
      { point_id: 1, class_id: 1 },
    ])).rejects.toMatchObject({ status: 409 });
    srv.finishTraining();
    const c = await api.submitCorrections("s1", [
      { point_id: 1, class_id: 1, grow: true },
    ]);
    expect(c.clicks_total).toBe(4);
    const fin = await api.finalize("s1");
    expect(fin.phase).toBe("finalized");
    const m = await api.metrics("s1");
    expect(m.clicks_total).toBe(4);
  });

  it("prefixes requests with the base URL", async () => {
    const srv = new FakeServer();
    const calls: string[] = [];
    const wrapped: typeof fetch = (input, init) => {
      calls.push(String(input));
      const stripped = String(input).replace("http://host:9", "");
      return srv.fetch(stripped, init);
    };
    const api = new ApiClient("http://host:9", wrapped);
    await api.listClouds();
    expect(calls).toEqual(["http://host:9/clouds"]);
  });
});
