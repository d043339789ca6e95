// @vitest-environment happy-dom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, bytesToBase64 } from "../src/api.js";
import { SessionStore, describeEvent } from "../src/state.js";

interface Stub {
  matcher: (path: string, init?: RequestInit) => boolean;
  reply: () => unknown;
}

function stubFetch(stubs: Stub[]): void {
  vi.stubGlobal("fetch", vi.fn(async (url: string, init?: RequestInit) => {
    const path = url.replace("http://test", "");
    for (const stub of stubs) {
      if (stub.matcher(path, init)) {
        return new Response(JSON.stringify(stub.reply()), { status: 200 });
      }
    }
    return new Response(JSON.stringify({ code: "nope", message: `no stub for ${path}` }),
      { status: 404 });
  }));
}

function baseStubs(state: { categories: { name: string; instances: number }[];
                           events: object[] }): Stub[] {
  return [
    {
      matcher: (p, i) => p === "/sessions" && i?.method === "POST",
      reply: () => ({ session_id: "s1", config: {} }),
    },
    {
      matcher: (p) => p === "/sessions/s1/state",
      reply: () => ({ session_id: "s1", bootstrapped: true,
        categories: state.categories, accuracy: null,
        events: state.events.length }),
    },
    {
      matcher: (p) => p.startsWith("/sessions/s1/events"),
      reply: () => ({ events: state.events }),
    },
  ];
}

describe("bytesToBase64", () => {
  it("round-trips through atob", () => {
    const bytes = new Uint8Array([0, 1, 2, 250, 255, 77]);
    const decoded = atob(bytesToBase64(bytes));
    expect(Array.from(decoded, (c) => c.charCodeAt(0))).toEqual([0, 1, 2, 250, 255, 77]);
  });
});

describe("SessionStore", () => {
  beforeEach(() => {
    vi.unstubAllGlobals();
  });

  it("start() creates a session and loads state", async () => {
    const world = { categories: [], events: [{ seq: 0, kind: "create" }] };
    stubFetch(baseStubs(world));
    const store = new SessionStore(new ApiClient("http://test"));
    await store.start();
    expect(store.sessionId).toBe("s1");
    expect(store.feed.map((l) => l.text)).toEqual(["session created"]);
    expect(store.busy).toBeNull();
  });

  it("classify stores the current object and result", async () => {
    const world = { categories: [], events: [] as object[] };
    const stubs = baseStubs(world);
    stubs.push({
      matcher: (p) => p === "/sessions/s1/classify",
      reply: () => ({ label: "Unknown", per_category_ocd: [], margin: null,
        object_ref: "r1", points: [[0, 0, 0]] }),
    });
    stubFetch(stubs);
    const store = new SessionStore(new ApiClient("http://test"));
    await store.start();
    const result = await store.uploadAndClassify("a.pcd", new Uint8Array([1, 2]));
    expect(result.label).toBe("Unknown");
    expect(store.current?.objectRef).toBe("r1");
    expect(store.lastResult?.label).toBe("Unknown");
  });

  it("teachCurrent reclassifies the same object afterwards", async () => {
    const world = { categories: [] as { name: string; instances: number }[],
      events: [] as object[] };
    const classify = vi.fn()
      .mockReturnValueOnce({ label: "Unknown", per_category_ocd: [],
        margin: null, object_ref: "r1", points: [] })
      .mockReturnValue({ label: "mug",
        per_category_ocd: [{ category: "mug", ocd: 0 }], margin: null,
        object_ref: "r2", points: [] });
    const stubs = baseStubs(world);
    stubs.push(
      { matcher: (p) => p === "/sessions/s1/classify", reply: () => classify() },
      {
        matcher: (p) => p === "/sessions/s1/teach",
        reply: () => {
          world.categories.push({ name: "mug", instances: 1 });
          return { name: "mug", instances: 1, known_categories: 1,
            bootstrapped: true };
        },
      });
    stubFetch(stubs);
    const store = new SessionStore(new ApiClient("http://test"));
    await store.start();
    await store.uploadAndClassify("m.pcd", new Uint8Array([9]));
    const after = await store.teachCurrent("mug");
    expect(after.label).toBe("mug");
    expect(store.categories).toEqual([{ name: "mug", instances: 1 }]);
    expect(classify).toHaveBeenCalledTimes(2);
  });

  it("feed is append-only across refreshes", async () => {
    const world = { categories: [], events: [{ seq: 0, kind: "create" }] as
      { seq: number; kind: string }[] };
    stubFetch(baseStubs(world));
    const store = new SessionStore(new ApiClient("http://test"));
    await store.start();
    const first = store.feed[0];
    world.events.push({ seq: 1, kind: "refresh-topics" });
    await store.refreshState();
    expect(store.feed[0]).toBe(first);
    expect(store.feed).toHaveLength(2);
  });

  it("errors surface and clear busy", async () => {
    stubFetch([]);
    const store = new SessionStore(new ApiClient("http://test"));
    await expect(store.start()).rejects.toThrow();
    expect(store.busy).toBeNull();
    expect(store.error).toBeTruthy();
  });
});

describe("describeEvent", () => {
  it("labels classify events with the returned label", () => {
    expect(describeEvent({ seq: 3, kind: "classify",
      result: { label: "box" } })).toBe("classify -> box");
  });
  it("falls back to the kind", () => {
    expect(describeEvent({ seq: 0, kind: "mystery" })).toBe("mystery");
  });
});
