// @vitest-environment happy-dom
/** State-machine tests against a scripted fetch stub. */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError, ObservationPayload } from "../src/api.js";
import {
  fragmentForToken,
  KEY_ACTIONS,
  SessionController,
  tokenFromFragment,
} from "../src/session.js";

function obs(width = 3, height = 3, channels = 5): ObservationPayload {
  return {
    channels,
    height,
    width,
    data: new Array(channels * height * width).fill(0),
  };
}

interface Call {
  path: string;
  body: unknown;
}

function stubApi(responses: Record<string, unknown[]>) {
  const calls: Call[] = [];
  const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url).replace("http://svc", "");
    calls.push({ path, body: init?.body ? JSON.parse(String(init.body)) : null });
    const queue = responses[path];
    if (!queue || queue.length === 0) {
      return new Response(JSON.stringify({ error: "not stubbed" }), { status: 404 });
    }
    const next = queue.shift();
    const delay = (next as { __delay?: number }).__delay ?? 0;
    if (delay) {
      await new Promise((resolve) => setTimeout(resolve, delay));
    }
    return new Response(JSON.stringify(next), { status: 200 });
  }) as typeof fetch;
  return { api: new ApiClient("http://svc", fetchFn), calls };
}

const startPayload = {
  session_id: "abc123",
  level_index: 0,
  level_count: 3,
  step: 0,
  family: "maze",
  action_count: 4,
  participant: "p",
  observation: obs(),
};

function actionPayload(overrides: Record<string, unknown> = {}) {
  return {
    observation: obs(),
    reward: 0,
    done: false,
    success: false,
    level_advanced: false,
    level_index: 0,
    step: 1,
    session_complete: false,
    ...overrides,
  };
}

describe("key mapping", () => {
  it("maps arrows to the four cardinal actions", () => {
    expect(KEY_ACTIONS.ArrowUp).toBe(0);
    expect(KEY_ACTIONS.ArrowDown).toBe(1);
    expect(KEY_ACTIONS.ArrowLeft).toBe(2);
    expect(KEY_ACTIONS.ArrowRight).toBe(3);
  });

  it("rejects diagonals when the family only has four actions", async () => {
    const { api } = stubApi({ "/sessions": [startPayload] });
    const controller = new SessionController(api);
    await controller.start({ split: "s", blindfold: { kind: "none" }, participant: "p" });
    expect(controller.keyToAction("q")).toBeNull();
    expect(controller.keyToAction("ArrowUp")).toBe(0);
  });
});

describe("session flow", () => {
  it("starts a session and tracks the view", async () => {
    const { api, calls } = stubApi({ "/sessions": [startPayload] });
    const controller = new SessionController(api);
    await controller.start({
      split: "demo.split",
      blindfold: { kind: "fov", radius: 1 },
      participant: "tester",
    });
    expect(controller.view.phase).toBe("idle");
    expect(controller.view.levelCount).toBe(3);
    expect(calls[0].path).toBe("/sessions");
    expect((calls[0].body as { blindfold: { kind: string } }).blindfold.kind).toBe("fov");
  });

  it("posts one action per keypress and updates the view", async () => {
    const { api, calls } = stubApi({
      "/sessions": [startPayload],
      "/sessions/abc123/action": [actionPayload({ step: 1 })],
    });
    const controller = new SessionController(api);
    await controller.start({ split: "s", blindfold: { kind: "none" }, participant: "p" });
    const result = await controller.handleKey("ArrowRight");
    expect(result?.step).toBe(1);
    expect(controller.view.phase).toBe("idle");
    expect((calls[1].body as { action: number }).action).toBe(3);
  });

  it("ignores input while a request is in flight", async () => {
    const { api, calls } = stubApi({
      "/sessions": [startPayload],
      "/sessions/abc123/action": [
        Object.assign(actionPayload({ step: 1 }), { __delay: 20 }),
        actionPayload({ step: 2 }),
      ],
    });
    const controller = new SessionController(api);
    await controller.start({ split: "s", blindfold: { kind: "none" }, participant: "p" });
    const first = controller.handleKey("ArrowRight");
    const second = await controller.handleKey("ArrowRight"); // in-flight: ignored
    expect(second).toBeNull();
    expect((await first)?.step).toBe(1);
    expect(calls.filter((c) => c.path.endsWith("/action")).length).toBe(1);
  });

  it("flashes and advances levels, then completes", async () => {
    const { api } = stubApi({
      "/sessions": [startPayload],
      "/sessions/abc123/action": [
        actionPayload({ done: true, success: true, reward: 1, level_advanced: true, level_index: 1, step: 5 }),
        actionPayload({ done: true, success: true, reward: 1, level_advanced: true, level_index: 2, step: 7, session_complete: true }),
      ],
    });
    const controller = new SessionController(api);
    await controller.start({ split: "s", blindfold: { kind: "none" }, participant: "p" });
    await controller.handleKey("ArrowRight");
    expect(controller.view.flash).toBe("success");
    expect(controller.view.levelIndex).toBe(1);
    expect(controller.view.perLevelSteps).toEqual([5]);
    await controller.handleKey("ArrowDown");
    expect(controller.view.phase).toBe("done");
    expect(controller.view.perLevelSteps).toEqual([5, 7]);
    // further keys are ignored once done
    expect(await controller.handleKey("ArrowUp")).toBeNull();
  });

  it("surfaces service errors and recovers to idle", async () => {
    const { api } = stubApi({ "/sessions": [startPayload] });
    const controller = new SessionController(api);
    await controller.start({ split: "s", blindfold: { kind: "none" }, participant: "p" });
    await expect(controller.handleKey("ArrowUp")).rejects.toThrow(ApiError);
    expect(controller.view.phase).toBe("idle");
    expect(controller.view.error).toContain("not stubbed");
  });

  it("resumes from a stored token", async () => {
    const { api } = stubApi({
      "/sessions/abc123/state": [{
        session_id: "abc123",
        participant: "p",
        levels_done: 1,
        level_index: 1,
        level_count: 3,
        steps_current: 4,
        per_level_steps: [9],
        complete: false,
      }],
    });
    const controller = new SessionController(api);
    await controller.resume("abc123");
    expect(controller.view.phase).toBe("idle");
    expect(controller.view.levelIndex).toBe(1);
    expect(controller.view.perLevelSteps).toEqual([9]);
  });
});

describe("fragment token", () => {
  it("round-trips", () => {
    expect(tokenFromFragment(fragmentForToken("deadbeef"))).toBe("deadbeef");
    expect(tokenFromFragment("#other")).toBeNull();
    expect(tokenFromFragment("")).toBeNull();
  });
});
