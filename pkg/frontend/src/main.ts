/** DOM wiring: configuration form, canvas, keyboard input, progress line. */

import { ApiClient, BlindfoldConfig } from "./api.js";
import { drawObservation } from "./renderer.js";
import {
  fragmentForToken,
  SessionController,
  SessionView,
  tokenFromFragment,
} from "./session.js";

const CELL = 36;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function setupApp(): void {
  const canvas = el<HTMLCanvasElement>("grid");
  const ctx = canvas.getContext("2d");
  const status = el<HTMLDivElement>("status");
  const banner = el<HTMLDivElement>("banner");
  const form = el<HTMLFormElement>("config");

  let blindfoldKind = "fov";
  let active: SessionController | null = null;

  const render = (view: SessionView) => {
    if (view.observation) {
      canvas.width = view.observation.width * CELL;
      canvas.height = view.observation.height * CELL;
      drawObservation(ctx, view.observation, blindfoldKind, CELL);
    }
    const flash = view.flash === "success" ? " — solved!"
      : view.flash === "fail" ? " — out of time"
      : "";
    status.textContent = view.phase === "done"
      ? `finished ${view.levelCount} levels — steps per level: ${view.perLevelSteps.join(", ")}`
      : `level ${view.levelIndex + 1}/${view.levelCount} · step ${view.step}${flash}`;
    banner.textContent = view.error ?? "";
  };

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const baseUrl = el<HTMLInputElement>("service-url").value;
    const split = el<HTMLInputElement>("split-id").value;
    blindfoldKind = el<HTMLSelectElement>("blindfold-kind").value;
    const radius = parseInt(el<HTMLInputElement>("blindfold-radius").value || "1", 10);
    const participant = el<HTMLInputElement>("participant").value || "anonymous";
    const blindfold: BlindfoldConfig = blindfoldKind === "fov"
      ? { kind: "fov", radius }
      : { kind: blindfoldKind as BlindfoldConfig["kind"] };
    const controller = new SessionController(new ApiClient(baseUrl), render);
    try {
      const started = await controller.start({ split, blindfold, participant });
      window.location.hash = fragmentForToken(started.session_id);
      active = controller;
    } catch (err) {
      banner.textContent = String(err);
    }
  });

  window.addEventListener("keydown", (event) => {
    if (active && active.keyToAction(event.key) !== null) {
      event.preventDefault();
      void active.handleKey(event.key).catch(() => {});
    }
  });

  const token = tokenFromFragment(window.location.hash);
  if (token) {
    const controller = new SessionController(
      new ApiClient(el<HTMLInputElement>("service-url").value), render);
    void controller.resume(token).then(() => {
      active = controller;
    }).catch((err) => {
      banner.textContent = `could not resume session: ${err}`;
    });
  }
}

if (typeof document !== "undefined" && document.getElementById("grid")) {
  setupApp();
}
