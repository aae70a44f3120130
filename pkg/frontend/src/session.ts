/** Client session state machine.
 *
 * One action per keypress: while a request is in flight the controller is in
 * the "awaiting" phase and further input is ignored. The session token lives
 * in the URL fragment so a refresh can resume (the server is authoritative;
 * nothing is persisted client-side).
 */

import {
  ActionResult,
  ApiClient,
  BlindfoldConfig,
  ObservationPayload,
  Progress,
  SessionStart,
} from "./api.js";

export type Phase = "configuring" | "idle" | "awaiting" | "done";

/** Action ids: up, down, left, right, then the four diagonals. */
export const KEY_ACTIONS: Record<string, number> = {
  ArrowUp: 0,
  ArrowDown: 1,
  ArrowLeft: 2,
  ArrowRight: 3,
  q: 4, // up-left
  e: 5, // up-right
  z: 6, // down-left
  c: 7, // down-right
};

export interface SessionView {
  phase: Phase;
  sessionId: string | null;
  observation: ObservationPayload | null;
  levelIndex: number;
  levelCount: number;
  step: number;
  lastReward: number;
  actionCount: number;
  flash: "success" | "fail" | null;
  perLevelSteps: number[];
  error: string | null;
}

export class SessionController {
  view: SessionView = {
    phase: "configuring",
    sessionId: null,
    observation: null,
    levelIndex: 0,
    levelCount: 0,
    step: 0,
    lastReward: 0,
    actionCount: 4,
    flash: null,
    perLevelSteps: [],
    error: null,
  };

  constructor(
    private api: ApiClient,
    private onChange: (view: SessionView) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.view);
  }

  async start(req: {
    split: string;
    blindfold: BlindfoldConfig;
    participant: string;
    levels?: number;
  }): Promise<SessionStart> {
    const started = await this.api.createSession({
      split: req.split,
      blindfold: req.blindfold,
      participant: req.participant,
      levels: req.levels,
    });
    this.view = {
      ...this.view,
      phase: "idle",
      sessionId: started.session_id,
      observation: started.observation,
      levelIndex: started.level_index,
      levelCount: started.level_count,
      step: started.step,
      actionCount: started.action_count,
      flash: null,
      error: null,
    };
    this.emit();
    return started;
  }

  /** Resume from a stored token: progress is restored immediately, the grid
   * view refreshes with the next action's response. */
  async resume(sessionId: string): Promise<Progress> {
    const progress = await this.api.getState(sessionId);
    this.view = {
      ...this.view,
      phase: progress.complete ? "done" : "idle",
      sessionId,
      levelIndex: progress.level_index,
      levelCount: progress.level_count,
      step: progress.steps_current,
      perLevelSteps: progress.per_level_steps,
      error: null,
    };
    this.emit();
    return progress;
  }

  keyToAction(key: string): number | null {
    const action = KEY_ACTIONS[key.length === 1 ? key.toLowerCase() : key];
    if (action === undefined || action >= this.view.actionCount) {
      return null;
    }
    return action;
  }

  /** Returns the action result, or null when the input was ignored (no live
   * episode, unknown key, or a request already in flight). */
  async handleKey(key: string): Promise<ActionResult | null> {
    const sessionId = this.view.sessionId;
    if (this.view.phase !== "idle" || !sessionId) {
      return null;
    }
    const action = this.keyToAction(key);
    if (action === null) {
      return null;
    }
    this.view = { ...this.view, phase: "awaiting" };
    this.emit();
    try {
      const result = await this.api.sendAction(sessionId, action);
      this.view = {
        ...this.view,
        phase: result.session_complete ? "done" : "idle",
        observation: result.observation,
        levelIndex: result.level_index,
        step: result.step,
        lastReward: result.reward,
        flash: result.level_advanced
          ? (result.success ? "success" : "fail")
          : null,
      };
      if (result.level_advanced) {
        this.view.perLevelSteps = [...this.view.perLevelSteps, result.step];
      }
      this.emit();
      return result;
    } catch (err) {
      this.view = { ...this.view, phase: "idle", error: String(err) };
      this.emit();
      throw err;
    }
  }

  async progress(): Promise<Progress> {
    const sessionId = this.view.sessionId;
    if (!sessionId) {
      throw new Error("no session");
    }
    const progress = await this.api.getState(sessionId);
    this.view = { ...this.view, perLevelSteps: progress.per_level_steps };
    this.emit();
    return progress;
  }
}

export function tokenFromFragment(hash: string): string | null {
  const match = /#session=([0-9a-f]+)/.exec(hash);
  return match ? match[1] : null;
}

export function fragmentForToken(sessionId: string): string {
  return `#session=${sessionId}`;
}
