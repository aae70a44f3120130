/** Canvas grid renderer for masked observations.
 *
 * Channel layout (before the optional mask sentinel, always last): wall,
 * free, agent, goal, then per color key/lock/held triplets. Cells flagged by
 * the sentinel are drawn as occluded fog tiles. Only the payload the service
 * sent is consulted; the client never sees unmasked data.
 */

import { ObservationPayload } from "./api.js";

export interface CellPaint {
  x: number;
  y: number;
  size: number;
  fill: string;
}

const COLORS = {
  wall: "#2b2b33",
  free: "#e8e2d0",
  agent: "#2f6fde",
  goal: "#e8b004",
  fog: "#14141c",
  keys: ["#c0392b", "#27ae60", "#8e44ad"],
  locks: ["#7a241b", "#18703c", "#5b2c6f"],
};

export function hasSentinel(obs: ObservationPayload, blindfoldKind: string): boolean {
  return blindfoldKind === "fov" || blindfoldKind === "region";
}

function channel(obs: ObservationPayload, index: number, row: number, col: number): number {
  return obs.data[(index * obs.height + row) * obs.width + col];
}

/** Pure paint plan: one fill per cell, fog last so tests can inspect it. */
export function paintPlan(
  obs: ObservationPayload,
  blindfoldKind: string,
  cellSize: number,
): CellPaint[] {
  const sentinel = hasSentinel(obs, blindfoldKind);
  const contentChannels = sentinel ? obs.channels - 1 : obs.channels;
  const colorCount = Math.max(0, Math.floor((contentChannels - 4) / 3));
  const cells: CellPaint[] = [];
  for (let row = 0; row < obs.height; row++) {
    for (let col = 0; col < obs.width; col++) {
      let fill = COLORS.free;
      if (channel(obs, 0, row, col) >= 0.5) {
        fill = COLORS.wall;
      }
      for (let k = 0; k < colorCount; k++) {
        if (channel(obs, 4 + 3 * k, row, col) >= 0.5) {
          fill = COLORS.keys[k % COLORS.keys.length];
        }
        if (channel(obs, 4 + 3 * k + 1, row, col) >= 0.5) {
          fill = COLORS.locks[k % COLORS.locks.length];
        }
      }
      if (channel(obs, 3, row, col) >= 0.5) {
        fill = COLORS.goal;
      }
      if (channel(obs, 2, row, col) >= 0.5) {
        fill = COLORS.agent;
      }
      if (sentinel && channel(obs, obs.channels - 1, row, col) >= 0.5) {
        fill = COLORS.fog;
      }
      cells.push({ x: col * cellSize, y: row * cellSize, size: cellSize, fill });
    }
  }
  return cells;
}

export function drawObservation(
  ctx: CanvasRenderingContext2D | null,
  obs: ObservationPayload,
  blindfoldKind: string,
  cellSize = 32,
): CellPaint[] {
  const plan = paintPlan(obs, blindfoldKind, cellSize);
  if (ctx) {
    for (const cell of plan) {
      ctx.fillStyle = cell.fill;
      ctx.fillRect(cell.x, cell.y, cell.size, cell.size);
    }
  }
  return plan;
}
