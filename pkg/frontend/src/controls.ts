/**
 * Run controls: pause/resume/stop buttons and the status chip.
 *
 * The chip is never set optimistically. A click issues the control call
 * and the chip takes whatever status the server returns; a 409 leaves
 * the chip alone and raises a toast with the server's explanation.
 */

import { ApiError, ConsoleApi, ControlAction, ExperimentStatus } from "./api.js";

export interface ControlState {
  experimentId: string;
  status: ExperimentStatus;
  toast: string | null;
}

const LEGAL_ACTIONS: Record<ExperimentStatus, ControlAction[]> = {
  draft: ["resume"],
  running: ["pause", "stop"],
  paused: ["resume", "stop"],
  stopped: [],
};

export function allowedActions(status: ExperimentStatus): ControlAction[] {
  return [...LEGAL_ACTIONS[status]];
}

export function isActionDisabled(
  state: ControlState,
  action: ControlAction,
): boolean {
  return !LEGAL_ACTIONS[state.status].includes(action);
}

export async function controlAction(
  api: ConsoleApi,
  state: ControlState,
  action: ControlAction,
): Promise<ControlState> {
  try {
    const response = await api.control(state.experimentId, action);
    return { experimentId: state.experimentId, status: response.status, toast: null };
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      return { ...state, toast: err.detail };
    }
    throw err;
  }
}
