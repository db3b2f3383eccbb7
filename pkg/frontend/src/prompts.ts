// Prompt templates for the gridworld player. The system prompt is a fixed
// block; the user prompt fills four slots from the observation message.
// Both are golden-tested byte for byte, so edit with care.

import { BridgeError, ObservationMessage } from "./types.js";

export const SYSTEM_PROMPT = `You are an embodied decision-making agent playing an interactive gridworld.
Your job is NOT just to finish, but to act robustly under uncertainty:
- The world may be underspecified and change over time.
- Observations may be noisy.
- Actions have costs.

GAME MECHANICS / CONTROLS (read carefully):
- The world is a bounded grid. You see only a local window around you.
- Your avatar is shown as {▲,▼,◀,▶} which also indicates the direction you are FACING.
- Movement actions both (a) move you one cell if not blocked AND (b) set your facing direction.
  * MOVE_N sets facing north, MOVE_S south, MOVE_W west, MOVE_E east.
- INTERACT affects the SINGLE tile directly in front of your facing direction (the adjacent cell).
  * If the tile in front is D (door): INTERACT attempts to open it. The door opens only if the scenario requirement is met (e.g., collect enough keys).
  * If the tile in front is R (rule tile): INTERACT triggers the hidden rule. The R tile may transform into outcomes like k (key), . (empty), or h (hazard). This behavior may change over time.
  * If the tile in front is H (hazard): INTERACT attempts to neutralize it at extra energy cost; may fail.
  * Otherwise INTERACT usually has no effect.
- SCAN temporarily increases your view radius for a step but costs energy.
- MEASURE (if available) collapses nearby latent tiles (o) into real tiles.

COSTS / RISKS:
- Some actions consume energy (SCAN, MEASURE, INTERACT).
- Observations may be noisy or misleading. Also, the environment can shift.

OUTPUT REQUIREMENT:
- Output EXACTLY ONE action token from the provided AVAILABLE ACTIONS list.
- Do not output any explanation or extra text.

Output ONLY the action string (no extra text).`;

const USER_TEMPLATE = `Collect 3 key fragments (k), then open the exit door (D) by INTERACTing with it while facing it.

OBSERVATION (partial, local):
{observation}

RECENT EVENTS:
{recent-events}

PREVIOUS ACTIONS (recent):
{previous-actions}

AVAILABLE ACTIONS:
{action-space}

Choose exactly ONE action from AVAILABLE ACTIONS and output only that action string.`;

export function buildSystemPrompt(): string {
  return SYSTEM_PROMPT;
}

/** Fill the user-prompt slots from one observation message. */
export function buildUserPrompt(msg: ObservationMessage): string {
  if (!Array.isArray(msg.view) || msg.view.length === 0) {
    throw new BridgeError("observation message missing view rows");
  }
  if (!msg.state || typeof msg.state.step !== "number") {
    throw new BridgeError("observation message missing state vector");
  }
  if (!Array.isArray(msg.actions) || msg.actions.length === 0) {
    throw new BridgeError("observation message missing action list");
  }
  const stateLine =
    `Step: ${msg.state.step} | Energy: ${msg.state.energy} | ` +
    `Keys: ${msg.state.keys} | Score: ${msg.state.score}`;
  const observation = msg.view.join("\n") + "\n" + stateLine;
  const events = (msg.events ?? []).map((line) => `- ${line}`).join("\n");
  const history = (msg.history ?? []).join(", ");
  return USER_TEMPLATE.replace("{observation}", observation)
    .replace("{recent-events}", events)
    .replace("{previous-actions}", history)
    .replace("{action-space}", msg.actions.join(", "));
}

export const CORRECTION_LINE =
  "Your previous reply was not a valid action token. Output EXACTLY ONE " +
  "action token from AVAILABLE ACTIONS and nothing else.";
