// Wire protocol messages exchanged with the game engine (one JSON object
// per line over stdio), plus bridge-side configuration.

export interface ObservationState {
  step: number;
  energy: number;
  keys: number;
  score: number;
}

export interface ObservationMessage {
  type: "observation";
  step: number;
  text: string;
  state: ObservationState;
  actions: string[];
  // Structured extras the engine includes alongside the rendered text.
  view?: string[];
  events?: string[];
  history?: string[];
}

export interface EpisodeStartMessage {
  type: "episode_start";
  config: Record<string, unknown>;
  agent?: string;
}

export interface EpisodeEndMessage {
  type: "episode_end";
  outcome: string;
  score: number;
  steps: number;
}

export type EngineMessage =
  | ObservationMessage
  | EpisodeStartMessage
  | EpisodeEndMessage
  | { type: string; [key: string]: unknown };

export interface ActionMessage {
  type: "action";
  action: string;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export interface BridgeConfig {
  /** Chat-completions base endpoint, e.g. https://api.example.com/v1 */
  endpoint: string;
  model: string;
  /** Name of the environment variable holding the API key (never logged). */
  apiKeyEnv: string;
  temperature: number;
  maxRetries: number;
  /** Provider-specific reasoning budget, passed through verbatim when set. */
  thinking?: string;
}

export const DEFAULT_BRIDGE_CONFIG: BridgeConfig = {
  endpoint: "http://localhost:8000/v1",
  model: "mock",
  apiKeyEnv: "GRIDLAB_BRIDGE_API_KEY",
  temperature: 0,
  maxRetries: 2,
};

export class BridgeError extends Error {}
