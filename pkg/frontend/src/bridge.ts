// The bridge process: engine wire protocol on stdin/stdout, a chat
// completion provider on the other side. One observation in, one action
// out; telemetry (latency, token counts) goes to stderr only.

import * as readline from "node:readline";

import { buildSystemPrompt, buildUserPrompt, CORRECTION_LINE } from "./prompts.js";
import { parseAction } from "./parse.js";
import {
  FirstActionMockProvider,
  HttpProvider,
  MockProvider,
  Provider,
} from "./provider.js";
import {
  ActionMessage,
  BridgeConfig,
  BridgeError,
  DEFAULT_BRIDGE_CONFIG,
  EngineMessage,
  ErrorMessage,
  ObservationMessage,
} from "./types.js";

export interface BridgeStats {
  observations: number;
  actionsSent: number;
  invalid: number;
  retries: number;
}

function encode(msg: ActionMessage | ErrorMessage): string {
  return JSON.stringify(msg);
}

async function decideOnce(
  provider: Provider,
  system: string,
  basePrompt: string,
  maxRetries: number,
  log: (msg: string) => void,
  stats: BridgeStats,
): Promise<string | null> {
  let prompt = basePrompt;
  for (let attempt = 0; attempt <= maxRetries; attempt++) {
    const started = Date.now();
    const result = await provider.complete(system, prompt);
    const ms = Date.now() - started;
    log(
      `bridge: provider call ${ms}ms` +
        (result.promptTokens != null
          ? ` (tokens ${result.promptTokens}+${result.completionTokens})`
          : ""),
    );
    const token = parseAction(result.text);
    if (token !== null) {
      if (attempt > 0) {
        stats.retries += attempt;
      }
      return token;
    }
    log(`bridge: unparseable reply (attempt ${attempt + 1}/${maxRetries + 1})`);
    prompt = basePrompt + "\n\n" + CORRECTION_LINE;
  }
  stats.retries += maxRetries;
  return null;
}

/**
 * Drive one episode over the wire protocol. Returns the process exit
 * status: 0 after a clean episode_end, 1 on provider failure or when the
 * engine hung up without ending the episode.
 */
export async function runBridge(
  provider: Provider,
  lines: AsyncIterable<string>,
  write: (line: string) => void,
  log: (msg: string) => void = (m) => console.error(m),
  maxRetries: number = DEFAULT_BRIDGE_CONFIG.maxRetries,
): Promise<number> {
  const system = buildSystemPrompt();
  const stats: BridgeStats = { observations: 0, actionsSent: 0, invalid: 0, retries: 0 };
  for await (const raw of lines) {
    const line = raw.trim();
    if (!line) {
      continue;
    }
    let msg: EngineMessage;
    try {
      msg = JSON.parse(line);
    } catch {
      log(`bridge: ignoring non-JSON line from engine`);
      continue;
    }
    if (msg.type === "episode_start") {
      log(`bridge: episode started`);
      continue;
    }
    if (msg.type === "episode_end") {
      log(
        `bridge: episode ended (${(msg as Record<string, unknown>).outcome}); ` +
          `${stats.observations} observations, ${stats.actionsSent} actions, ` +
          `${stats.invalid} invalid, ${stats.retries} retries`,
      );
      return 0;
    }
    if (msg.type !== "observation") {
      continue;
    }
    stats.observations += 1;
    let prompt: string;
    try {
      prompt = buildUserPrompt(msg as ObservationMessage);
    } catch (err) {
      if (err instanceof BridgeError) {
        write(encode({ type: "error", message: err.message }));
        stats.invalid += 1;
        continue;
      }
      throw err;
    }
    let token: string | null;
    try {
      token = await decideOnce(provider, system, prompt, maxRetries, log, stats);
    } catch (err) {
      write(encode({ type: "error", message: `provider failure: ${String(err)}` }));
      return 1;
    }
    if (token === null) {
      write(encode({ type: "error", message: "no valid action after retries" }));
      stats.invalid += 1;
      continue;
    }
    write(encode({ type: "action", action: token }));
    stats.actionsSent += 1;
  }
  log("bridge: engine closed the channel before episode_end");
  return 1;
}

export function selectProvider(name: string, config: BridgeConfig, mockReplies: string[]): Provider {
  if (name === "mock") {
    return new MockProvider(mockReplies.length ? mockReplies : ["SCAN"]);
  }
  if (name === "mock-first") {
    return new FirstActionMockProvider();
  }
  return new HttpProvider(config);
}

function parseArgs(argv: string[]): { provider: string; config: BridgeConfig; mockReplies: string[] } {
  const config: BridgeConfig = { ...DEFAULT_BRIDGE_CONFIG };
  let provider = "http";
  const mockReplies: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) {
        throw new BridgeError(`missing value for ${arg}`);
      }
      return argv[i];
    };
    switch (arg) {
      case "--provider":
        provider = next();
        break;
      case "--endpoint":
        config.endpoint = next();
        break;
      case "--model":
        config.model = next();
        break;
      case "--api-key-env":
        config.apiKeyEnv = next();
        break;
      case "--temperature":
        config.temperature = Number(next());
        break;
      case "--max-retries":
        config.maxRetries = Math.max(0, Number(next()));
        break;
      case "--thinking":
        config.thinking = next();
        break;
      case "--mock-replies":
        mockReplies.push(...next().split(",").map((s) => s.trim()).filter(Boolean));
        break;
      default:
        throw new BridgeError(`unknown argument: ${arg}`);
    }
  }
  return { provider, config, mockReplies };
}

export async function main(argv: string[]): Promise<number> {
  const { provider, config, mockReplies } = parseArgs(argv);
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  return runBridge(
    selectProvider(provider, config, mockReplies),
    rl,
    (line) => process.stdout.write(line + "\n"),
    (msg) => process.stderr.write(msg + "\n"),
    config.maxRetries,
  );
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");

if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(`bridge: fatal: ${String(err)}`);
      process.exit(1);
    },
  );
}
