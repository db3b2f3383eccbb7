// Chat-completion providers: a standard HTTP client and an in-process mock.
// Credentials come from the environment and are never logged.

import { BridgeConfig, BridgeError } from "./types.js";

export interface CompletionResult {
  text: string;
  promptTokens?: number;
  completionTokens?: number;
}

export interface Provider {
  complete(system: string, user: string): Promise<CompletionResult>;
}

type FetchLike = (url: string, init: Record<string, unknown>) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<any>;
}>;

export class HttpProvider implements Provider {
  private attempts: number;

  constructor(
    private config: BridgeConfig,
    private fetchFn: FetchLike = fetch as unknown as FetchLike,
    private warn: (msg: string) => void = (m) => console.error(m),
  ) {
    this.attempts = Math.max(0, config.maxRetries) + 1;
  }

  async complete(system: string, user: string): Promise<CompletionResult> {
    const apiKey = process.env[this.config.apiKeyEnv] ?? "";
    const body: Record<string, unknown> = {
      model: this.config.model,
      temperature: this.config.temperature,
      messages: [
        { role: "system", content: system },
        { role: "user", content: user },
      ],
    };
    if (this.config.thinking) {
      body.reasoning_effort = this.config.thinking;
    }
    let lastError: unknown = null;
    for (let attempt = 1; attempt <= this.attempts; attempt++) {
      try {
        const res = await this.fetchFn(`${this.config.endpoint}/chat/completions`, {
          method: "POST",
          headers: {
            "content-type": "application/json",
            authorization: `Bearer ${apiKey}`,
          },
          body: JSON.stringify(body),
        });
        if (!res.ok) {
          throw new BridgeError(`provider returned HTTP ${res.status}`);
        }
        const data = await res.json();
        const text = data?.choices?.[0]?.message?.content;
        if (typeof text !== "string") {
          throw new BridgeError("provider reply missing message content");
        }
        return {
          text,
          promptTokens: data?.usage?.prompt_tokens,
          completionTokens: data?.usage?.completion_tokens,
        };
      } catch (err) {
        lastError = err;
        if (attempt < this.attempts) {
          this.warn(`provider call failed (attempt ${attempt}/${this.attempts}): ${String(err)}`);
          await new Promise((r) => setTimeout(r, 100 * attempt));
        }
      }
    }
    throw new BridgeError(`provider failed after ${this.attempts} attempts: ${String(lastError)}`);
  }
}

/** Scripted provider for tests and offline runs: pops replies in order,
 * then keeps repeating the last one. */
export class MockProvider implements Provider {
  calls = 0;

  constructor(private replies: string[] = ["SCAN"]) {}

  async complete(_system: string, _user: string): Promise<CompletionResult> {
    const idx = Math.min(this.calls, this.replies.length - 1);
    this.calls += 1;
    return { text: this.replies[idx], promptTokens: 0, completionTokens: 1 };
  }
}

/** Mock that always answers with the first advertised action in the prompt. */
export class FirstActionMockProvider implements Provider {
  async complete(_system: string, user: string): Promise<CompletionResult> {
    const section = user.split("AVAILABLE ACTIONS:\n")[1] ?? "";
    const first = section.split("\n")[0]?.split(", ")[0] ?? "SCAN";
    return { text: first, promptTokens: 0, completionTokens: 1 };
  }
}
