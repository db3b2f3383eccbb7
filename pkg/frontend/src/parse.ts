// Strict action-token parsing for model output.

export const CANONICAL_TOKENS = [
  "MOVE_N",
  "MOVE_S",
  "MOVE_E",
  "MOVE_W",
  "INTERACT",
  "SCAN",
  "MEASURE",
] as const;

export type ActionToken = (typeof CANONICAL_TOKENS)[number];

const TOKEN_SET: ReadonlySet<string> = new Set(CANONICAL_TOKENS);

/**
 * Accept a model reply iff, after trimming surrounding whitespace, it is
 * exactly one canonical action token. Anything else (prose, unknown tokens,
 * multiple tokens) is rejected with null.
 */
export function parseAction(output: string): ActionToken | null {
  const token = output.trim();
  return TOKEN_SET.has(token) ? (token as ActionToken) : null;
}
