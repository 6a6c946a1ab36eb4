/**
 * HTTP surface:
 *   GET  /health -> {status, fingerprint, d, d_t, max_doc_tokens, max_prefix_tokens}
 *   POST /encode -> {kind: "document"|"prefix", tokens: string[]}
 *     documents: {d, d_t, start, end, fingerprint}
 *     prefixes:  {d, d_t, q, fingerprint}
 * Errors: 400 bad schema, 404 unknown path, 405 wrong method, 413 too many
 * tokens, 503 model not loaded. Stateless per request.
 */

import { createServer, IncomingMessage, Server, ServerResponse } from "node:http";
import { ContextEncoder } from "./encoder.js";

export interface Limits {
  maxDocTokens: number;
  maxPrefixTokens: number;
}

export const DEFAULT_LIMITS: Limits = { maxDocTokens: 256, maxPrefixTokens: 512 };

interface EncodeRequest {
  kind: "document" | "prefix";
  tokens: string[];
}

function parseEncodeRequest(body: string): EncodeRequest {
  let data: unknown;
  try {
    data = JSON.parse(body);
  } catch {
    throw new SchemaError("body is not valid JSON");
  }
  if (typeof data !== "object" || data === null) {
    throw new SchemaError("body must be a JSON object");
  }
  const record = data as Record<string, unknown>;
  if (record.kind !== "document" && record.kind !== "prefix") {
    throw new SchemaError('kind must be "document" or "prefix"');
  }
  if (
    !Array.isArray(record.tokens) ||
    record.tokens.length === 0 ||
    record.tokens.some((t) => typeof t !== "string")
  ) {
    throw new SchemaError("tokens must be a non-empty array of strings");
  }
  return { kind: record.kind, tokens: record.tokens as string[] };
}

class SchemaError extends Error {}

function sendJson(res: ServerResponse, status: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  res.writeHead(status, {
    "Content-Type": "application/json",
    "Content-Length": Buffer.byteLength(body),
  });
  res.end(body);
}

function readBody(req: IncomingMessage): Promise<string> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
    req.on("error", reject);
  });
}

export function makeServer(encoder: ContextEncoder | null, limits: Limits = DEFAULT_LIMITS): Server {
  return createServer(async (req, res) => {
    try {
      if (req.url === "/health") {
        if (req.method !== "GET") {
          return sendJson(res, 405, { error: "use GET" });
        }
        if (!encoder) {
          return sendJson(res, 503, { status: "loading" });
        }
        return sendJson(res, 200, {
          status: "ok",
          fingerprint: encoder.fingerprint,
          d: encoder.d,
          d_t: encoder.dt,
          max_doc_tokens: limits.maxDocTokens,
          max_prefix_tokens: limits.maxPrefixTokens,
        });
      }
      if (req.url === "/encode") {
        if (req.method !== "POST") {
          return sendJson(res, 405, { error: "use POST" });
        }
        if (!encoder) {
          return sendJson(res, 503, { error: "model not loaded" });
        }
        let request: EncodeRequest;
        try {
          request = parseEncodeRequest(await readBody(req));
        } catch (err) {
          if (err instanceof SchemaError) {
            return sendJson(res, 400, { error: err.message });
          }
          throw err;
        }
        const limit = request.kind === "document" ? limits.maxDocTokens : limits.maxPrefixTokens;
        if (request.tokens.length > limit) {
          return sendJson(res, 413, {
            error: `${request.kind} of ${request.tokens.length} tokens exceeds limit ${limit}`,
          });
        }
        if (request.kind === "document") {
          const { start, end } = encoder.encodeDocument(request.tokens);
          return sendJson(res, 200, {
            d: encoder.d,
            d_t: encoder.dt,
            start,
            end,
            fingerprint: encoder.fingerprint,
          });
        }
        return sendJson(res, 200, {
          d: encoder.d,
          d_t: encoder.dt,
          q: encoder.encodePrefix(request.tokens),
          fingerprint: encoder.fingerprint,
        });
      }
      sendJson(res, 404, { error: `no such path: ${req.url}` });
    } catch (err) {
      sendJson(res, 500, { error: String(err) });
    }
  });
}
