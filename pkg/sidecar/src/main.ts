import { ContextEncoder, parseModelName } from "./encoder.js";
import { DEFAULT_LIMITS, makeServer } from "./server.js";

const modelName = process.env.MODEL_NAME ?? "ctx-mean-64";
const port = parseInt(process.env.PORT ?? "9876", 10);
const limits = {
  maxDocTokens: parseInt(process.env.MAX_DOC_TOKENS ?? String(DEFAULT_LIMITS.maxDocTokens), 10),
  maxPrefixTokens: parseInt(
    process.env.MAX_PREFIX_TOKENS ?? String(DEFAULT_LIMITS.maxPrefixTokens),
    10
  ),
};

const encoder = new ContextEncoder(parseModelName(modelName));
const server = makeServer(encoder, limits);
server.listen(port, () => {
  console.log(
    `sidecar listening on :${port} model=${modelName} d=${encoder.d} fingerprint=${encoder.fingerprint}`
  );
});
