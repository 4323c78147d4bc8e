/**
 * Entry point for the bundled page at /app: reads the embedded JSON config
 * block and mounts a PageHandler into #annotate-root.
 */

import { PageHandler, PageHandlerConfig } from "./page-handler.js";

export function boot(doc: Document = document): PageHandler {
  const configEl = doc.getElementById("annotate-config");
  if (!configEl) throw new Error("missing #annotate-config block");
  const config = JSON.parse(configEl.textContent ?? "{}") as PageHandlerConfig;
  const mount = doc.getElementById("annotate-root");
  if (!mount) throw new Error("missing #annotate-root container");
  const handler = new PageHandler(config);
  handler.init(mount);
  return handler;
}

if (typeof document !== "undefined" && document.getElementById("annotate-root")) {
  boot();
}
