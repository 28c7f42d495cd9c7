import { SessionEvent } from "./types.js";

/**
 * Incremental server-sent-events parser. Feed it raw text chunks (which may
 * split lines or records arbitrarily); it dispatches one callback per
 * complete record. Comment lines (keepalives) are ignored.
 */
export function createSSEParser(
  onEvent: (ev: SessionEvent) => void,
): (chunk: string) => void {
  let buffer = "";
  let eventName = "";
  let dataLines: string[] = [];

  function dispatch() {
    if (eventName && dataLines.length > 0) {
      let data: Record<string, unknown> = {};
      try {
        data = JSON.parse(dataLines.join("\n")) as Record<string, unknown>;
      } catch {
        // tolerate malformed payloads; deliver the raw text
        data = { raw: dataLines.join("\n") };
      }
      onEvent({ event: eventName as SessionEvent["event"], data });
    }
    eventName = "";
    dataLines = [];
  }

  return (chunk: string) => {
    buffer += chunk;
    let nl: number;
    while ((nl = buffer.indexOf("\n")) >= 0) {
      let line = buffer.slice(0, nl);
      buffer = buffer.slice(nl + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      if (line === "") {
        dispatch();
      } else if (line.startsWith(":")) {
        // keepalive comment
      } else if (line.startsWith("event:")) {
        eventName = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        dataLines.push(line.slice(5).trim());
      }
    }
  };
}

/**
 * Subscribe to an SSE endpoint using streaming fetch. Resolves when the
 * stream ends (the server closes it after the `finalized` event). Returns an
 * abort function via the optional signal argument.
 */
export async function subscribeEvents(
  url: string,
  onEvent: (ev: SessionEvent) => void,
  fetchImpl: typeof fetch = fetch,
  signal?: AbortSignal,
): Promise<void> {
  const resp = await fetchImpl(url, {
    headers: { accept: "text/event-stream" },
    signal,
  });
  if (!resp.ok || resp.body === null) {
    throw new Error(`event stream failed: HTTP ${resp.status}`);
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  const feed = createSSEParser(onEvent);
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    feed(decoder.decode(value, { stream: true }));
  }
}
