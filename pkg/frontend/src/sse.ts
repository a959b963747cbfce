/** Incremental parser for a server-sent-events byte stream.
 *
 * Only the subset the guidance service emits is handled: `data:` lines with
 * JSON payloads separated by blank lines, plus comment keep-alives (`:`).
 */

export class SseParser {
  private buffer = "";

  /** Feed a chunk; returns the JSON payloads of any completed events. */
  feed(chunk: string): unknown[] {
    this.buffer += chunk;
    const events: unknown[] = [];
    let sep: number;
    while ((sep = this.buffer.indexOf("\n\n")) >= 0) {
      const raw = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      const data = raw
        .split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart())
        .join("\n");
      if (data.length > 0) {
        events.push(JSON.parse(data));
      }
    }
    return events;
  }
}
