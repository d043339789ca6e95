/** Session view-model. The only client-side state is the session id and the
 * current object; everything displayed is refreshed from service responses,
 * so a replayed session renders identically. */

import { ApiClient, bytesToBase64 } from "./api.js";
import type {
  CategoryCard, ClassifyResponse, EventEntry, SessionConfig,
} from "./types.js";

export interface CurrentObject {
  filename: string;
  contentB64: string;
  /** reference returned by the most recent classify of this object */
  objectRef: string | null;
}

export interface FeedLine {
  seq: number;
  text: string;
}

export type Listener = () => void;

export class SessionStore {
  sessionId: string | null = null;
  categories: CategoryCard[] = [];
  accuracy: number | null = null;
  bootstrapped = false;
  current: CurrentObject | null = null;
  lastResult: ClassifyResponse | null = null;
  feed: FeedLine[] = [];
  busy: string | null = null;
  error: string | null = null;

  private listeners: Listener[] = [];

  constructor(readonly api: ApiClient) {}

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  private async withBusy<T>(label: string, work: () => Promise<T>): Promise<T> {
    this.busy = label;
    this.error = null;
    this.emit();
    try {
      return await work();
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.busy = null;
      this.emit();
    }
  }

  async start(config: SessionConfig = {}): Promise<void> {
    await this.withBusy("creating session", async () => {
      const created = await this.api.createSession(config);
      this.sessionId = created.session_id;
      await this.refreshState();
    });
  }

  async refreshState(): Promise<void> {
    if (!this.sessionId) return;
    const state = await this.api.getState(this.sessionId);
    this.categories = state.categories;
    this.accuracy = state.accuracy;
    this.bootstrapped = state.bootstrapped;
    const events = await this.api.getEvents(this.sessionId);
    this.mergeFeed(events.events);
    this.emit();
  }

  /** The feed is append-only: existing lines are never replaced. */
  private mergeFeed(events: EventEntry[]): void {
    const have = new Set(this.feed.map((l) => l.seq));
    for (const e of events) {
      if (!have.has(e.seq)) {
        this.feed.push({ seq: e.seq, text: describeEvent(e) });
      }
    }
    this.feed.sort((a, b) => a.seq - b.seq);
  }

  async uploadAndClassify(filename: string, bytes: Uint8Array): Promise<ClassifyResponse> {
    return this.classifyContent(filename, bytesToBase64(bytes));
  }

  async classifyContent(filename: string, contentB64: string): Promise<ClassifyResponse> {
    if (!this.sessionId) throw new Error("no active session");
    return this.withBusy("classifying", async () => {
      const result = await this.api.classify(this.sessionId!, filename, contentB64);
      this.current = { filename, contentB64, objectRef: result.object_ref };
      this.lastResult = result;
      await this.refreshState();
      return result;
    });
  }

  async teachCurrent(name: string): Promise<ClassifyResponse> {
    if (!this.sessionId) throw new Error("no active session");
    const obj = this.current;
    if (!obj) throw new Error("no object to teach");
    return this.withBusy(`teaching ${name}`, async () => {
      await this.api.teach(this.sessionId!, name,
        [{ filename: obj.filename, content_b64: obj.contentB64 }]);
      await this.refreshState();
      // reclassify the same object so the effect of the action is visible
      const result = await this.api.classify(this.sessionId!, obj.filename,
        obj.contentB64);
      this.current = { ...obj, objectRef: result.object_ref };
      this.lastResult = result;
      await this.refreshState();
      return result;
    });
  }

  async correctCurrent(name: string): Promise<ClassifyResponse> {
    if (!this.sessionId) throw new Error("no active session");
    const obj = this.current;
    if (!obj || !obj.objectRef) throw new Error("no classified object to correct");
    return this.withBusy(`correcting to ${name}`, async () => {
      await this.api.correct(this.sessionId!, obj.objectRef!, name);
      await this.refreshState();
      const result = await this.api.classify(this.sessionId!, obj.filename,
        obj.contentB64);
      this.current = { ...obj, objectRef: result.object_ref };
      this.lastResult = result;
      await this.refreshState();
      return result;
    });
  }

  async runMaintenance(kind: "refresh-topics" | "rebuild-dictionary"): Promise<void> {
    if (!this.sessionId) throw new Error("no active session");
    await this.withBusy(kind, async () => {
      if (kind === "refresh-topics") {
        await this.api.refreshTopics(this.sessionId!);
      } else {
        await this.api.rebuildDictionary(this.sessionId!);
      }
      await this.refreshState();
    });
  }

  /** Ranked (category, ocd) pairs ascending, straight from the last response. */
  rankedOcd(): { category: string; ocd: number }[] {
    return this.lastResult ? [...this.lastResult.per_category_ocd] : [];
  }
}

export function describeEvent(e: EventEntry): string {
  switch (e.kind) {
    case "create":
      return "session created";
    case "teach":
      return `teach "${e["name"]}"`;
    case "classify": {
      const result = e["result"] as { label?: string } | undefined;
      return `classify -> ${result?.label ?? "?"}`;
    }
    case "correct":
      return `correct -> "${e["name"]}"`;
    case "refresh-topics":
      return "maintenance: refresh topics";
    case "rebuild-dictionary":
      return "maintenance: rebuild dictionary";
    default:
      return e.kind;
  }
}
