/** View model for the pending-review queue.

State is always reconstructable from the service: `load()` refetches, and
every mutation is optimistic with rollback, so a failed call never leaves
the view ahead of the server. Conflicts (the item was resolved in another
tab) refresh the queue and are surfaced, never silently merged.
*/

import { ApiError, Client } from "./api.js";
import type { ReviewRow, ReviewVerdict } from "./types.js";

export type ResolveOutcome = "applied" | "conflict" | "error";

const PAGE_SIZE = 20;

function queueOrder(a: ReviewRow, b: ReviewRow): number {
  if (a.cosine !== b.cosine) {
    return b.cosine - a.cosine;
  }
  if (a.created_at !== b.created_at) {
    return a.created_at < b.created_at ? 1 : -1;
  }
  return a.id < b.id ? -1 : 1;
}

export class QueueViewModel {
  private rows: ReviewRow[] = [];
  private cursor = 0;
  banner: string | null = null;
  /** Most recent stale-item notice, e.g. after a double resolve. */
  conflictNotice: string | null = null;
  loaded = false;

  constructor(
    private readonly client: Client,
    private readonly pageSize: number = PAGE_SIZE,
  ) {}

  /** Pending rows in queue order: cosine descending, then newest first. */
  allRows(): ReviewRow[] {
    return [...this.rows];
  }

  /** The page under the cursor. */
  page(): ReviewRow[] {
    return this.rows.slice(this.cursor, this.cursor + this.pageSize);
  }

  get isEmpty(): boolean {
    return this.loaded && this.rows.length === 0;
  }

  hasNextPage(): boolean {
    return this.cursor + this.pageSize < this.rows.length;
  }

  hasPrevPage(): boolean {
    return this.cursor > 0;
  }

  nextPage(): void {
    if (this.hasNextPage()) {
      this.cursor += this.pageSize;
    }
  }

  prevPage(): void {
    this.cursor = Math.max(0, this.cursor - this.pageSize);
  }

  async load(): Promise<void> {
    try {
      const rows = await this.client.listReviews("pending");
      this.rows = rows.sort(queueOrder);
      this.cursor = Math.min(this.cursor, Math.max(0, this.rows.length - 1));
      this.banner = null;
      this.loaded = true;
    } catch (err) {
      this.banner = describeFailure(err);
      throw err;
    }
  }

  /** Optimistically resolve one row; rolls back if the service refuses. */
  async resolve(id: string, verdict: ReviewVerdict, reviewer?: string): Promise<ResolveOutcome> {
    const snapshot = this.rows;
    this.rows = this.rows.filter((row) => row.id !== id);
    try {
      await this.client.resolveReview(id, verdict, reviewer);
      this.conflictNotice = null;
      return "applied";
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // resolved in another tab: surface it and refresh from the service
        this.conflictNotice = `review ${id}: ${err.message}`;
        await this.load().catch(() => undefined);
        return "conflict";
      }
      this.rows = snapshot;
      this.banner = describeFailure(err);
      return "error";
    }
  }
}

function describeFailure(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.message}`;
  }
  return "network failure: the service is unreachable";
}
