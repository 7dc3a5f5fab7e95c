/** View model for the cluster browser: size-ordered listing, drill-down
with the three representatives, manual match attachment, and a read-only
match preview for the search box.
*/

import { ApiError, Client } from "./api.js";
import type { ClusterDetail, ClusterSummary, PreviewResult } from "./types.js";

function sizeOrder(a: ClusterSummary, b: ClusterSummary): number {
  if (a.size !== b.size) {
    return b.size - a.size;
  }
  return a.id - b.id;
}

export class ClusterBrowserModel {
  private clusters: ClusterSummary[] = [];
  detail: ClusterDetail | null = null;
  preview: PreviewResult | null = null;
  banner: string | null = null;
  loaded = false;

  constructor(
    private readonly client: Client,
    public minSize: number = 2,
  ) {}

  /** Clusters sorted by size descending (id ascending on ties). */
  list(): ClusterSummary[] {
    return [...this.clusters];
  }

  get isEmpty(): boolean {
    return this.loaded && this.clusters.length === 0;
  }

  async load(): Promise<void> {
    try {
      const clusters = await this.client.listClusters(this.minSize);
      this.clusters = clusters.sort(sizeOrder);
      this.banner = null;
      this.loaded = true;
    } catch (err) {
      this.banner = describeFailure(err);
      throw err;
    }
  }

  async open(id: number): Promise<void> {
    try {
      this.detail = await this.client.clusterDetail(id);
      this.banner = null;
    } catch (err) {
      this.banner = describeFailure(err);
      throw err;
    }
  }

  close(): void {
    this.detail = null;
  }

  /** Manually attach two messages, then resync list and open the merge. */
  async attach(idA: string, idB: string, reviewer?: string): Promise<number> {
    const { cluster_id } = await this.client.addManualMatch(idA, idB, reviewer);
    await this.load();
    await this.open(cluster_id);
    return cluster_id;
  }

  /** Read-only match preview for the search box; persists nothing. */
  async search(text: string): Promise<PreviewResult> {
    try {
      this.preview = await this.client.previewMatch(text);
      this.banner = null;
      return this.preview;
    } catch (err) {
      this.banner = describeFailure(err);
      throw err;
    }
  }

  clearSearch(): void {
    this.preview = null;
  }
}

function describeFailure(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.message}`;
  }
  return "network failure: the service is unreachable";
}
