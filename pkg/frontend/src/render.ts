/** Pure view functions: state in, HTML string out.

Kept free of DOM APIs so they are testable anywhere. Message texts span
many scripts, so every text node is wrapped in <bdi dir="auto"> and HTML
is escaped before interpolation.
*/

import type { ClusterBrowserModel } from "./clusters.js";
import type { QueueViewModel } from "./queue.js";
import type { PreviewResult, ReviewRow } from "./types.js";

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function text(raw: string): string {
  return `<bdi dir="auto">${escapeHtml(raw)}</bdi>`;
}

function banner(message: string | null): string {
  if (!message) {
    return "";
  }
  return `<div class="banner" role="alert">${escapeHtml(message)}</div>`;
}

function reviewRow(row: ReviewRow): string {
  return `
  <tr data-review-id="${escapeHtml(row.id)}">
    <td class="cosine">${row.cosine.toFixed(3)}</td>
    <td class="text">${text(row.query_text)}</td>
    <td class="text">${text(row.candidate_text)}</td>
    <td class="when">${escapeHtml(row.created_at)}</td>
    <td class="actions">
      <button data-action="confirm" data-id="${escapeHtml(row.id)}">confirm</button>
      <button data-action="reject" data-id="${escapeHtml(row.id)}">reject</button>
    </td>
  </tr>`;
}

export function renderQueue(model: QueueViewModel): string {
  const parts = [banner(model.banner)];
  if (model.conflictNotice) {
    parts.push(
      `<div class="conflict" role="status">resolved elsewhere &mdash; ` +
        `${escapeHtml(model.conflictNotice)}</div>`,
    );
  }
  if (model.isEmpty) {
    parts.push(`<div class="empty-state">No suggestions waiting for review.</div>`);
    return parts.join("\n");
  }
  const rows = model.page().map(reviewRow).join("\n");
  parts.push(`
  <table class="queue">
    <thead>
      <tr><th>cosine</th><th>new message</th><th>existing claim</th><th>submitted</th><th></th></tr>
    </thead>
    <tbody>${rows}</tbody>
  </table>`);
  const pager = [
    model.hasPrevPage() ? `<button data-action="prev-page">newer</button>` : "",
    model.hasNextPage() ? `<button data-action="next-page">older</button>` : "",
  ].join(" ");
  if (pager.trim()) {
    parts.push(`<div class="pager">${pager}</div>`);
  }
  return parts.join("\n");
}

function previewPanel(preview: PreviewResult): string {
  const rows = preview.candidates
    .map(
      (c) => `
    <li>
      <span class="cosine">${c.cosine.toFixed(3)}</span>
      ${text(c.text)}
      <button data-action="open-cluster" data-id="${c.cluster_id}">cluster ${c.cluster_id}</button>
    </li>`,
    )
    .join("\n");
  return `
  <div class="preview">
    <div class="decision">would be: <strong>${escapeHtml(preview.decision)}</strong></div>
    <ul>${rows || "<li>no similar claims found</li>"}</ul>
  </div>`;
}

export function renderClusters(model: ClusterBrowserModel): string {
  const parts = [banner(model.banner)];
  parts.push(`
  <form class="search" data-action="search">
    <input name="q" type="search" placeholder="paste a message to preview its match" />
    <button type="submit">preview</button>
  </form>`);
  if (model.preview) {
    parts.push(previewPanel(model.preview));
  }
  if (model.isEmpty) {
    parts.push(`<div class="empty-state">No clusters of size ${model.minSize}+ yet.</div>`);
  } else {
    const rows = model
      .list()
      .map(
        (c) => `
    <li>
      <button data-action="open-cluster" data-id="${c.id}">cluster ${c.id}</button>
      <span class="size">${c.size} message${c.size === 1 ? "" : "s"}</span>
    </li>`,
      )
      .join("\n");
    parts.push(`<ol class="clusters">${rows}</ol>`);
  }
  const detail = model.detail;
  if (detail) {
    const reps = detail.representatives;
    const members = detail.members
      .map((m) => `<li>${text(m.text)} <span class="id">${escapeHtml(m.id)}</span></li>`)
      .join("\n");
    parts.push(`
  <section class="detail" data-cluster-id="${detail.id}">
    <h2>cluster ${detail.id} (${detail.size})</h2>
    <dl class="representatives">
      <dt>most central</dt><dd>${text(reps.medoid.text)}</dd>
      <dt>least central</dt><dd>${text(reps.anti_medoid.text)}</dd>
      <dt>random</dt><dd>${text(reps.random.text)}</dd>
    </dl>
    <ul class="members">${members}</ul>
    <button data-action="close-detail">close</button>
  </section>`);
  }
  return parts.join("\n");
}
