/** Browser entry point: wires the view models to the DOM.

Configuration comes from the query string (?service=URL) or same-origin
default; the bearer token is kept in sessionStorage under "claimmatch_token".
The console is stateless: every repaint reconstructs from service responses.
*/

import { Client } from "./api.js";
import { ClusterBrowserModel } from "./clusters.js";
import { QueueViewModel } from "./queue.js";
import { renderClusters, renderQueue } from "./render.js";

const REFRESH_MS = 10_000;

function config() {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("service") ?? window.location.origin;
  const token = sessionStorage.getItem("claimmatch_token") ?? undefined;
  return { baseUrl, token };
}

const client = new Client(config());
const queue = new QueueViewModel(client);
const clusters = new ClusterBrowserModel(client);

const queueRoot = document.getElementById("queue")!;
const clustersRoot = document.getElementById("clusters")!;

function paint(): void {
  queueRoot.innerHTML = renderQueue(queue);
  clustersRoot.innerHTML = renderClusters(clusters);
}

async function refresh(): Promise<void> {
  await Promise.allSettled([queue.load(), clusters.load()]);
  paint();
}

queueRoot.addEventListener("click", async (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset["action"];
  if (!action) {
    return;
  }
  if (action === "confirm" || action === "reject") {
    const id = target.dataset["id"]!;
    await queue.resolve(id, action);
    await clusters.load().catch(() => undefined);
  } else if (action === "next-page") {
    queue.nextPage();
  } else if (action === "prev-page") {
    queue.prevPage();
  }
  paint();
});

clustersRoot.addEventListener("click", async (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset["action"];
  if (!action) {
    return;
  }
  if (action === "open-cluster") {
    await clusters.open(Number(target.dataset["id"])).catch(() => undefined);
  } else if (action === "close-detail") {
    clusters.close();
  }
  paint();
});

clustersRoot.addEventListener("submit", async (event) => {
  const form = event.target as HTMLFormElement;
  if (form.dataset["action"] !== "search") {
    return;
  }
  event.preventDefault();
  const q = (new FormData(form).get("q") as string | null) ?? "";
  if (q.trim()) {
    await clusters.search(q).catch(() => undefined);
  } else {
    clusters.clearSearch();
  }
  paint();
});

void refresh();
setInterval(() => void refresh(), REFRESH_MS);
