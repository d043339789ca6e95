/** Entry point: create a session against the configured service and mount
 * the console. The service base URL comes from ?api=... (default
 * http://127.0.0.1:8040). */

import { ApiClient } from "./api.js";
import { SessionStore } from "./state.js";
import { mountApp } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8040";

const store = new SessionStore(new ApiClient(baseUrl));
const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

mountApp(root, store);
store.start().catch((err) => {
  const banner = document.getElementById("error-banner");
  if (banner) {
    banner.hidden = false;
    banner.textContent = `cannot reach service at ${baseUrl}: ${err}`;
  }
});
