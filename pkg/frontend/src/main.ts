// Browser bootstrap.  The gateway origin comes from ?gateway=... (defaults
// to same origin) and an optional operator token from ?token=... for the
// setpoint forms.

import { GatewayApi } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("gateway") ?? "";
const api = new GatewayApi(base, (url, init) => fetch(url, init), params.get("token"));

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}

const app = new App(api, (url) => new EventSource(url), root);
void app.start();
