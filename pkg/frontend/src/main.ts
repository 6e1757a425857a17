import { App } from "./app.js";
import { ServiceClient } from "./api.js";

declare global {
  interface Window {
    TMJCDS_BASE_URL?: string;
  }
}

const baseUrl = window.TMJCDS_BASE_URL ?? "http://127.0.0.1:8000";
const client = new ServiceClient(baseUrl);

const app = new App(client, {
  form: document.getElementById("exam-form")!,
  explanation: document.getElementById("explanation")!,
  whatif: document.getElementById("whatif")!,
  status: document.getElementById("status")!,
});

void app.start();
