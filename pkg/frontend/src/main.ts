import { ApiClient } from "./api.js";
import { ValidationApp } from "./app.js";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");
  const annotatorId =
    new URLSearchParams(window.location.search).get("annotator") ?? "default";
  const app = new ValidationApp(root, new ApiClient(""), { annotatorId });
  void app.start();
});
