/** Browser entry: connect to a session, render the river, animate tokens.
 *
 * Usage: serve this module in a page with a #app container and set
 * window.TOPICFLOW_BASE / window.TOPICFLOW_SESSION (or pass ?session=...).
 */
import { ApiClient } from "./api.js";
import { SedimentationView } from "./animate.js";
import { Controller } from "./interactions.js";
import { renderTokens, toSvg } from "./render.js";

declare global {
  interface Window {
    TOPICFLOW_BASE?: string;
    TOPICFLOW_SESSION?: string;
  }
}

export async function mount(container: HTMLElement): Promise<void> {
  const base = window.TOPICFLOW_BASE ?? "";
  const params = new URLSearchParams(window.location.search);
  const sessionId =
    params.get("session") ?? window.TOPICFLOW_SESSION ?? "";
  if (!sessionId) {
    container.textContent = "no session id: pass ?session=<id>";
    return;
  }
  const api = new ApiClient(base);
  const controller = new Controller(api, sessionId, [
    container.clientWidth || 1600,
    container.clientHeight || 900,
  ]);
  const view = new SedimentationView();
  const draw = () => {
    if (!controller.state.visual) return;
    const tree = {
      elements: [
        ...controller.state.visual.elements,
        ...controller.packingElements(),
        ...renderTokens(view.frame(1)),
      ],
      error: controller.state.visual.error,
    };
    container.innerHTML = toSvg(tree);
    for (const el of container.querySelectorAll("path[data-id]")) {
      el.addEventListener("click", () =>
        controller.clickStripe((el as SVGElement).dataset.id ?? ""),
      );
    }
  };
  view.onLayoutInvalid = () => {
    void controller.refresh().then(draw);
  };
  await controller.refresh();
  draw();
  void view.consume(api.events(sessionId), () => draw());
}

if (typeof document !== "undefined") {
  const app = document.getElementById("app");
  if (app) void mount(app);
}
