import { DialogApi } from "./api.js";
import { DialogController, ViewState } from "./controller.js";
import { bind } from "./dom.js";

// ?api=http://host:port overrides the service location; default assumes
// `semindex serve --port 8000` next door.
const params = new URLSearchParams(window.location.search);
const api = new DialogApi(params.get("api") ?? "http://127.0.0.1:8000");

const dialogRoot = document.getElementById("dialog");
const axesRoot = document.getElementById("axes");
if (!(dialogRoot instanceof HTMLElement) || !(axesRoot instanceof HTMLElement)) {
  throw new Error("index.html is missing the #dialog / #axes containers");
}
const root: HTMLElement = dialogRoot;
const picker: HTMLElement = axesRoot;

let render: (state: ViewState) => void;
const controller = new DialogController(api, (state) => render(state));
render = bind(root, controller);

async function loadAxes(): Promise<void> {
  picker.replaceChildren();
  try {
    const { axes } = await api.listAxes();
    if (axes.length === 0) {
      picker.append(document.createTextNode("No axes cataloged yet."));
      return;
    }
    for (const axis of axes) {
      const button = document.createElement("button");
      button.textContent = `${axis.title} (${axis.axis})`;
      button.addEventListener("click", () => void controller.start(axis.axis));
      picker.append(button);
    }
  } catch (error) {
    const note = document.createElement("p");
    note.className = "warning";
    note.textContent = `service unreachable: ${String(error)}`;
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void loadAxes());
    picker.append(note, retry);
  }
}

void loadAxes();
