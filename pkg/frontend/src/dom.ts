import type { DialogController, Selection, ViewState } from "./controller.js";

// Declarative DOM binder: rebuilds the panel from the view state on every
// render. All semantics live in the service; this file only draws.

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node;
}

function readSelection(form: HTMLElement): Selection {
  const affirmed: number[] = [];
  const negated: number[] = [];
  form.querySelectorAll<HTMLInputElement>("input[data-option]").forEach((input) => {
    if (!input.checked) return;
    const id = Number(input.dataset.option);
    if (input.dataset.polarity === "negated") negated.push(id);
    else affirmed.push(id);
  });
  return { kind: "choose", affirmed, negated };
}

export function bind(root: HTMLElement, controller: DialogController): (state: ViewState) => void {
  return (state: ViewState) => {
    root.replaceChildren();

    if (state.warning) {
      root.append(el("p", { class: "warning", role: "alert" }, state.warning));
    }

    if (state.status === "idle") {
      root.append(el("p", {}, "No session. Pick an axis to start."));
      return;
    }

    root.append(
      el("nav", { class: "breadcrumb" }, state.breadcrumb.join(" › ")),
    );

    if (state.status === "active") {
      const form = el("form", { class: "question" });
      form.append(el("h2", {}, state.prompt ?? ""));
      for (const note of state.notes) {
        form.append(el("p", { class: "note" }, note));
      }
      const type = state.control === "single" ? "radio" : "checkbox";
      for (const option of state.options) {
        const row = el("label", { class: "option" });
        const input = el("input", {
          type,
          name: "choice",
          "data-option": String(option.nodeId),
        });
        row.append(input, el("span", {}, option.label + (option.hasChildren ? " …" : "")));
        if (state.allowNegate) {
          const negate = el("input", {
            type: "checkbox",
            title: `rule out ${option.label}`,
            "data-option": String(option.nodeId),
            "data-polarity": "negated",
          });
          row.append(el("span", { class: "negate" }, " not:"), negate);
        }
        form.append(row);
      }
      const submit = el("button", { type: "submit" }, "Answer");
      form.append(submit);
      form.addEventListener("submit", (event) => {
        event.preventDefault();
        void controller.choose(readSelection(form));
      });
      root.append(form);
      if (state.allowSkip) {
        const skip = el("button", { class: "skip" }, "Skip");
        skip.addEventListener("click", () => void controller.choose({ kind: "skip" }));
        root.append(skip);
      }
    } else {
      const panel = el("section", { class: "completion" });
      panel.append(
        el(
          "h2",
          {},
          state.status === "committed" ? "Episode committed" : "Dialog complete",
        ),
      );
      const list = el("ul", { class: "episode-keys" });
      for (const record of state.episodeKeys) {
        list.append(
          el(
            "li",
            { "data-polarity": record.polarity },
            `${record.polarity === "negated" ? "not " : ""}${record.key}`,
          ),
        );
      }
      panel.append(list);
      if (state.status === "committed") {
        panel.append(el("p", {}, `stored as ${state.committedEpisodeId}`));
        for (const set of state.inferred) {
          panel.append(el("h3", {}, `most specific (${set.set})`));
          const inferredList = el("ul", { class: "inferred" });
          for (const concept of set.most_specific) {
            inferredList.append(el("li", {}, `${concept.name} ${concept.key}`));
          }
          panel.append(inferredList);
        }
      } else {
        const commit = el("button", { class: "commit" }, "Commit episode");
        commit.addEventListener("click", () => void controller.commit());
        panel.append(commit);
      }
      root.append(panel);
    }

    if (state.canGoBack && state.status !== "committed") {
      const back = el("button", { class: "back" }, "Back");
      back.addEventListener("click", () => void controller.goBack());
      root.append(back);
    }
  };
}
