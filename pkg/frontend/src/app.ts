/**
 * Browser entry point: wires the experiment list, the wizard form, the
 * control buttons, and the polled monitor chart to a live backend.
 *
 * All truth lives server-side; this file only moves strings between DOM
 * nodes and the typed client. It is deliberately framework-free, so the
 * console ships as one static page plus the compiled module graph.
 */

import { ConsoleApi, ControlAction, ExperimentJson, ExperimentStatus } from "./api.js";
import { renderMonitor, sceneToSvg } from "./chart.js";
import { allowedActions, controlAction, ControlState } from "./controls.js";
import { MonitorPoller } from "./poller.js";
import {
  validateDraft,
  WIZARD_STEPS,
  WizardDraft,
  wizardSubmit,
} from "./wizard.js";

interface ConsolePage {
  root: HTMLElement;
  api: ConsoleApi;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function defaultDraft(): WizardDraft {
  return {
    experimentId: "",
    predicate: { op: "and", children: [] },
    arms: [
      { arm_id: "treatment", content_ref: "rec:pair" },
      { arm_id: "control", content_ref: "none" },
    ],
    design: { kind: "fixed_ab", ratio: 0.5 },
    metric: {
      name: "variety",
      aggregation: "mean",
      trait: {
        name: "weekly_purchased_variety",
        kind: "dynamic",
        window_days: 7,
        definition: ["weekly_purchased_variety"],
      },
    },
    cadenceDays: 7,
    startDay: 0,
    endDay: 28,
    seed: 1,
  };
}

function renderStatusChip(chip: HTMLElement, status: ExperimentStatus): void {
  chip.textContent = status;
  chip.dataset.status = status;
}

function renderControls(
  page: ConsolePage,
  container: HTMLElement,
  chip: HTMLElement,
  toastBox: HTMLElement,
  state: ControlState,
): void {
  container.replaceChildren();
  renderStatusChip(chip, state.status);
  toastBox.textContent = state.toast ?? "";
  const legal = allowedActions(state.status);
  for (const action of ["pause", "resume", "stop"] as ControlAction[]) {
    const button = el("button", "control-button", action);
    button.disabled = !legal.includes(action);
    button.addEventListener("click", () => {
      void controlAction(page.api, state, action).then((next) =>
        renderControls(page, container, chip, toastBox, next),
      );
    });
    container.appendChild(button);
  }
}

function mountMonitor(page: ConsolePage, experiment: ExperimentJson): () => void {
  const holder = el("div", "monitor-chart");
  page.root.appendChild(holder);
  const poller = new MonitorPoller(
    page.api,
    experiment.experiment_id,
    { fromDay: experiment.start_day, toDay: experiment.end_day },
    (vm) => {
      const payload = {
        experiment_id: vm.experimentId,
        from_day: vm.fromDay,
        to_day: vm.toDay,
        estimates: vm.days.map((day, i) => ({
          day,
          diff: vm.diffs[i]!,
          ci_low: vm.ciBands[i]!.low,
          ci_high: vm.ciBands[i]!.high,
          n_t: 0,
          n_c: 0,
          interactions: vm.interactions[i]!,
        })),
      };
      holder.innerHTML = sceneToSvg(renderMonitor(payload));
    },
    (err) => {
      holder.innerHTML = sceneToSvg({
        kind: "error",
        message: err instanceof Error ? err.message : String(err),
      });
    },
  );
  poller.start();
  return () => poller.stop();
}

function mountWizard(page: ConsolePage, onCreated: (exp: ExperimentJson) => void): void {
  const form = el("form", "wizard");
  const idInput = el("input");
  idInput.placeholder = "experiment id";
  const predicateInput = el("textarea");
  predicateInput.value = JSON.stringify({ op: "and", children: [] });
  const errorBoxes = new Map<string, HTMLElement>();
  form.appendChild(idInput);
  form.appendChild(predicateInput);
  for (const step of WIZARD_STEPS) {
    const box = el("div", `wizard-errors wizard-errors-${step}`);
    errorBoxes.set(step, box);
    form.appendChild(box);
  }
  const submit = el("button", "wizard-submit", "create experiment");
  form.appendChild(submit);
  page.root.appendChild(form);

  const readDraft = (): WizardDraft => {
    const draft = defaultDraft();
    draft.experimentId = idInput.value;
    try {
      draft.predicate = JSON.parse(predicateInput.value);
    } catch {
      draft.predicate = { op: "not", child: undefined as never };
    }
    return draft;
  };

  form.addEventListener("input", () => {
    submit.disabled = !validateDraft(readDraft()).isValid;
  });
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void wizardSubmit(page.api, readDraft()).then((result) => {
      for (const box of errorBoxes.values()) {
        box.textContent = "";
      }
      if (result.ok) {
        onCreated(result.experiment);
        return;
      }
      for (const [step, messages] of Object.entries(result.stepErrors)) {
        const box = errorBoxes.get(step);
        if (box && messages) {
          box.textContent = messages.join("; ");
        }
      }
    });
  });
}

export function mountConsole(root: HTMLElement, api: ConsoleApi): void {
  const page: ConsolePage = { root, api };
  const chip = el("span", "status-chip");
  const toastBox = el("div", "toast");
  const buttons = el("div", "controls");
  root.appendChild(chip);
  root.appendChild(toastBox);
  root.appendChild(buttons);

  let stopMonitor: (() => void) | null = null;
  const showExperiment = (experiment: ExperimentJson): void => {
    if (stopMonitor) {
      stopMonitor();
    }
    renderControls(page, buttons, chip, toastBox, {
      experimentId: experiment.experiment_id,
      status: experiment.status,
      toast: null,
    });
    stopMonitor = mountMonitor(page, experiment);
  };

  mountWizard(page, showExperiment);
  void api.listExperiments().then((experiments) => {
    const first = experiments[0];
    if (first) {
      showExperiment(first);
    }
  });
}

declare global {
  interface Window {
    nudgeforgeConsole?: { mount: typeof mountConsole };
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.nudgeforgeConsole = { mount: mountConsole };
}
