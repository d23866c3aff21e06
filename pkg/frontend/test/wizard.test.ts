import { describe, expect, it } from "vitest";

import { ApiError, ConsoleApi, ExperimentJson } from "../src/api.js";
import {
  canSubmit,
  draftToExperimentDef,
  routeBackendError,
  validateDraft,
  WizardDraft,
  wizardSubmit,
} from "../src/wizard.js";

function validDraft(): WizardDraft {
  return {
    experimentId: "exp-console",
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
    startDay: 1,
    endDay: 30,
    seed: 3,
  };
}

/** A ConsoleApi whose createExperiment is scripted for the test. */
function fakeApi(create: (def: ExperimentJson) => Promise<ExperimentJson>): ConsoleApi {
  const api = new ConsoleApi({ baseUrl: "http://unused" });
  api.createExperiment = create;
  return api;
}

describe("validateDraft", () => {
  it("accepts a complete valid draft", () => {
    const result = validateDraft(validDraft());
    expect(result.isValid).toBe(true);
    expect(Object.values(result.errors).flat()).toEqual([]);
  });

  it("disables submit when the ratio leaves (0, 1)", () => {
    const draft = validDraft();
    draft.design = { kind: "fixed_ab", ratio: 1.2 };
    const result = validateDraft(draft);
    expect(result.isValid).toBe(false);
    expect(result.errors.design.join(" ")).toContain("ratio");
    expect(canSubmit(draft)).toBe(false);
  });

  it("flags a malformed experiment id on the identity step", () => {
    const draft = validDraft();
    draft.experimentId = "spaces are bad";
    expect(validateDraft(draft).errors.identity).not.toEqual([]);
  });

  it("flags duplicate arm ids on the arms step", () => {
    const draft = validDraft();
    draft.arms = [
      { arm_id: "same", content_ref: "a" },
      { arm_id: "same", content_ref: "b" },
    ];
    expect(validateDraft(draft).errors.arms.join(" ")).toContain("unique");
  });

  it("requires exactly two arms for an A/B design", () => {
    const draft = validDraft();
    draft.arms.push({ arm_id: "third", content_ref: "x" });
    expect(validateDraft(draft).errors.arms.join(" ")).toContain("exactly two");
  });

  it("rejects unordered micro decision points on the design step", () => {
    const draft = validDraft();
    draft.arms.push({ arm_id: "third", content_ref: "x" });
    draft.design = { kind: "micro_randomized", prob: 0.4, decision_points: [5, 3] };
    expect(validateDraft(draft).errors.design.join(" ")).toContain("increasing");
  });

  it("rejects a mean over a static attribute on the metric step", () => {
    const draft = validDraft();
    draft.metric = {
      name: "region-mean",
      aggregation: "mean",
      trait: {
        name: "region",
        kind: "static",
        window_days: 0,
        definition: ["static_attribute", "region"],
      },
    };
    expect(validateDraft(draft).errors.metric.join(" ")).toContain("dynamic");
  });

  it("rejects an inverted schedule on the schedule step", () => {
    const draft = validDraft();
    draft.startDay = 10;
    draft.endDay = 4;
    expect(validateDraft(draft).errors.schedule.join(" ")).toContain("start_day");
  });

  it("flags a malformed cohort predicate on the cohort step", () => {
    const draft = validDraft();
    draft.predicate = { op: "cmp", trait: "", cmp: ">", value: 1 };
    expect(validateDraft(draft).errors.cohort).not.toEqual([]);
  });
});

describe("draftToExperimentDef", () => {
  it("emits the wire shape with draft status", () => {
    const def = draftToExperimentDef(validDraft());
    expect(Object.keys(def).sort()).toEqual([
      "arms",
      "cadence_days",
      "cohort",
      "design",
      "end_day",
      "experiment_id",
      "metric",
      "seed",
      "start_day",
      "status",
    ]);
    expect(def.status).toBe("draft");
    expect(def.cohort.predicate).toEqual({ op: "and", children: [] });
  });

  it("copies rather than aliases the draft's nested fields", () => {
    const draft = validDraft();
    const def = draftToExperimentDef(draft);
    def.arms[0]!.arm_id = "mutated";
    expect(draft.arms[0]!.arm_id).toBe("treatment");
  });
});

describe("routeBackendError", () => {
  it.each([
    ["unregistered traits ['frequent_buyer']", "cohort"],
    ["arm ids must be unique", "arms"],
    ["ratio must be in (0, 1)", "design"],
    ["unknown aggregation 'median'", "metric"],
    ["need 0 <= start_day <= end_day", "schedule"],
    ["experiment 'exp-x' already exists", "identity"],
  ])("%s -> %s", (detail, step) => {
    expect(routeBackendError(detail)).toBe(step);
  });
});

describe("wizardSubmit", () => {
  it("short-circuits locally when validation fails", async () => {
    const draft = validDraft();
    draft.design = { kind: "fixed_ab", ratio: 1.2 };
    let called = false;
    const api = fakeApi(async () => {
      called = true;
      throw new Error("unreachable");
    });
    const result = await wizardSubmit(api, draft);
    expect(result.ok).toBe(false);
    expect(called).toBe(false);
    if (!result.ok) {
      expect(result.stepErrors.design).toBeDefined();
    }
  });

  it("returns the created experiment on success", async () => {
    const draft = validDraft();
    const api = fakeApi(async (def) => ({ ...def, status: "draft" }));
    const result = await wizardSubmit(api, draft);
    expect(result.ok).toBe(true);
    if (result.ok) {
      expect(result.experiment.experiment_id).toBe("exp-console");
    }
  });

  it("routes a backend UnknownTrait to the cohort step and keeps the draft", async () => {
    const draft = validDraft();
    draft.predicate = { op: "cmp", trait: "frequent_buyer", cmp: ">", value: 1 };
    const before = JSON.parse(JSON.stringify(draft));
    const api = fakeApi(async () => {
      throw new ApiError(400, "unregistered traits ['frequent_buyer']");
    });
    const result = await wizardSubmit(api, draft);
    expect(result.ok).toBe(false);
    if (!result.ok) {
      expect(result.stepErrors.cohort).toEqual([
        "unregistered traits ['frequent_buyer']",
      ]);
      expect(result.draft).toBe(draft);
      expect(result.draft).toEqual(before);
    }
  });

  it("rethrows non-validation failures", async () => {
    const api = fakeApi(async () => {
      throw new ApiError(503, "backend down");
    });
    await expect(wizardSubmit(api, validDraft())).rejects.toThrow("backend down");
  });
});
