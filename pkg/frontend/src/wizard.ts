/**
 * Experiment wizard: draft state, per-step validation, submission.
 *
 * The validators mirror the backend's experiment invariants so the
 * submit button can be gated locally; the backend remains the
 * authority, and its rejections are routed to the step that owns the
 * offending field while the draft itself is left untouched.
 */

import { z } from "zod";

import {
  ApiError,
  ArmJson,
  ConsoleApi,
  DesignJson,
  ExperimentJson,
  MetricJson,
  PredicateNode,
} from "./api.js";

export const WIZARD_STEPS = [
  "identity",
  "cohort",
  "arms",
  "design",
  "metric",
  "schedule",
] as const;

export type WizardStep = (typeof WIZARD_STEPS)[number];

export interface WizardDraft {
  experimentId: string;
  predicate: PredicateNode;
  arms: ArmJson[];
  design: DesignJson;
  metric: MetricJson;
  cadenceDays: number;
  startDay: number;
  endDay: number;
  seed: number;
}

export interface WizardValidation {
  isValid: boolean;
  errors: Record<WizardStep, string[]>;
}

const TOKEN_PATTERN = /^[A-Za-z0-9_-]{1,64}$/;
const MAX_PREDICATE_DEPTH = 32;
const POLICY_KINDS = ["linucb", "thompson", "egreedy"] as const;
const AGGREGATIONS = ["mean", "sum", "count"] as const;
const TRAIT_BUILTINS = [
  "weekly_purchased_variety",
  "days_since_last_event",
  "count_events",
  "distinct_payload_values",
  "static_attribute",
] as const;

const predicateSchema: z.ZodType<PredicateNode> = z.lazy(() =>
  z.union([
    z.object({
      op: z.literal("cmp"),
      trait: z.string().min(1),
      cmp: z.enum(["<", "<=", "=", "!=", ">=", ">"]),
      value: z.union([z.string(), z.number(), z.boolean(), z.null()]),
    }),
    z.object({ op: z.literal("and"), children: z.array(predicateSchema) }),
    z.object({ op: z.literal("or"), children: z.array(predicateSchema) }),
    z.object({ op: z.literal("not"), child: predicateSchema }),
  ]),
);

const armSchema = z.object({
  arm_id: z.string().regex(TOKEN_PATTERN, "arm id must be a short token"),
  content_ref: z.string(),
});

const designSchema = z.discriminatedUnion("kind", [
  z.object({
    kind: z.literal("fixed_ab"),
    ratio: z.number().gt(0, "ratio must be in (0, 1)").lt(1, "ratio must be in (0, 1)"),
  }),
  z.object({
    kind: z.literal("cluster_ab"),
    cluster_trait: z.string().min(1, "cluster trait is required"),
    ratio: z.number().gt(0, "ratio must be in (0, 1)").lt(1, "ratio must be in (0, 1)"),
  }),
  z.object({
    kind: z.literal("micro_randomized"),
    prob: z.number().gt(0, "prob must be in (0, 1]").lte(1, "prob must be in (0, 1]"),
    decision_points: z
      .array(z.number().int())
      .min(1, "micro designs need at least one decision point")
      .refine(
        (points) => points.every((p, i) => i === 0 || p > points[i - 1]!),
        "decision points must be strictly increasing days",
      ),
  }),
  z.object({
    kind: z.literal("adaptive"),
    policy: z.enum(POLICY_KINDS, { message: "unknown policy kind" }),
  }),
]);

const traitSchema = z
  .object({
    name: z.string().min(1),
    kind: z.enum(["static", "dynamic"]),
    window_days: z.number().int().nonnegative(),
    definition: z.array(z.string()).min(1),
  })
  .superRefine((trait, ctx) => {
    const builtin = trait.definition[0]!;
    if (!TRAIT_BUILTINS.includes(builtin as (typeof TRAIT_BUILTINS)[number])) {
      ctx.addIssue({ code: "custom", message: `unknown built-in '${builtin}'` });
      return;
    }
    if (builtin === "static_attribute") {
      if (trait.kind !== "static" || trait.window_days !== 0) {
        ctx.addIssue({
          code: "custom",
          message: "static_attribute traits are static with window 0",
        });
      }
      if (trait.definition.length !== 2) {
        ctx.addIssue({ code: "custom", message: "static_attribute needs a payload key" });
      }
      return;
    }
    if (trait.kind !== "dynamic" || trait.window_days < 1) {
      ctx.addIssue({
        code: "custom",
        message: `${builtin} is dynamic and needs window_days >= 1`,
      });
    }
    if (builtin === "weekly_purchased_variety") {
      if (trait.window_days !== 7 || trait.definition.length !== 1) {
        ctx.addIssue({
          code: "custom",
          message: "weekly_purchased_variety is fixed to a 7-day window",
        });
      }
    } else if (trait.definition.length !== 2) {
      ctx.addIssue({ code: "custom", message: `${builtin} needs one argument` });
    }
  });

const metricSchema = z
  .object({
    name: z.string().min(1),
    aggregation: z.enum(AGGREGATIONS, { message: "unknown aggregation" }),
    trait: traitSchema,
  })
  .refine(
    (metric) =>
      metric.aggregation === "count" ||
      metric.trait.definition[0] !== "static_attribute",
    { message: "mean/sum need a numeric dynamic trait" },
  );

function predicateDepth(node: PredicateNode): number {
  if (node.op === "cmp") {
    return 1;
  }
  if (node.op === "not") {
    return 1 + predicateDepth(node.child);
  }
  return 1 + Math.max(0, ...node.children.map(predicateDepth));
}

function issueMessages(error: z.ZodError): string[] {
  return error.issues.map((issue) =>
    issue.path.length > 0 ? `${issue.path.join(".")}: ${issue.message}` : issue.message,
  );
}

export function validateDraft(draft: WizardDraft): WizardValidation {
  const errors: Record<WizardStep, string[]> = {
    identity: [],
    cohort: [],
    arms: [],
    design: [],
    metric: [],
    schedule: [],
  };

  if (!TOKEN_PATTERN.test(draft.experimentId)) {
    errors.identity.push("experiment id must be 1-64 token characters");
  }

  const predicate = predicateSchema.safeParse(draft.predicate);
  if (!predicate.success) {
    errors.cohort.push(...issueMessages(predicate.error));
  } else if (predicateDepth(predicate.data) > MAX_PREDICATE_DEPTH) {
    errors.cohort.push(`predicate deeper than ${MAX_PREDICATE_DEPTH}`);
  }

  if (draft.arms.length < 2) {
    errors.arms.push("experiments need at least two arms");
  }
  for (const arm of draft.arms) {
    const parsed = armSchema.safeParse(arm);
    if (!parsed.success) {
      errors.arms.push(...issueMessages(parsed.error));
    }
  }
  const armIds = draft.arms.map((arm) => arm.arm_id);
  if (new Set(armIds).size !== armIds.length) {
    errors.arms.push("arm ids must be unique");
  }
  if (
    (draft.design.kind === "fixed_ab" || draft.design.kind === "cluster_ab") &&
    draft.arms.length !== 2
  ) {
    errors.arms.push("fixed/cluster designs take exactly two arms");
  }

  const design = designSchema.safeParse(draft.design);
  if (!design.success) {
    errors.design.push(...issueMessages(design.error));
  }

  const metric = metricSchema.safeParse(draft.metric);
  if (!metric.success) {
    errors.metric.push(...issueMessages(metric.error));
  }

  if (!Number.isInteger(draft.cadenceDays) || draft.cadenceDays < 1) {
    errors.schedule.push("cadence_days must be >= 1");
  }
  if (
    !Number.isInteger(draft.startDay) ||
    !Number.isInteger(draft.endDay) ||
    draft.startDay < 0 ||
    draft.startDay > draft.endDay
  ) {
    errors.schedule.push("need 0 <= start_day <= end_day");
  }
  if (!Number.isInteger(draft.seed)) {
    errors.schedule.push("seed must be an integer");
  }

  const isValid = WIZARD_STEPS.every((step) => errors[step].length === 0);
  return { isValid, errors };
}

export function canSubmit(draft: WizardDraft): boolean {
  return validateDraft(draft).isValid;
}

export function draftToExperimentDef(draft: WizardDraft): ExperimentJson {
  return {
    experiment_id: draft.experimentId,
    cohort: { predicate: draft.predicate },
    arms: draft.arms.map((arm) => ({ ...arm })),
    design: { ...draft.design },
    metric: {
      name: draft.metric.name,
      aggregation: draft.metric.aggregation,
      trait: { ...draft.metric.trait, definition: [...draft.metric.trait.definition] },
    },
    cadence_days: draft.cadenceDays,
    start_day: draft.startDay,
    end_day: draft.endDay,
    seed: draft.seed,
    status: "draft",
  };
}

/** Map a backend rejection message onto the wizard step that owns the
 * offending field. The patterns track the platform's error wording. */
export function routeBackendError(detail: string): WizardStep {
  const text = detail.toLowerCase();
  if (/unregistered trait|predicate|cohort/.test(text)) {
    return "cohort";
  }
  if (/arm/.test(text)) {
    return "arms";
  }
  if (/ratio|prob|decision point|policy|design/.test(text)) {
    return "design";
  }
  if (/aggregation|built-in|trait|metric|window/.test(text)) {
    return "metric";
  }
  if (/cadence|start_day|end_day|seed/.test(text)) {
    return "schedule";
  }
  return "identity";
}

export type WizardSubmitResult =
  | { ok: true; experiment: ExperimentJson }
  | {
      ok: false;
      draft: WizardDraft;
      stepErrors: Partial<Record<WizardStep, string[]>>;
    };

export async function wizardSubmit(
  api: ConsoleApi,
  draft: WizardDraft,
): Promise<WizardSubmitResult> {
  const validation = validateDraft(draft);
  if (!validation.isValid) {
    const stepErrors: Partial<Record<WizardStep, string[]>> = {};
    for (const step of WIZARD_STEPS) {
      if (validation.errors[step].length > 0) {
        stepErrors[step] = validation.errors[step];
      }
    }
    return { ok: false, draft, stepErrors };
  }
  try {
    const experiment = await api.createExperiment(draftToExperimentDef(draft));
    return { ok: true, experiment };
  } catch (err) {
    if (err instanceof ApiError && err.status === 400) {
      return {
        ok: false,
        draft,
        stepErrors: { [routeBackendError(err.detail)]: [err.detail] },
      };
    }
    throw err;
  }
}
