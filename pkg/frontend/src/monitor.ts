/**
 * View model for the live effect monitor.
 *
 * The model is derived solely from the monitor API payload; the only
 * client-side inference is the significance marker rule: a day is
 * marked exactly when its confidence interval excludes zero.
 */

import { z } from "zod";

const dailyEstimateSchema = z
  .object({
    day: z.number().int(),
    diff: z.number(),
    ci_low: z.number().nullable(),
    ci_high: z.number().nullable(),
    n_t: z.number().int().nonnegative(),
    n_c: z.number().int().nonnegative(),
    interactions: z.number().int().nonnegative(),
  })
  .refine((est) => (est.ci_low === null) === (est.ci_high === null), {
    message: "confidence bounds come as a pair",
  })
  .refine(
    (est) =>
      est.ci_low === null ||
      est.ci_high === null ||
      (est.ci_low <= est.diff && est.diff <= est.ci_high),
    { message: "interval must bracket the difference" },
  );

export const monitorPayloadSchema = z
  .object({
    experiment_id: z.string().min(1),
    from_day: z.number().int(),
    to_day: z.number().int(),
    estimates: z.array(dailyEstimateSchema),
  })
  .refine((payload) => payload.from_day <= payload.to_day, {
    message: "from_day must not exceed to_day",
  });

export type ValidMonitorPayload = z.infer<typeof monitorPayloadSchema>;

export interface CiBand {
  low: number | null;
  high: number | null;
}

export interface MonitorViewModel {
  experimentId: string;
  fromDay: number;
  toDay: number;
  days: number[];
  diffs: number[];
  ciBands: CiBand[];
  interactions: number[];
  significantDays: Set<number>;
}

export class MonitorPayloadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MonitorPayloadError";
  }
}

/** True when the interval is known and excludes zero (endpoints count as
 * containing it). */
export function excludesZero(low: number | null, high: number | null): boolean {
  if (low === null || high === null) {
    return false;
  }
  return low > 0 || high < 0;
}

export function buildMonitorViewModel(payload: unknown): MonitorViewModel {
  const parsed = monitorPayloadSchema.safeParse(payload);
  if (!parsed.success) {
    const first = parsed.error.issues[0];
    const where = first && first.path.length > 0 ? ` at ${first.path.join(".")}` : "";
    const why = first ? first.message : "unreadable payload";
    throw new MonitorPayloadError(`bad monitor payload${where}: ${why}`);
  }
  const estimates = parsed.data.estimates;
  const significantDays = new Set<number>();
  for (const est of estimates) {
    if (excludesZero(est.ci_low, est.ci_high)) {
      significantDays.add(est.day);
    }
  }
  return {
    experimentId: parsed.data.experiment_id,
    fromDay: parsed.data.from_day,
    toDay: parsed.data.to_day,
    days: estimates.map((est) => est.day),
    diffs: estimates.map((est) => est.diff),
    ciBands: estimates.map((est) => ({ low: est.ci_low, high: est.ci_high })),
    interactions: estimates.map((est) => est.interactions),
    significantDays,
  };
}
