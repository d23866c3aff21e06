/**
 * Typed client for the nudgeforge platform HTTP/JSON API.
 *
 * The console never derives truth locally: every status and estimate it
 * shows comes out of one of these calls. The client itself is a thin
 * fetch wrapper that attaches the API token and turns non-2xx responses
 * into ApiError values carrying the server's detail string.
 */

export type ExperimentStatus = "draft" | "running" | "paused" | "stopped";

export type ControlAction = "pause" | "resume" | "stop";

export type CompareOp = "<" | "<=" | "=" | "!=" | ">=" | ">";

export type CmpConstant = string | number | boolean | null;

export type PredicateNode =
  | { op: "cmp"; trait: string; cmp: CompareOp; value: CmpConstant }
  | { op: "and"; children: PredicateNode[] }
  | { op: "or"; children: PredicateNode[] }
  | { op: "not"; child: PredicateNode };

export interface ArmJson {
  arm_id: string;
  content_ref: string;
}

export type DesignJson =
  | { kind: "fixed_ab"; ratio: number }
  | { kind: "cluster_ab"; cluster_trait: string; ratio: number }
  | { kind: "micro_randomized"; prob: number; decision_points: number[] }
  | { kind: "adaptive"; policy: string };

export interface TraitDescriptorJson {
  name: string;
  kind: "static" | "dynamic";
  window_days: number;
  definition: string[];
}

export interface MetricJson {
  name: string;
  aggregation: "mean" | "sum" | "count";
  trait: TraitDescriptorJson;
}

export interface ExperimentJson {
  experiment_id: string;
  cohort: { predicate: PredicateNode };
  arms: ArmJson[];
  design: DesignJson;
  metric: MetricJson;
  cadence_days: number;
  start_day: number;
  end_day: number;
  seed: number;
  status: ExperimentStatus;
}

export interface DailyEstimateJson {
  day: number;
  diff: number;
  ci_low: number | null;
  ci_high: number | null;
  n_t: number;
  n_c: number;
  interactions: number;
}

export interface MonitorPayload {
  experiment_id: string;
  from_day: number;
  to_day: number;
  estimates: DailyEstimateJson[];
}

export interface ControlResponse {
  experiment_id: string;
  status: ExperimentStatus;
}

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`api error ${status}: ${detail}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export interface ConsoleApiOptions {
  baseUrl: string;
  apiToken?: string;
}

export class ConsoleApi {
  private readonly baseUrl: string;
  private readonly apiToken?: string;

  constructor(options: ConsoleApiOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.apiToken = options.apiToken;
  }

  async listExperiments(): Promise<ExperimentJson[]> {
    const body = await this.request("GET", "/v1/experiments");
    return (body as { experiments: ExperimentJson[] }).experiments;
  }

  async getExperiment(experimentId: string): Promise<ExperimentJson> {
    const path = `/v1/experiments/${encodeURIComponent(experimentId)}`;
    return (await this.request("GET", path)) as ExperimentJson;
  }

  async createExperiment(definition: ExperimentJson): Promise<ExperimentJson> {
    return (await this.request(
      "POST",
      "/v1/experiments",
      definition,
    )) as ExperimentJson;
  }

  async control(
    experimentId: string,
    action: ControlAction,
  ): Promise<ControlResponse> {
    const path = `/v1/experiments/${encodeURIComponent(experimentId)}/${action}`;
    return (await this.request("POST", path)) as ControlResponse;
  }

  async fetchMonitor(
    experimentId: string,
    fromDay: number,
    toDay: number,
  ): Promise<MonitorPayload> {
    const path =
      `/v1/experiments/${encodeURIComponent(experimentId)}/monitor` +
      `?from_day=${fromDay}&to_day=${toDay}`;
    return (await this.request("GET", path)) as MonitorPayload;
  }

  async fetchTicks(experimentId: string): Promise<unknown[]> {
    const path = `/v1/experiments/${encodeURIComponent(experimentId)}/ticks`;
    const body = await this.request("GET", path);
    return (body as { reports: unknown[] }).reports;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (this.apiToken !== undefined) {
      headers["x-api-token"] = this.apiToken;
    }
    if (body !== undefined) {
      headers["content-type"] = "application/json";
    }
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, extractDetail(text));
    }
    return text === "" ? null : JSON.parse(text);
  }
}

function extractDetail(responseText: string): string {
  try {
    const parsed = JSON.parse(responseText);
    if (parsed && typeof parsed.detail === "string") {
      return parsed.detail;
    }
  } catch {
    // fall through to the raw body
  }
  return responseText;
}
