/**
 * Integration against a live backend: boots the real HTTP server in a
 * child process, then drives the wizard and the run controls through
 * the same code paths the page uses.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleApi } from "../src/api.js";
import { controlAction, ControlState } from "../src/controls.js";
import { buildMonitorViewModel } from "../src/monitor.js";
import { draftToExperimentDef, WizardDraft, wizardSubmit } from "../src/wizard.js";

const REPO_ROOT = fileURLToPath(new URL("../..", import.meta.url));
const API_TOKEN = "console-test-token";
const PORT = 8900 + (process.pid % 500);
const BASE_URL = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let workDir: string;
let api: ConsoleApi;

function draft(experimentId: string): WizardDraft {
  return {
    experimentId,
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

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      await api.listExperiments();
      return;
    } catch (err) {
      lastError = err;
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
  }
  throw new Error(`backend did not come up on ${BASE_URL}: ${lastError}`);
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "nudgeforge-console-"));
  const configPath = join(workDir, "server.kv");
  writeFileSync(
    configPath,
    `host = 127.0.0.1\nport = ${PORT}\napi_token = ${API_TOKEN}\n`,
  );
  server = spawn(
    "python3",
    [
      "-m",
      "nudgeforge.cli",
      "serve",
      "--config",
      configPath,
      "--data-dir",
      join(workDir, "data"),
    ],
    {
      cwd: REPO_ROOT,
      env: { ...process.env, PYTHONPATH: join(REPO_ROOT, "src") },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );
  api = new ConsoleApi({ baseUrl: BASE_URL, apiToken: API_TOKEN });
  await waitForServer(30_000);
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((resolve) => server.once("exit", resolve));
  }
  if (workDir) {
    rmSync(workDir, { recursive: true, force: true });
  }
});

describe("wizard against the live backend", () => {
  it("round-trips an experiment definition verbatim", async () => {
    const submitted = draft("exp-live");
    const result = await wizardSubmit(api, submitted);
    expect(result.ok).toBe(true);

    const fetched = await api.getExperiment("exp-live");
    expect(fetched).toEqual(draftToExperimentDef(submitted));

    const listed = await api.listExperiments();
    expect(listed.map((e) => e.experiment_id)).toContain("exp-live");
  });

  it("routes a backend unknown-trait rejection to the cohort step", async () => {
    const bad = draft("exp-bad-cohort");
    bad.predicate = { op: "cmp", trait: "no_such_trait", cmp: ">", value: 1 };
    const result = await wizardSubmit(api, bad);
    expect(result.ok).toBe(false);
    if (!result.ok) {
      expect(result.stepErrors.cohort?.join(" ")).toContain("no_such_trait");
      expect(result.draft).toBe(bad);
    }
  });

  it("rejects a duplicate id and reports it inline", async () => {
    const again = await wizardSubmit(api, draft("exp-live"));
    expect(again.ok).toBe(false);
    if (!again.ok) {
      expect(again.stepErrors.identity?.join(" ")).toContain("already exists");
    }
  });
});

describe("run controls against the live backend", () => {
  it("drives running -> paused -> running -> stopped from server responses", async () => {
    await wizardSubmit(api, draft("exp-steered"));
    let state: ControlState = {
      experimentId: "exp-steered",
      status: "draft",
      toast: null,
    };

    state = await controlAction(api, state, "resume");
    expect(state.status).toBe("running");
    state = await controlAction(api, state, "pause");
    expect(state.status).toBe("paused");
    state = await controlAction(api, state, "resume");
    expect(state.status).toBe("running");
    state = await controlAction(api, state, "stop");
    expect(state.status).toBe("stopped");

    const fetched = await api.getExperiment("exp-steered");
    expect(fetched.status).toBe("stopped");
  });

  it("shows a toast and keeps the chip on an illegal transition", async () => {
    const state: ControlState = {
      experimentId: "exp-steered",
      status: "stopped",
      toast: null,
    };
    const next = await controlAction(api, state, "resume");
    expect(next.status).toBe("stopped");
    expect(next.toast).toContain("stopped");
  });
});

describe("monitor against the live backend", () => {
  it("parses the live monitor payload", async () => {
    const payload = await api.fetchMonitor("exp-live", 1, 30);
    const vm = buildMonitorViewModel(payload);
    expect(vm.experimentId).toBe("exp-live");
    expect(vm.days.length).toBe(vm.diffs.length);
  });

  it("rejects calls without the API token", async () => {
    const anonymous = new ConsoleApi({ baseUrl: BASE_URL });
    await expect(anonymous.listExperiments()).rejects.toThrow("401");
  });
});
