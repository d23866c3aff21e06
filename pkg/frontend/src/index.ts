export {
  ApiError,
  ConsoleApi,
  type ArmJson,
  type ControlAction,
  type ControlResponse,
  type DailyEstimateJson,
  type DesignJson,
  type ExperimentJson,
  type ExperimentStatus,
  type MetricJson,
  type MonitorPayload,
  type PredicateNode,
} from "./api.js";
export {
  buildMonitorViewModel,
  excludesZero,
  MonitorPayloadError,
  monitorPayloadSchema,
  type CiBand,
  type MonitorViewModel,
} from "./monitor.js";
export {
  CHART_HEIGHT,
  CHART_WIDTH,
  renderMonitor,
  sceneFromViewModel,
  sceneToSvg,
  type ChartScene,
  type SceneBar,
  type SceneMarker,
  type ScenePoint,
} from "./chart.js";
export {
  canSubmit,
  draftToExperimentDef,
  routeBackendError,
  validateDraft,
  WIZARD_STEPS,
  wizardSubmit,
  type WizardDraft,
  type WizardStep,
  type WizardSubmitResult,
  type WizardValidation,
} from "./wizard.js";
export {
  allowedActions,
  controlAction,
  isActionDisabled,
  type ControlState,
} from "./controls.js";
export { DEFAULT_POLL_INTERVAL_MS, MonitorPoller, type PollerOptions } from "./poller.js";
export { mountConsole } from "./app.js";
