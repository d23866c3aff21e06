"""nudgeforge: adaptive-intervention platform with an offline-first SDK,
trait/cohort backend, bandit policies, experiment designs, and a
deterministic pharmacy simulator."""

__version__ = "0.1.0"
