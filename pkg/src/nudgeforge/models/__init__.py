from .survival import HazardModel, SurvivalCurve, SurvivalObservation, hazard_fit, hazard_predict_risk, km_fit
from .forecast import ForecastResult, forecast_fit_predict
from .cooccurrence import CooccurrenceModel, cooccurrence_fit, extract_baskets, pair_recommend, regular_skus

__all__ = [
    "CooccurrenceModel",
    "ForecastResult",
    "HazardModel",
    "SurvivalCurve",
    "SurvivalObservation",
    "cooccurrence_fit",
    "extract_baskets",
    "forecast_fit_predict",
    "hazard_fit",
    "hazard_predict_risk",
    "km_fit",
    "pair_recommend",
    "regular_skus",
]
