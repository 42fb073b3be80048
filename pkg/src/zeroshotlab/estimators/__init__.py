"""Sample-based estimators of the indirect predictor."""
