from __future__ import annotations

import numpy as np

from metameta.pipelines.predictors import Predictor
from metameta.problems.models import FiveWayProblem


def fiveway_scores(predictor: Predictor, fw: FiveWayProblem) -> np.ndarray:
    """[n_way, n_queries] yes-scores, row i from the scorer fit on class i's OvA support."""
    rows = []
    for i in range(fw.n_way):
        scorer = predictor.fit(fw.ova_support(i))
        rows.append(np.asarray(scorer.yes_scores(fw.query_features), dtype=np.float64))
    return np.stack(rows)


def fiveway_predict(predictor: Predictor, fw: FiveWayProblem) -> np.ndarray:
    """Class index per query: the OvA scorer with the highest yes-score; ties -> lowest index."""
    return np.argmax(fiveway_scores(predictor, fw), axis=0).astype(np.int64)
