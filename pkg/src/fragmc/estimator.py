"""scikit-learn style wrapper around the fragment-and-compose pipeline.

``fit`` takes a pDTMC and a target and builds the equation system; ``predict``
evaluates it at the rows of a valuation matrix (one column per parameter, in
declaration order).
"""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .compose import DEFAULT_MAX_TERMS, check, evaluate_system, system_op_count
from .fragmentation import Z0_POLICIES
from .model import Pdtmc, ReachabilityQuery, resolve_target
from .pmc import DEFAULT_ORDER, ELIM_ORDERS


def check_valuations(X, n_params: int, exact: bool = False):
    """Validate a valuation matrix.

    Returns a list of rows of ``Fraction`` when ``exact``, else a float
    array.  Every entry must lie in [0, 1]; a 1-d input is one valuation.
    """
    if exact:
        rows = [list(r) for r in (X if _is_2d(X) else [X])]
        out = []
        for r in rows:
            if len(r) != n_params:
                raise ValueError(f"expected {n_params} values per row, got {len(r)}")
            vals = [v if isinstance(v, Fraction) else Fraction(str(v)) for v in r]
            if any(v < 0 or v > 1 for v in vals):
                raise ValueError("parameter values must lie in [0, 1]")
            out.append(vals)
        return out
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n_params:
        raise ValueError(f"expected shape (n, {n_params}), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("parameter values must be finite and lie in [0, 1]")
    return arr


def _is_2d(X) -> bool:
    try:
        first = X[0]
    except (TypeError, IndexError, KeyError):
        return False
    return hasattr(first, "__len__") and not isinstance(first, str)


class FragmentationChecker(BaseEstimator):
    """Closed-form reachability for a pDTMC via fragmentation.

    Parameters mirror :func:`fragmc.compose.check`.  After ``fit`` the
    estimator exposes ``system_``, ``result_`` (the full pipeline result),
    ``params_``, ``n_fragments_`` and ``op_count_``.
    """

    def __init__(self, alpha: int = 15, z0_policy: str = "ascending", elim_order: str = DEFAULT_ORDER,
                 inline: bool = False, n_jobs: int = 1, timeout: float | None = None,
                 max_terms: int | None = DEFAULT_MAX_TERMS):
        self.alpha = alpha
        self.z0_policy = z0_policy
        self.elim_order = elim_order
        self.inline = inline
        self.n_jobs = n_jobs
        self.timeout = timeout
        self.max_terms = max_terms

    def _validate_params(self) -> None:
        if not isinstance(self.alpha, (int, np.integer)) or self.alpha < 1:
            raise ValueError(f"alpha must be an integer >= 1, got {self.alpha!r}")
        if self.z0_policy not in Z0_POLICIES:
            raise ValueError(f"unknown z0 policy {self.z0_policy!r}")
        if self.elim_order not in ELIM_ORDERS:
            raise ValueError(f"unknown elimination order {self.elim_order!r}")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")

    def fit(self, model: Pdtmc, target: ReachabilityQuery | str | Iterable[int]):
        self._validate_params()
        targets = resolve_target(model, target)
        res = check(model, targets, alpha=int(self.alpha), z0_order=self.z0_policy,
                    elim_order=self.elim_order, n_jobs=self.n_jobs, inline=self.inline,
                    timeout=self.timeout, max_terms=self.max_terms)
        self.model_ = model
        self.targets_ = targets
        self.result_ = res
        self.system_ = res.system
        self.params_ = list(model.params)
        self.n_features_in_ = len(self.params_)
        self.n_fragments_ = len(res.fragmentation.fragments)
        self.op_count_ = system_op_count(res.system)
        return self

    def predict_exact(self, X) -> list[Fraction]:
        check_is_fitted(self, "system_")
        rows = check_valuations(X, self.n_features_in_, exact=True)
        return [evaluate_system(self.system_, dict(enumerate(r))) for r in rows]

    def predict(self, X) -> np.ndarray:
        """Reachability probability per valuation row, as floats.

        Evaluation is exact; only the returned values are rounded."""
        check_is_fitted(self, "system_")
        arr = check_valuations(X, self.n_features_in_)
        pts = [{i: Fraction(float(v)) for i, v in enumerate(row)} for row in arr]
        return np.array([float(evaluate_system(self.system_, p)) for p in pts])
