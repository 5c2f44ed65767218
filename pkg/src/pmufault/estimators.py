"""Estimator-style wrappers over the localizer and community analysis.

``FaultLocalizer`` is fitted to a network and a placement, then maps
measurement sets to the best candidate location.  ``CommunityDetector``
is fitted to a sensing matrix and exposes per-column community labels.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted, check_scalar

from .community import DEFAULT_TAU, column_correlations, threshold_adjacency
from .faultsim import FaultSpec, MeasurementSet, approximate_fault_current
from .localizer import (DEFAULT_EPS, DEFAULT_RANK_TOL, LocalizationResult, build_whitened_model,
                        enumerate_candidates, localize_raw, localize_whitened)
from .matrices import build_admittance, invert_to_impedance, make_placement, partition
from .netmodel import NetworkModel

METRICS = ("whitened", "raw")


def check_placement(model: NetworkModel, placement):
    """Bus list or comma string to a Placement; unknown buses raise."""
    if isinstance(placement, str):
        placement = [b for b in placement.split(",") if b.strip()]
    placement = [str(b).strip() for b in placement]
    if not placement:
        raise ValueError("placement is empty")
    known = set(model.bus_ids)
    missing = [b for b in placement if b not in known]
    if missing:
        raise ValueError(f"placement names unknown bus(es): {missing}")
    return placement


def check_complex_vector(x, n: int | None = None, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if n is not None and x.size != n:
        raise ValueError(f"{name} has {x.size} entries, expected {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_sensing_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"expected a 2-D matrix with at least one column, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite values")
    return X


class FaultLocalizer(BaseEstimator):
    """Rank candidate fault locations for a fixed network and placement.

    ``fit(model, placement)`` builds the block partition and (for the
    whitened metric) the SVD.  ``predict`` takes a list of
    ``(MeasurementSet, FaultSpec)`` pairs and returns the winning bus ids;
    the fault spec only supplies the fault type and phases.
    """

    def __init__(self, metric: str = "whitened", eps: float = DEFAULT_EPS,
                 rank_tol: float = DEFAULT_RANK_TOL):
        self.metric = metric
        self.eps = eps
        self.rank_tol = rank_tol

    def _validate_params(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        check_scalar(self.eps, "eps", numbers.Real, min_val=0.0)
        check_scalar(self.rank_tol, "rank_tol", numbers.Real, min_val=0.0, max_val=1.0,
                     include_boundaries="right")

    def fit(self, model: NetworkModel, placement, y=None):
        self._validate_params()
        buses = check_placement(model, placement)
        self.model_ = model
        self.admittance_ = build_admittance(model)
        self.impedance_ = invert_to_impedance(self.admittance_)
        self.index_map_ = self.admittance_.index_map
        self.placement_ = make_placement(self.index_map_, buses)
        self.blocks_ = partition(self.admittance_, self.impedance_, self.placement_)
        self.whitened_ = None
        if self.metric == "whitened":
            self.whitened_ = build_whitened_model(self.blocks_, self.rank_tol)
        return self

    def localize(self, meas: MeasurementSet, fault: FaultSpec, I_G=None) -> LocalizationResult:
        """Full ranking for one measurement set.

        Without ``I_G`` the fault current is approximated from the source
        current deltas, which needs every source bus to be monitored.
        """
        check_is_fitted(self, "blocks_")
        if I_G is None:
            I_G = approximate_fault_current(meas, fault, self.model_)
        I_G = check_complex_vector(I_G, len(fault.phases), "I_G")
        cands = enumerate_candidates(self.model_, fault.fault_type, fault.phases,
                                     self.index_map_)
        if self.metric == "whitened":
            return localize_whitened(meas, self.blocks_, self.whitened_, I_G, cands, self.eps)
        return localize_raw(meas, self.blocks_, I_G, cands, self.eps)

    def decision_function(self, X) -> list[np.ndarray]:
        """Objective values per candidate for every (meas, fault) pair."""
        check_is_fitted(self, "blocks_")
        return [self.localize(m, f).objective_values for m, f in X]

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "blocks_")
        return np.array([self.localize(m, f).winner.bus for m, f in X], dtype=object)

    def score(self, X, y) -> float:
        """Fraction of trials whose winning bus equals the true bus."""
        pred = self.predict(X)
        return float(np.mean([p == str(t) for p, t in zip(pred, y)]))


class CommunityDetector(ClusterMixin, BaseEstimator):
    """Threshold the column correlations of a sensing matrix into communities.

    ``labels_[j]`` is the community id of column j.  ``phases`` (one label
    per column) restricts correlations to same-phase pairs.
    """

    def __init__(self, tau: float = DEFAULT_TAU, phases=None):
        self.tau = tau
        self.phases = phases

    def fit(self, X, y=None):
        check_scalar(self.tau, "tau", numbers.Real, min_val=0.0, max_val=1.0,
                     include_boundaries="right")
        X = check_sensing_matrix(X)
        phases = None
        if self.phases is not None:
            phases = list(self.phases)
            if len(phases) != X.shape[1]:
                raise ValueError(f"{len(phases)} phase labels for {X.shape[1]} columns")
        self.correlation_ = column_correlations(X, phases)
        self.graph_ = threshold_adjacency(self.correlation_, self.tau)
        self.labels_ = self.graph_.labels.copy()
        self.n_communities_ = len(self.graph_.communities)
        return self
