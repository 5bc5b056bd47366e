"""scikit-learn style wrappers.

``EquivariantProjector`` learns nothing from data: ``fit`` solves the basis
of the configured rep, and ``transform`` symmetrizes each row by projecting
it onto that basis.  ``EMLPRegressor`` builds a random-weight equivariant
network in ``fit`` and evaluates it in ``predict``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .emlp import EmlpNetwork
from .groups import Group, parse_group
from .reps import Rep, parse_rep
from .solver import Solver

__all__ = ["EquivariantProjector", "EMLPRegressor", "resolve_rep"]


def _group(group) -> Group:
    return group if isinstance(group, Group) else parse_group(str(group))


def resolve_rep(rep, group) -> Rep:
    if isinstance(rep, Rep):
        return rep
    return parse_rep(str(rep), _group(group))


def _rows(X, dim, complex_ok):
    if complex_ok and np.iscomplexobj(X):
        # check_array refuses complex input; unitary groups need it
        X = np.asarray(X, dtype=np.complex128)
        if X.ndim != 2 or X.shape[0] < 1 or not np.all(np.isfinite(X)):
            raise ValueError("expected a non-empty finite 2D array")
    else:
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != dim:
        raise ValueError(f"X has {X.shape[1]} features, the rep has dimension {dim}")
    return X


class EquivariantProjector(TransformerMixin, BaseEstimator):
    """Project rows onto the symmetric subspace of ``rep``.

    Parameters
    ----------
    group : str or Group
        e.g. ``"SO(3)"``.
    rep : str or Rep
        Rep string such as ``"T(2,0)"``.
    method, eps, seed, dense_max_dim :
        Forwarded to :class:`~equibasis.solver.Solver`.
    """

    def __init__(self, group="SO(3)", rep="T2", method="auto", eps=None, seed=0, dense_max_dim=1024):
        self.group = group
        self.rep = rep
        self.method = method
        self.eps = eps
        self.seed = seed
        self.dense_max_dim = dense_max_dim

    def _solver(self):
        return Solver(method=self.method, eps=self.eps, seed=self.seed, dense_max_dim=self.dense_max_dim)

    def fit(self, X=None, y=None):
        rep = resolve_rep(self.rep, self.group)
        if X is not None:
            _rows(X, rep.dim, rep.group.field == "complex")
        self.rep_ = rep
        self.basis_ = self._solver().solve(rep)
        self.rank_ = self.basis_.rank
        self.n_features_in_ = rep.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = _rows(X, self.rep_.dim, self.rep_.group.field == "complex")
        return self.basis_.project(X.T).T

    def coefficients(self, X):
        """Basis coordinates ``Qᴴ x`` for each row."""
        check_is_fitted(self, "basis_")
        X = _rows(X, self.rep_.dim, self.rep_.group.field == "complex")
        return self.basis_.coefficients(X.T).T


class EMLPRegressor(RegressorMixin, BaseEstimator):
    """Random-weight EMLP exposed through ``fit``/``predict``.

    No training happens; ``fit`` validates shapes and draws the projected
    weights from ``seed``.  ``predict`` returns one output-rep vector per row
    (flattened to 1D when the output rep is a scalar).
    """

    def __init__(self, group="O(5)", input_rep="2*T1", output_rep="T0", hidden=128, num_layers=3, max_rank=2, seed=0):
        self.group = group
        self.input_rep = input_rep
        self.output_rep = output_rep
        self.hidden = hidden
        self.num_layers = num_layers
        self.max_rank = max_rank
        self.seed = seed

    def fit(self, X=None, y=None):
        rin = resolve_rep(self.input_rep, self.group)
        rout = resolve_rep(self.output_rep, rin.group)
        if X is not None:
            _rows(X, rin.dim, rin.group.field == "complex")
        self.network_ = EmlpNetwork.build(
            rin, rout, hidden=self.hidden, num_layers=self.num_layers, max_rank=self.max_rank, seed=self.seed
        )
        self.n_features_in_ = rin.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        net = self.network_
        X = _rows(X, net.input_rep.dim, net.group.field == "complex")
        out = net(X)
        return out[:, 0] if net.output_rep.dim == 1 else out

    def transform(self, X):
        return self.predict(X)
