"""Self-sensing pose estimator: four sensing RMS voltages -> (phi, theta).

A full cubic polynomial in the standardized voltages, fitted by least
squares through a QR factorization. The estimator follows the
scikit-learn estimator protocol (``fit``/``predict``/``score``,
``get_params``) so it drops into pipelines and model-selection tools.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .geometry import end_effector_position, rotation_from_euler

CHANNEL_NAMES = ("V_phi1", "V_phi2", "V_theta1", "V_theta2")
MIN_SAMPLES = 100


class FitError(ValueError):
    pass


@lru_cache(maxsize=None)
def monomial_exponents(n_inputs: int = 4, degree: int = 3) -> tuple:
    """Exponent tuples of all monomials of total degree <= ``degree``,
    graded lexicographic order, constant first."""
    terms = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_inputs), d):
            exp = [0] * n_inputs
            for j in combo:
                exp[j] += 1
            terms.append(tuple(exp))
    return tuple(terms)


def expand_features(v, degree: int = 3) -> np.ndarray:
    """Monomial features of one sample (1-D) or of each row of a 2-D array."""
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    if not np.all(np.isfinite(V)):
        raise ValueError("features of non-finite inputs")
    n_inputs = V.shape[1]
    cols = []
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_inputs), d):
            col = np.ones(V.shape[0])
            for j in combo:
                col = col * V[:, j]
            cols.append(col)
    out = np.column_stack(cols)
    return out[0] if single else out


def _split_mask(n: int, test_frac: float, seed, split: str = "shuffle") -> np.ndarray:
    n_test = int(round(test_frac * n))
    mask = np.zeros(n, dtype=bool)
    if split == "blocked":
        # hold out the tail, so autocorrelated neighbours do not leak
        mask[n - n_test:] = True
        return mask
    if split != "shuffle":
        raise ValueError(f"unknown split {split!r}")
    order = np.random.default_rng(seed).permutation(n)
    mask[order[:n_test]] = True
    return mask


def _r2(y, y_hat) -> tuple[float, bool]:
    if np.ptp(y) == 0.0:
        return 0.0, True
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot, False


class PolynomialPoseEstimator(RegressorMixin, BaseEstimator):
    """Cubic polynomial regression from sensing voltages to joint angles.

    Parameters
    ----------
    degree : int
        Total polynomial degree (3).
    test_frac : float
        Fraction of samples held out for the reported metrics; the
        coefficients are fitted on the remainder.
    seed : int or None
        Seed of the shuffle that picks the held-out samples.
    split : {"shuffle", "blocked"}
        Uniform shuffled hold-out, or the last ``test_frac`` of the samples
        in their original (time) order.

    Attributes
    ----------
    input_mean_, input_std_ : ndarray of shape (n_inputs,)
    coef_ : ndarray of shape (n_features, n_outputs)
    metrics_ : dict with held-out ``r2``, ``rmse`` and ``constant_target``
    """

    def __init__(self, degree=3, test_frac=0.2, seed=0, split="shuffle"):
        self.degree = degree
        self.test_frac = test_frac
        self.seed = seed
        self.split = split

    def fit(self, X, y, test_mask=None):
        """Fit on the training split; ``test_mask`` overrides the seeded split."""
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        n = X.shape[0]
        if n < MIN_SAMPLES:
            raise FitError(f"need at least {MIN_SAMPLES} samples, got {n}")
        if not 0.0 <= self.test_frac < 1.0:
            raise ValueError("test_frac must lie in [0, 1)")
        if test_mask is None:
            test_mask = _split_mask(n, self.test_frac, self.seed, self.split)
        test_mask = np.asarray(test_mask, dtype=bool)
        train = ~test_mask

        Xtr = X[train]
        mean = Xtr.mean(axis=0)
        std = Xtr.std(axis=0)
        names = CHANNEL_NAMES if X.shape[1] == len(CHANNEL_NAMES) else [f"x{j}" for j in range(X.shape[1])]
        for j, s in enumerate(std):
            if not s > 0:
                raise FitError(f"input channel {names[j]} is constant on the training split")
        A = expand_features((Xtr - mean) / std, self.degree)
        self.coef_ = self._lstsq(A, y[train], names, X.shape[1])
        self.input_mean_ = mean
        self.input_std_ = std
        self.n_features_in_ = X.shape[1]

        Xev, yev = (X[test_mask], y[test_mask]) if test_mask.any() else (Xtr, y[train])
        pred = self._predict(Xev)
        r2, flags = zip(*(_r2(yev[:, k], pred[:, k]) for k in range(y.shape[1])))
        rmse = np.sqrt(np.mean((yev - pred) ** 2, axis=0))
        self.metrics_ = {
            "r2": [float(v) for v in r2],
            "rmse": [float(v) for v in rmse],
            "constant_target": [bool(f) for f in flags],
            "n_train": int(train.sum()),
            "n_test": int(test_mask.sum()),
        }
        return self

    def _lstsq(self, A, Y, names, n_inputs):
        Q, R = np.linalg.qr(A, mode="reduced")
        diag = np.abs(np.diag(R))
        tol = diag.max() * max(A.shape) * np.finfo(float).eps * 1e3
        bad = np.flatnonzero(diag <= tol)
        if bad.size:
            exps = monomial_exponents(n_inputs, self.degree)[bad[0]]
            involved = [names[j] for j, e in enumerate(exps) if e]
            raise FitError(
                f"design matrix is rank deficient at monomial {exps}; "
                f"degenerate channel(s): {', '.join(involved) or 'constant'}"
            )
        return solve_triangular(R, Q.T @ Y)

    def _predict(self, X):
        return expand_features((X - self.input_mean_) / self.input_std_, self.degree) @ self.coef_

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return self._predict(X)

    # -- single-sample helpers used in the control loop --------------------

    def predict_angles(self, v) -> tuple[float, float]:
        check_is_fitted(self, "coef_")
        z = (np.asarray(v, dtype=float) - self.input_mean_) / self.input_std_
        out = expand_features(z, self.degree) @ self.coef_
        return float(out[0]), float(out[1])

    def estimate_position(self, v, l_m: float) -> np.ndarray:
        phi, theta = self.predict_angles(v)
        return end_effector_position(rotation_from_euler(phi, theta), l_m)

    # -- persistence --------------------------------------------------------

    def to_dict(self, metadata=None) -> dict:
        check_is_fitted(self, "coef_")
        doc = {
            "degree": int(self.degree),
            "input_mean": [float(v) for v in self.input_mean_],
            "input_std": [float(v) for v in self.input_std_],
            "coeffs": [[float(c) for c in row] for row in self.coef_],
            "metrics": {"r2": self.metrics_["r2"], "rmse": self.metrics_["rmse"]},
        }
        if metadata:
            doc["metadata"] = metadata
        return doc

    def save(self, path, metadata=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(metadata), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "PolynomialPoseEstimator":
        try:
            model = cls(degree=int(doc["degree"]))
            model.input_mean_ = np.asarray(doc["input_mean"], dtype=float)
            model.input_std_ = np.asarray(doc["input_std"], dtype=float)
            model.coef_ = np.asarray(doc["coeffs"], dtype=float)
            model.metrics_ = dict(doc["metrics"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed model document: {exc}") from None
        n_in = model.input_mean_.size
        n_terms = math.comb(n_in + model.degree, model.degree)
        if model.input_std_.size != n_in or model.coef_.shape != (n_terms, 2):
            raise ValueError("model document has inconsistent shapes")
        if np.any(model.input_std_ <= 0):
            raise ValueError("model document has non-positive input_std")
        model.n_features_in_ = n_in
        return model

    @classmethod
    def load(cls, path) -> "PolynomialPoseEstimator":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit(X, Y, test_frac=0.2, seed=0) -> PolynomialPoseEstimator:
    return PolynomialPoseEstimator(degree=3, test_frac=test_frac, seed=seed).fit(X, Y)


def predict_angles(model: PolynomialPoseEstimator, v) -> tuple[float, float]:
    return model.predict_angles(v)


def estimate_position(model: PolynomialPoseEstimator, v, l_m: float) -> np.ndarray:
    return model.estimate_position(v, l_m)
