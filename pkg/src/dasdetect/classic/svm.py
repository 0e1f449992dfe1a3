"""Soft-margin SVM with a cubic polynomial kernel, trained by SMO.

The dual is solved with maximal-violating-pair selection refined by
second-order gain (the working-set rule popularised by LIBSVM).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ConvergenceError, DataError
from .data import Dataset

logger = logging.getLogger(__name__)

TAU = 1e-12


def poly_kernel(A: np.ndarray, B: np.ndarray, degree: int = 3) -> np.ndarray:
    """K(u, v) = (1 + u.v) ** degree for every row pair."""
    return (1.0 + np.atleast_2d(A) @ np.atleast_2d(B).T) ** degree


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i, each in [0, C]
    sv_labels: np.ndarray  # +1 Excavator, -1 Other
    bias: float
    degree: int = 3
    C: float = 1.0
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DataError(f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        return poly_kernel(X, self.support_vectors, self.degree) @ (self.dual_coef * self.sv_labels) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        """Logistic map of the margin; no Platt fitting."""
        return expit(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "sv_labels": self.sv_labels.tolist(),
            "bias": self.bias,
            "degree": self.degree,
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, d) -> "SvmModel":
        sv = np.asarray(d["support_vectors"], dtype=np.float64)
        return cls(support_vectors=sv.reshape(len(d["dual_coef"]), -1),
                   dual_coef=np.asarray(d["dual_coef"], dtype=np.float64),
                   sv_labels=np.asarray(d["sv_labels"], dtype=np.float64),
                   bias=float(d["bias"]), degree=int(d["degree"]), C=float(d["C"]))


def train_svm(train: Dataset, degree: int = 3, C: float = 1.0, tol: float = 1e-3,
              max_iter: int = 1_000_000) -> SvmModel:
    """Fit the dual until the maximal KKT violation drops below ``tol``.

    Raises ConvergenceError when ``max_iter`` SMO steps are exhausted.
    """
    if not train.both_classes():
        raise DataError("SVM training needs both classes present")
    X = train.X
    y = np.where(train.y == 1, 1.0, -1.0)
    n = len(y)

    Q = poly_kernel(X, X, degree)
    Q *= y[:, None]
    Q *= y[None, :]
    QD = Q.diagonal().copy()

    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while True:
        pos = y > 0
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        vals = -y * G
        cand_up = np.where(up, vals, -np.inf)
        i = int(np.argmax(cand_up))
        m = cand_up[i]
        M = np.min(np.where(low, vals, np.inf))
        gap = m - M
        if gap < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge after {it} iterations (KKT gap {gap:.3e}, tol {tol:.1e}, "
                f"{int(np.sum(alpha > 0))} support vectors)"
            )
        # second-order choice of j among violators in I_low
        b = m - vals
        Qi = Q[i]
        a = QD[i] + QD - 2.0 * y[i] * y * Qi
        a = np.where(a > 0, a, TAU)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))

        ai_old, aj_old = alpha[i], alpha[j]
        Qij = Qi[j]
        if y[i] != y[j]:
            quad = max(QD[i] + QD[j] + 2 * Qij, TAU)
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(QD[i] + QD[j] - 2 * Qij, TAU)
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total

        G += Qi * (alpha[i] - ai_old) + Q[j] * (alpha[j] - aj_old)
        it += 1

    rho = _rho(alpha, y, G, C)
    sv = alpha > 0
    logger.debug("SMO converged in %d iterations, %d SVs, gap %.2e", it, sv.sum(), gap)
    return SvmModel(support_vectors=X[sv].copy(), dual_coef=alpha[sv].copy(), sv_labels=y[sv].copy(),
                    bias=-rho, degree=degree, C=C, iterations=it)


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)
