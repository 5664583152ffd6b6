"""Graph signal synthesis, Gaussian compressive measurements, CV folds and metrics."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph_core import SpectralBasis
from .rng import as_generator


@dataclass(frozen=True, eq=False)
class GraphSignal:
    x: np.ndarray
    theta: np.ndarray | None = None
    support: tuple = ()

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _signal_from_support(basis: SpectralBasis, support, rng) -> GraphSignal:
    theta = np.zeros(basis.n)
    support = np.sort(np.asarray(support, dtype=int))
    theta[support] = rng.standard_normal(support.shape[0])
    return GraphSignal(basis.inverse(theta), theta, tuple(support.tolist()))


def sparse_spectrum_signal(basis: SpectralBasis, s: int, rng=0) -> GraphSignal:
    """``s`` GFT coefficients at uniformly random indices, values standard normal."""
    n = basis.n
    if not 1 <= s <= n:
        raise ValueError(f"sparsity {s} outside [1, {n}]")
    rng = as_generator(rng)
    support = rng.choice(n, size=s, replace=False)
    return _signal_from_support(basis, support, rng)


def band_limited_signal(basis: SpectralBasis, s: int, rng=0) -> GraphSignal:
    """Standard normal coefficients on the ``s`` lowest graph frequencies."""
    n = basis.n
    if not 1 <= s <= n:
        raise ValueError(f"sparsity {s} outside [1, {n}]")
    return _signal_from_support(basis, np.arange(s), as_generator(rng))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    y: np.ndarray
    Phi: np.ndarray
    sigma: float

    @property
    def m(self) -> int:
        return self.y.shape[0]


def noise_sigma(Phi_x, beta: float) -> float:
    Phi_x = np.asarray(Phi_x, dtype=float)
    return float(beta * np.abs(Phi_x).sum() / Phi_x.shape[0])


def measure(x, m: int, beta: float = 0.0, rng=0) -> MeasurementSet:
    """Draw an ``m x n`` standard Gaussian matrix and noisy measurements of ``x``.

    The noise standard deviation is ``beta * ||Phi x||_1 / m``. The matrix is
    drawn before the noise, so two calls with the same stream share ``Phi``
    regardless of ``beta``.
    """
    if m < 1:
        raise ValueError("need at least one measurement")
    if beta < 0:
        raise ValueError("noise level must be non-negative")
    x = np.asarray(getattr(x, "x", x), dtype=float)
    n = x.shape[0]
    if m >= n:
        warnings.warn(f"m={m} >= n={n}: not a compressive regime", stacklevel=2)
    rng = as_generator(rng)
    Phi = rng.standard_normal((m, n))
    clean = Phi @ x
    sigma = noise_sigma(clean, beta)
    y = clean + sigma * rng.standard_normal(m) if sigma > 0 else clean
    return MeasurementSet(y, Phi, sigma)


def kfold_splits(m: int, K: int = 5) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous K-fold split of ``range(m)`` as ``(recovery_rows, cv_rows)`` pairs.

    Fold ``k`` holds out rows ``[k*f, (k+1)*f)`` with ``f = m // K``; the
    ``m mod K`` trailing rows are never held out.
    """
    if K < 2 or K > m:
        raise ValueError(f"fold count K={K} must satisfy 2 <= K <= m={m}")
    f = m // K
    rows = np.arange(m)
    out = []
    for k in range(K):
        cv = rows[k * f:(k + 1) * f]
        rec = np.concatenate([rows[:k * f], rows[(k + 1) * f:]])
        out.append((rec, cv))
    return out


def cv_row_count(m: int, K: int = 5) -> int:
    """Number of rows that are held out in some fold."""
    return K * (m // K)


def rrmse(x_hat, x_true) -> float:
    x_true = np.asarray(x_true, dtype=float)
    norm = np.linalg.norm(x_true)
    if norm == 0:
        raise ValueError("RRMSE undefined for a zero ground truth")
    return float(np.linalg.norm(np.asarray(x_hat, dtype=float) - x_true) / norm)


def write_vector_csv(path, name: str, values) -> None:
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w", newline="") as fh:
        fh.write(name + "\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


def read_vector_csv(path) -> tuple[str, np.ndarray]:
    lines = Path(path).read_text().split()
    if not lines:
        raise ValueError(f"{path}: empty vector file")
    return lines[0], np.array([float(v) for v in lines[1:]])


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows)


def save_measurements(directory, ms: MeasurementSet, x_true=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_vector_csv(d / "y.csv", "y", ms.y)
    write_matrix_csv(d / "phi.csv", ms.Phi)
    write_vector_csv(d / "sigma.csv", "sigma", [ms.sigma])
    if x_true is not None:
        write_vector_csv(d / "x_true.csv", "x", x_true)


def load_measurements(directory) -> tuple[MeasurementSet, np.ndarray | None]:
    d = Path(directory)
    _, y = read_vector_csv(d / "y.csv")
    Phi = read_matrix_csv(d / "phi.csv")
    sigma = 0.0
    if (d / "sigma.csv").exists():
        sigma = float(read_vector_csv(d / "sigma.csv")[1][0])
    x_true = read_vector_csv(d / "x_true.csv")[1] if (d / "x_true.csv").exists() else None
    if Phi.shape[0] != y.shape[0]:
        raise ValueError(f"phi has {Phi.shape[0]} rows but y has {y.shape[0]} entries")
    return MeasurementSet(y, Phi, sigma), x_true
