"""Shared domain types: return sets, portfolios, cost models, solver config and records."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# Synthetic returns come from numpy's default generator (PCG64, ziggurat normal
# sampling). The generator is pinned by name so seeded runs stay reproducible
# across machines; changing it would invalidate every golden file.
_GENERATOR_NAME = "numpy.random.default_rng (PCG64)"


@dataclass(frozen=True)
class ReturnSet:
    """N x p matrix of per-asset, per-period returns plus derived shape data."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError(f"returns must be a 2-d matrix, got ndim={entries.ndim}")
        n, p = entries.shape
        if n < 2:
            raise ValueError(f"need at least 2 assets, got {n}")
        if p < 1:
            raise ValueError(f"need at least 1 period, got {p}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("returns contain non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n_assets(self) -> int:
        return self.entries.shape[0]

    @property
    def n_periods(self) -> int:
        return self.entries.shape[1]

    @property
    def alpha(self) -> float:
        return self.entries.shape[1] / self.entries.shape[0]


@dataclass(frozen=True)
class Portfolio:
    """Vector of positions (shorts allowed) constrained to sum to the budget."""

    positions: np.ndarray
    budget: float = None  # defaults to N, the convention every formula assumes

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        if self.budget is None:
            object.__setattr__(self, "budget", float(positions.size))

    @property
    def n_assets(self) -> int:
        return self.positions.size

    def budget_gap(self) -> float:
        """Signed violation of the budget constraint, sum(positions) - budget."""
        return float(self.positions.sum() - self.budget)

    def is_feasible(self, tol: float = 1e-9) -> bool:
        """True when the budget constraint holds within tol * n_assets."""
        return abs(self.budget_gap()) <= tol * self.n_assets


@dataclass(frozen=True)
class CostModel:
    """Per-period cost R(u): mean-variance u^2/2, absolute deviation |u|, or custom."""

    kind: str  # "mv" | "ad" | "generic"
    cost: Optional[Callable[[np.ndarray], np.ndarray]] = None
    order: int = 64  # quadrature resolution for the generic channel

    def __post_init__(self):
        if self.kind not in ("mv", "ad", "generic"):
            raise ValueError(f"unknown cost model kind {self.kind!r}")
        if self.kind == "generic" and self.cost is None:
            raise ValueError("generic cost model requires a cost callable")

    def cost_values(self, u: np.ndarray) -> np.ndarray:
        """R(u) elementwise."""
        u = np.asarray(u, dtype=float)
        if self.kind == "mv":
            return 0.5 * u * u
        if self.kind == "ad":
            return np.abs(u)
        return np.asarray(self.cost(u), dtype=float)


MEAN_VARIANCE = CostModel(kind="mv")
ABSOLUTE_DEVIATION = CostModel(kind="ad")


def generic_model(cost: Callable[[np.ndarray], np.ndarray], order: int = 64) -> CostModel:
    """Cost model wrapping an arbitrary finite scalar cost function."""
    return CostModel(kind="generic", cost=cost, order=order)


@dataclass(frozen=True)
class BpConfig:
    """Iteration controls for the message-passing solver."""

    beta: float = 1.0
    damping: float = 0.5  # weight of the previous iterate in each mean update
    tol: float = 1e-10  # max relative change of m_w declaring convergence
    max_sweeps: int = 5000
    beta_schedule: Optional[tuple[float, float, float]] = None  # (start, factor, final)
    divergence_threshold: float = 1e6  # q_hat beyond this flags the divergent phase

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.divergence_threshold <= 0:
            raise ValueError("divergence_threshold must be positive")
        if self.beta_schedule is not None:
            start, factor, final = self.beta_schedule
            if start <= 0 or final < start:
                raise ValueError("beta schedule needs 0 < start <= final")
            if factor <= 1:
                raise ValueError("beta schedule factor must exceed 1")
            if math.log(final / start) / math.log(factor) > 1_000_000:
                raise ValueError("beta schedule has over a million rungs; "
                                 "use a coarser factor")

    def beta_ladder(self) -> list[float]:
        """Geometric beta sequence to walk, one sweep per entry; the solver
        holds at the last entry, which is the beta results are reported at."""
        if self.beta_schedule is None:
            return [self.beta]
        start, factor, final = self.beta_schedule
        ladder = [start]
        while ladder[-1] < final:
            ladder.append(min(ladder[-1] * factor, final))
        return ladder


@dataclass
class BpState:
    """All message-passing marginals; single-owner mutable during a solve."""

    m_w: np.ndarray
    chi_w: np.ndarray
    h_w: np.ndarray
    chi_tilde_w: np.ndarray
    m_u: np.ndarray
    chi_u: np.ndarray
    h_u: np.ndarray
    chi_tilde_u: np.ndarray
    m_tilde: float = 0.0
    sweep_count: int = 0


@dataclass(frozen=True)
class Diagnostics:
    """Observables and status of one solver run."""

    q_hat: float
    eps_hat: float
    converged: bool
    diverged: bool
    sweeps_used: int
    final_delta: float


@dataclass(frozen=True)
class RsSolution:
    """Replica-symmetric order parameters at a given (alpha, beta, model)."""

    q: float
    chi: float
    eta: float
    delta: float
    alpha: float
    beta: float
    divergent: bool = False  # alpha <= 1 has no finite solution; q, chi are inf


@dataclass(frozen=True)
class ExperimentRecord:
    """One Monte-Carlo trial; rerunning with the same seed reproduces it exactly."""

    seed: int
    n_assets: int
    n_periods: int
    model: str
    diagnostics: Diagnostics


def generate_returns(n_assets: int, n_periods: int, seed: int) -> ReturnSet:
    """I.i.d. standard normal returns from the pinned generator; same seed, same matrix."""
    if n_assets < 2:
        raise ValueError(f"need at least 2 assets, got {n_assets}")
    if n_periods < 1:
        raise ValueError(f"need at least 1 period, got {n_periods}")
    rng = np.random.default_rng(seed)
    return ReturnSet(rng.standard_normal((n_assets, n_periods)))


class ReturnsParseError(ValueError):
    """Malformed returns file; message carries the row/column location."""


def load_returns(path: str, n_assets: int, center: bool = False) -> ReturnSet:
    """Read one asset per CSV row; p is inferred from the column count.

    center=True subtracts per-asset sample means; off by default so file and
    synthetic inputs go through identical arithmetic.
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for row_index, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            values = []
            for col_index, cell in enumerate(cells, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ReturnsParseError(
                        f"non-numeric cell at row {row_index}, column {col_index}: {cell!r}"
                    ) from None
            if rows and len(values) != len(rows[0]):
                raise ReturnsParseError(
                    f"ragged row at row {row_index}: got {len(values)} columns, "
                    f"expected {len(rows[0])}"
                )
            rows.append(values)
    if not rows:
        raise ReturnsParseError(f"no rows in {path}")
    if len(rows) != n_assets:
        raise ReturnsParseError(f"expected {n_assets} asset rows, found {len(rows)}")
    entries = np.array(rows, dtype=float)
    if center:
        entries = entries - entries.mean(axis=1, keepdims=True)
    return ReturnSet(entries)


def save_returns(returns: ReturnSet, path: str) -> None:
    """Write CSV that round-trips bit-exactly through load_returns (17 significant digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in returns.entries:
            fh.write(",".join(f"{value:.17g}" for value in row))
            fh.write("\n")
