"""Steady-state excitation probabilities.

In stationarity each neuron y is excited (potential > 0) with probability

    q_y = Q+_y / (r_y + Q-_y)

where Q+_y and Q-_y are the mean arrival rates of excitatory and inhibitory
spikes at y, each the exogenous rate plus the rate-weighted traffic from the
other neurons:

    Q+_y = Lambda_y + sum_x q_x * w_plus[x, y]
    Q-_y = lambda_y + sum_x q_x * w_neg[x, y]

The coupled system is solved by damped successive substitution.  The product
form (independent geometric marginals (1-q) q^k) requires q < 1 everywhere;
raw updates above 1 are clamped and the affected neurons reported, since a
clamped solution is a saturation diagnosis rather than a stationary law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ExogenousDrive, Network

__all__ = [
    "SolveOptions",
    "SteadyState",
    "NonConvergence",
    "solve_steady_state",
    "solve_batch",
    "fixed_point_residual",
]


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-10
    max_iter: int = 10_000
    damping: float = 0.5
    sweep: str = "jacobi"  # or "gauss-seidel"

    def check(self) -> None:
        if not (0 < self.damping <= 1):
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")
        if self.sweep not in ("jacobi", "gauss-seidel"):
            raise ValueError(f"unknown sweep {self.sweep!r}")


class NonConvergence(RuntimeError):
    """Fixed-point iteration hit the iteration cap above tolerance."""

    def __init__(self, iterations: int, residual: float, sample: int | None = None):
        self.iterations = iterations
        self.residual = residual
        self.sample = sample
        where = "" if sample is None else f" (sample {sample})"
        super().__init__(
            f"no convergence after {iterations} iterations, residual {residual:.3e}{where}"
        )


@dataclass
class SteadyState:
    """Solved excitation probabilities plus convergence metadata.

    ``residual`` is the defect of the clamped update map recomputed at the
    returned q, not the last in-loop estimate.  ``saturated`` lists neurons
    whose raw update exceeded 1; a nonempty set means the product-form law
    does not strictly apply (status "converged-saturated").
    """

    q: np.ndarray
    residual: float
    iterations: int
    saturated: tuple[int, ...] = ()

    @property
    def status(self) -> str:
        return "converged-saturated" if self.saturated else "converged"


def _clamped_update(
    q: np.ndarray, wp: np.ndarray, wn: np.ndarray, r: np.ndarray, lp: np.ndarray, ln: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One raw evaluation of the excitation map and its clamped version."""
    raw = (lp + q @ wp) / (r + ln + q @ wn)
    return raw, np.minimum(raw, 1.0)


def solve_steady_state(
    network: Network, drive: ExogenousDrive, opts: SolveOptions | None = None
) -> SteadyState:
    """Solve q = Q+ / (r + Q-) for all neurons by damped substitution.

    Raises :class:`NonConvergence` instead of returning an unconverged state.
    """
    opts = opts or SolveOptions()
    opts.check()
    drive.check(network)
    wp, wn, r = network.w_plus, network.w_neg, network.r
    lp, ln = drive.lambda_plus, drive.lambda_neg
    alpha = opts.damping
    q = np.zeros(network.n)

    if opts.sweep == "jacobi":
        for it in range(1, opts.max_iter + 1):
            raw, g = _clamped_update(q, wp, wn, r, lp, ln)
            defect = float(np.max(np.abs(q - g))) if network.n else 0.0
            if defect <= opts.tol:
                saturated = tuple(int(i) for i in np.nonzero(raw > 1.0)[0])
                return SteadyState(q=q, residual=defect, iterations=it, saturated=saturated)
            q = (1.0 - alpha) * q + alpha * g
        raise NonConvergence(opts.max_iter, defect)

    # gauss-seidel: update components in index order, using fresh values
    for it in range(1, opts.max_iter + 1):
        defect = 0.0
        for i in range(network.n):
            raw_i = (lp[i] + float(q @ wp[:, i])) / (r[i] + ln[i] + float(q @ wn[:, i]))
            g_i = min(raw_i, 1.0)
            defect = max(defect, abs(q[i] - g_i))
            q[i] = (1.0 - alpha) * q[i] + alpha * g_i
        if defect <= opts.tol:
            raw, g = _clamped_update(q, wp, wn, r, lp, ln)
            saturated = tuple(int(i) for i in np.nonzero(raw > 1.0)[0])
            return SteadyState(
                q=q,
                residual=float(np.max(np.abs(q - g))) if network.n else 0.0,
                iterations=it,
                saturated=saturated,
            )
    raise NonConvergence(opts.max_iter, defect)


def solve_batch(
    network: Network,
    lambda_plus: np.ndarray,
    lambda_neg: np.ndarray,
    opts: SolveOptions | None = None,
    q0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Solve the excitation fixed point for many drives at once.

    ``lambda_plus`` / ``lambda_neg`` have shape (S, n); returns (Q, saturated
    mask, iterations) with Q of shape (S, n).  Warm starts via ``q0`` cut the
    iteration count sharply when re-solving after a small weight update.
    Raises :class:`NonConvergence` naming the first offending sample.
    """
    opts = opts or SolveOptions()
    opts.check()
    wp, wn, r = network.w_plus, network.w_neg, network.r
    alpha = opts.damping
    q = np.zeros_like(lambda_plus) if q0 is None else np.array(q0, dtype=float)
    for it in range(1, opts.max_iter + 1):
        raw = (lambda_plus + q @ wp) / (r[None, :] + lambda_neg + q @ wn)
        g = np.minimum(raw, 1.0)
        defects = np.max(np.abs(q - g), axis=1) if network.n else np.zeros(len(q))
        if np.all(defects <= opts.tol):
            return q, raw > 1.0, it
        q = (1.0 - alpha) * q + alpha * g
    bad = int(np.argmax(defects))
    raise NonConvergence(opts.max_iter, float(defects[bad]), sample=bad)


def fixed_point_residual(network: Network, drive: ExogenousDrive, q: np.ndarray) -> np.ndarray:
    """Per-neuron defect q_i - Q+_i / (r_i + Q-_i), evaluated exactly once.

    The raw (unclamped) map is used, so saturated neurons show their true
    imbalance.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (network.n,):
        raise ValueError(f"q has shape {q.shape}, expected ({network.n},)")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("q entries must lie in [0, 1]")
    raw = (drive.lambda_plus + q @ network.w_plus) / (
        network.r + drive.lambda_neg + q @ network.w_neg
    )
    return q - raw
