"""Message-passing iteration: cavity sweeps with self-response corrections,
budget-multiplier closure, damping, and convergence/divergence control."""
from __future__ import annotations

import numpy as np

from .channels import channel_for
from .model import (
    ABSOLUTE_DEVIATION,
    BpConfig,
    BpState,
    CostModel,
    Diagnostics,
    Portfolio,
    ReturnSet,
)

# default absolute-deviation annealing: one sweep per ladder entry, multiplying
# beta by 2^(1/128) each sweep from 1 up to 2^20, then holding at the top.
# Coarser ladders (for example doubling with a few hundred sweeps per rung) leave
# the iterate outside the narrowing stability basin of each rung's fixed point
# and stall at percent-level cost error; the fine ramp tracks it adiabatically.
AD_BETA_SCHEDULE = (1.0, 2.0 ** (1.0 / 128.0), float(2 ** 20))
AD_MAX_SWEEPS = 6000

# at very large beta the |u| fixed point goes locally unstable and the iterate
# orbits it on a small limit cycle instead of settling; the cycle is centered
# on the optimum, so for annealed runs that do not reach tol the reported
# portfolio is the time average of m_w over the hold phase at the top beta,
# after discarding the first AVG_BURN_SWEEPS sweeps of ramp-tracking lag.
AVG_BURN_SWEEPS = 1000


class DivergenceDetected(RuntimeError):
    """Iteration produced a non-finite or unbounded state (alpha <= 1 phase or blow-up)."""


def default_config(model: CostModel, beta: float = None) -> BpConfig:
    """Solver defaults: single-beta run for smooth costs, annealing ramp for |u|.

    The absolute-deviation optimum needs beta -> infinity; ramping beta a tiny
    factor per sweep keeps the state glued to the moving fixed point all the
    way up. For the mean-variance cost the fixed point is beta-independent, so
    beta=1 is as exact as any other choice and needs no ramp.
    """
    if model.kind == "ad":
        top = float(beta) if beta is not None else AD_BETA_SCHEDULE[2]
        if top <= AD_BETA_SCHEDULE[0]:
            return BpConfig(beta=top)
        return BpConfig(beta=top,
                        beta_schedule=(AD_BETA_SCHEDULE[0], AD_BETA_SCHEDULE[1], top),
                        max_sweeps=AD_MAX_SWEEPS)
    if model.kind == "mv":
        # the linear MV iteration contracts to a delta floor near 1e-15, and a
        # loose stop leaves the iterate ~delta/(1-rho) short of the fixed point,
        # which per small components reads as ~1e-6; run it to the floor so the
        # closed-form match holds per component.
        return BpConfig(beta=float(beta) if beta is not None else 1.0, tol=1e-14)
    return BpConfig(beta=float(beta) if beta is not None else 1.0)


def init_state(returns: ReturnSet) -> BpState:
    """Budget-feasible uniform start: m_w = chi_w = 1, period side zeroed."""
    n, p = returns.n_assets, returns.n_periods
    return BpState(
        m_w=np.ones(n),
        chi_w=np.ones(n),
        h_w=np.zeros(n),
        chi_tilde_w=np.zeros(n),
        m_u=np.zeros(p),
        chi_u=np.zeros(p),
        h_u=np.zeros(p),
        chi_tilde_u=np.zeros(p),
        m_tilde=0.0,
        sweep_count=0,
    )


def period_sweep(state: BpState, returns: ReturnSet, channel, config: BpConfig,
                 squares: np.ndarray = None) -> BpState:
    """Update the period-side cavity fields and channel outputs in place.

    chi_tilde_u = (1/N) sum_k x_k^2 chi_wk and h_u = (1/sqrt N) sum_k x_k m_wk
    minus the self-response term chi_tilde_u * m_u built from the previous
    period means. channel is already bound to its beta: (h, chi_tilde) -> (m, chi).
    """
    x = returns.entries
    n = returns.n_assets
    if squares is None:
        squares = x * x
    chi_tilde_u = squares.T @ state.chi_w / n
    h_u = x.T @ state.m_w / np.sqrt(n) - chi_tilde_u * state.m_u
    m_channel, chi_channel = channel(h_u, chi_tilde_u)
    m_u = (1.0 - config.damping) * m_channel + config.damping * state.m_u
    if not np.all(np.isfinite(m_u)):
        raise DivergenceDetected("non-finite period means")
    state.chi_tilde_u = chi_tilde_u
    state.h_u = h_u
    state.m_u = m_u
    state.chi_u = chi_channel
    return state


def asset_sweep(state: BpState, returns: ReturnSet, config: BpConfig,
                squares: np.ndarray = None) -> BpState:
    """Update the asset-side fields and enforce the budget through m_tilde.

    h_w adds (not subtracts) its self-response term chi_tilde_w * m_wk from the
    previous asset means; the budget multiplier has the closed form
    m_tilde = (N - sum chi_w h_w)/sum chi_w because the mean update is linear
    in it, and the undamped means then satisfy sum m_w = N exactly.
    """
    x = returns.entries
    n = returns.n_assets
    if squares is None:
        squares = x * x
    chi_tilde_w = squares @ state.chi_u / n
    if not np.all(np.isfinite(chi_tilde_w)) or np.any(chi_tilde_w <= 0.0):
        raise DivergenceDetected(
            "nonpositive asset-side cavity variance (alpha <= 1 regime or blow-up)"
        )
    h_w = x @ state.m_u / np.sqrt(n) + chi_tilde_w * state.m_w
    chi_w = 1.0 / chi_tilde_w
    m_tilde = (n - chi_w @ h_w) / chi_w.sum()
    m_target = chi_w * (h_w + m_tilde)
    m_w = (1.0 - config.damping) * m_target + config.damping * state.m_w
    if not np.all(np.isfinite(m_w)):
        raise DivergenceDetected("non-finite asset means")
    state.chi_tilde_w = chi_tilde_w
    state.h_w = h_w
    state.chi_w = chi_w
    state.m_tilde = float(m_tilde)
    state.m_w = m_w
    state.sweep_count += 1
    return state


def observables(portfolio: Portfolio, returns: ReturnSet, model: CostModel):
    """Overlap q_hat = (1/N) sum w^2 and per-asset cost eps_hat = (1/N) sum_mu R(u_mu)."""
    w = portfolio.positions
    n = returns.n_assets
    u = returns.entries.T @ w / np.sqrt(n)
    q_hat = float(w @ w) / n
    eps_hat = float(model.cost_values(u).sum()) / n
    return q_hat, eps_hat


def solve(returns: ReturnSet, model: CostModel, config: BpConfig = None):
    """Iterate period and asset sweeps (walking the beta ladder if configured)
    until the asset means settle, and report the portfolio with diagnostics.

    Each ladder entry gets one sweep pair; the final entry holds until
    convergence or the sweep budget runs out, and is the beta the result is
    reported at. Convergence: max_k |dm_wk| / max(1, |m_wk|) < tol, tested
    once the ladder has been climbed. Divergence (q_hat above the configured
    threshold, nonpositive cavity variances, or non-finite values) marks the
    run instead of raising; the partial state is returned.

    Reported portfolio: the final m_w when the run converges (an exact fixed
    point) or diverges (partial state, flagged). An annealed run that ends the
    hold phase still above tol reports the burn-in-discarded time average of
    m_w over that phase instead: near the top beta the fixed point loses local
    stability and the iterate circles it, so the instantaneous m_w sits on the
    cycle while the average sits at its center. Every damped iterate satisfies
    the budget exactly, hence so does the average.
    """
    if config is None:
        config = default_config(model)
    x = returns.entries
    squares = x * x
    n = returns.n_assets
    state = init_state(returns)
    channel_fn = channel_for(model)
    ladder = config.beta_ladder()

    converged = False
    diverged = False
    delta = np.inf
    total = 0
    hold_sweeps = 0
    avg_accum = np.zeros(n)
    avg_count = 0
    try:
        while total < config.max_sweeps:
            beta = ladder[min(total, len(ladder) - 1)]
            at_final_beta = total >= len(ladder) - 1

            def channel(h, chi_tilde, _beta=beta):
                return channel_fn(h, chi_tilde, _beta)

            previous = state.m_w
            period_sweep(state, returns, channel, config, squares)
            asset_sweep(state, returns, config, squares)
            total += 1
            delta = float(np.max(
                np.abs(state.m_w - previous) / np.maximum(1.0, np.abs(state.m_w))
            ))
            q_hat = float(state.m_w @ state.m_w) / n
            if not np.isfinite(q_hat) or q_hat > config.divergence_threshold:
                raise DivergenceDetected(f"q_hat={q_hat:.3e} beyond threshold")
            if at_final_beta:
                if delta < config.tol:
                    converged = True
                    break
                if config.beta_schedule is not None:
                    hold_sweeps += 1
                    if hold_sweeps > AVG_BURN_SWEEPS:
                        avg_accum += state.m_w
                        avg_count += 1
    except DivergenceDetected:
        diverged = True
        converged = False

    if converged or diverged or avg_count == 0:
        positions = state.m_w.copy()
    else:
        positions = avg_accum / avg_count
    portfolio = Portfolio(positions=positions, budget=float(n))
    with np.errstate(all="ignore"):
        q_hat, eps_hat = observables(portfolio, returns, model)
    diagnostics = Diagnostics(
        q_hat=q_hat,
        eps_hat=eps_hat,
        converged=converged and not diverged,
        diverged=diverged,
        sweeps_used=total,
        final_delta=delta,
    )
    return portfolio, diagnostics
