"""Self-consistent Dyson solver and direct free-energy minimization.

The free energy of a trial Green's function is

    f(G) = 1/2 (Tr[A G] - log det G - Phi_model[G] - n log(2 pi e))

whose stationarity condition is the Dyson equation G^-1 = A - Sigma_model[G].
Phi_model is zero (no self-energy), a truncated bold series, or the exact
duality route. Non-convergence is a reportable outcome (trace flag), not an
exception; only leaving the SPD cone aborts a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .diagrams import BoldSeries
from .duality import LwReport, lw_evaluate
from .errors import (
    IterateLeftCone,
    LwlatticeError,
    NotPositiveDefinite,
    UnsupportedInteraction,
    ValidationError,
)
from .interactions import Interaction, as_diagonal_quartic
from .matrices import SpdMatrix, SymMatrix, cholesky_factor, min_eigenvalue
from .oracle import OracleConfig

DEFAULT_DAMPING = 0.5
DAMPING_FLOOR = 1.0 / 64.0
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
#: Line-search acceptance slack: descent is enforced up to this tolerance.
DESCENT_SLACK = 1e-12
#: Trial iterates beyond this Frobenius norm are treated as divergence of an
#: unbounded (truncated) objective and rejected.
GREEN_NORM_GUARD = 1e8


class SigmaModel(Enum):
    """Self-energy model used by the solver.

    EXACT_ORACLE runs a full duality solve per iterate and is intended for
    small verification instances (n <= 3).
    """

    NONE = "none"
    BOLD1 = "bold1"
    BOLD12 = "bold12"
    EXACT_ORACLE = "exact"


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    residual: float
    free_energy: float


@dataclass(frozen=True)
class SolveTrace:
    """Iteration history of a Dyson or minimization run."""

    iterates: tuple
    converged: bool
    final_green: SpdMatrix

    def to_dict(self) -> dict:
        return {
            "iterates": [
                {
                    "iteration": rec.iteration,
                    "residual": rec.residual,
                    "free_energy": rec.free_energy,
                }
                for rec in self.iterates
            ],
            "converged": self.converged,
            "final_green": self.final_green.mat.tolist(),
        }


def _free_energy_value(a_mat: np.ndarray, g: SpdMatrix, phi: float) -> float:
    logdet = 2.0 * float(np.sum(np.log(np.diag(g.chol))))
    return 0.5 * (
        float(np.trace(a_mat @ g.mat)) - logdet - phi - g.n * np.log(2.0 * np.pi * np.e)
    )


class _ModelEvaluator:
    """Sigma_model[G] and Phi_model[G], sharing one duality solve per point."""

    def __init__(
        self,
        u: Interaction,
        model: SigmaModel,
        cfg: OracleConfig,
        solver_tol: float | None = None,
    ):
        self.u = u
        self.model = model
        self.cfg = cfg
        self.scale = 0.0
        self.v = None
        self.order = 0
        self._warm_a: SymMatrix | None = None
        # the exact model must resolve Sigma well below the outer tolerance;
        # in Monte Carlo mode the duality solve keeps its statistical default
        self._inner_tol = None
        if solver_tol is not None and cfg.mode == "quadrature":
            self._inner_tol = min(max(solver_tol / 100.0, 1e-13), 1e-8)
        if model in (SigmaModel.BOLD1, SigmaModel.BOLD12):
            try:
                self.scale, self.v = as_diagonal_quartic(u)
            except UnsupportedInteraction:
                raise UnsupportedInteraction(
                    "bold self-energy models require a (scaled) diagonal "
                    "quartic interaction"
                ) from None
            self.order = 1 if model is SigmaModel.BOLD1 else 2

    def sigma_and_phi(self, g: SpdMatrix):
        if self.model is SigmaModel.NONE:
            return SymMatrix(np.zeros((g.n, g.n))), 0.0
        if self.model is SigmaModel.EXACT_ORACLE:
            report = self._lw(g)
            return report.sigma_exact, report.phi
        series = BoldSeries.build(g, self.v, self.order)
        return series.truncated_sigma(self.scale), series.truncated_phi(self.scale)

    def phi(self, g: SpdMatrix) -> float:
        return self.sigma_and_phi(g)[1]

    def _lw(self, g: SpdMatrix) -> LwReport:
        report = lw_evaluate(
            g, self.u, self.cfg, tol=self._inner_tol, max_iter=100, a_init=self._warm_a
        )
        self._warm_a = report.a_of_g
        return report


def free_energy(
    a: SymMatrix,
    g: SpdMatrix,
    u: Interaction,
    model: SigmaModel,
    cfg: OracleConfig = OracleConfig(),
) -> float:
    """Variational free energy of the trial G under the chosen model."""
    a = SymMatrix.coerce(a)
    g = SpdMatrix.coerce(g)
    evaluator = _ModelEvaluator(u, model, cfg)
    return _free_energy_value(a.mat, g, evaluator.phi(g))


def _initial_green(a: SymMatrix, tau: float) -> SpdMatrix:
    """A^-1, or the inverse of the tau-repaired A when A is not SPD."""
    lam = min_eigenvalue(a)
    mat = a.mat if lam > 0.0 else a.mat + (tau - lam) * np.eye(a.n)
    return SpdMatrix(np.linalg.inv(SpdMatrix(mat).mat))


def dyson_solve(
    a: SymMatrix,
    u: Interaction,
    model: SigmaModel,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    cfg: OracleConfig = OracleConfig(),
    g_init: SpdMatrix | None = None,
) -> SolveTrace:
    """Damped fixed-point iteration G <- (1-a) G + a (A - Sigma[G])^-1.

    Damping halves whenever A - Sigma[G] leaves the SPD cone (the previous
    step is retaken shorter); at the floor of 1/64 the run aborts with
    IterateLeftCone. The default start is A^-1 (repaired when A is not SPD);
    g_init overrides it.
    """
    a = SymMatrix.coerce(a)
    if not 0.0 < damping <= 1.0:
        raise ValidationError("damping must lie in (0, 1]")
    evaluator = _ModelEvaluator(u, model, cfg, solver_tol=tol)
    if model is SigmaModel.NONE and min_eigenvalue(a) <= 0.0:
        raise ValidationError(
            "the non-interacting Green's function requires A to be SPD"
        )

    green = SpdMatrix.coerce(g_init) if g_init is not None else _initial_green(a, cfg.envelope_floor)
    alpha = damping
    previous = None  # (green, target) of the last accepted step
    records = []
    converged = False
    iteration = 0
    while iteration < max_iter:
        sigma, phi = evaluator.sigma_and_phi(green)
        m = a.mat - sigma.mat
        try:
            cholesky_factor(m)
        except NotPositiveDefinite:
            if previous is None:
                raise IterateLeftCone(
                    "A - Sigma[G] not SPD at the initial iterate"
                ) from None
            alpha *= 0.5
            if alpha < DAMPING_FLOOR:
                raise IterateLeftCone(
                    f"A - Sigma[G] left the SPD cone at damping floor {DAMPING_FLOOR}"
                ) from None
            old_green, target = previous
            green = SpdMatrix((1.0 - alpha) * old_green.mat + alpha * target)
            continue
        target = np.linalg.inv(m)
        residual = float(np.linalg.norm(green.inverse() - m))
        iteration += 1
        records.append(IterateRecord(iteration, residual, _free_energy_value(a.mat, green, phi)))
        if residual <= tol:
            converged = True
            break
        previous = (green, target)
        green = SpdMatrix((1.0 - alpha) * green.mat + alpha * target)

    return SolveTrace(iterates=tuple(records), converged=converged, final_green=green)


def minimize_free_energy(
    a: SymMatrix,
    u: Interaction,
    model: SigmaModel,
    cfg: OracleConfig = OracleConfig(),
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolveTrace:
    """Gradient descent on the free energy over the SPD cone.

    G is parameterized as L L^T with L lower-triangular (positive diagonal),
    which keeps every iterate inside the cone; the gradient with respect to L
    is the lower triangle of (A - G^-1 - Sigma[G]) L. Step sizes follow a
    Barzilai-Borwein estimate with a backtracking safeguard. The free energy
    is non-increasing along the trace up to DESCENT_SLACK; once its changes
    fall below float resolution, steps are accepted on Dyson-residual
    decrease instead, which is what convergence is measured by.
    """
    a = SymMatrix.coerce(a)
    evaluator = _ModelEvaluator(u, model, cfg, solver_tol=tol)
    green = _initial_green(a, cfg.envelope_floor)
    low = cholesky_factor(green.mat)

    sigma, phi = evaluator.sigma_and_phi(green)
    fe = _free_energy_value(a.mat, green, phi)
    step_size = 0.1
    prev_low = None
    prev_grad = None
    records = []
    converged = False

    for iteration in range(1, max_iter + 1):
        gradient_g = a.mat - green.inverse() - sigma.mat
        residual = float(np.linalg.norm(gradient_g))
        records.append(IterateRecord(iteration, residual, fe))
        if residual <= tol:
            converged = True
            break
        gradient_low = np.tril(gradient_g @ low)
        if prev_low is not None:
            dl = low - prev_low
            dg = gradient_low - prev_grad
            curvature = float(np.sum(dl * dg))
            if curvature > 0.0:
                step_size = min(float(np.sum(dl * dl)) / curvature, 1e3)
        prev_low, prev_grad = low, gradient_low

        accepted = False
        trial_step = step_size
        for _ in range(60):
            trial_low = low - trial_step * gradient_low
            if np.any(np.diag(trial_low) <= 0.0):
                trial_step *= 0.5
                continue
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    trial_green = SpdMatrix(trial_low @ trial_low.T)
                    if np.linalg.norm(trial_green.mat) > GREEN_NORM_GUARD:
                        raise ValidationError("trial iterate diverged")
                    trial_sigma, trial_phi = evaluator.sigma_and_phi(trial_green)
                    trial_fe = _free_energy_value(a.mat, trial_green, trial_phi)
            except LwlatticeError:
                # truncated models can be unbounded below; diverging or
                # overflowing trial points are rejected like any failed step
                trial_step *= 0.5
                continue
            if not np.isfinite(trial_fe):
                trial_step *= 0.5
                continue
            if trial_fe < fe - DESCENT_SLACK:
                accepted = True
            elif trial_fe <= fe + DESCENT_SLACK:
                # free-energy changes below resolution: require residual progress
                trial_residual = float(
                    np.linalg.norm(a.mat - trial_green.inverse() - trial_sigma.mat)
                )
                accepted = trial_residual < residual
            if accepted:
                low, green = trial_low, trial_green
                sigma, phi, fe = trial_sigma, trial_phi, trial_fe
                break
            trial_step *= 0.5
        if not accepted:
            break  # stalled line search: report the best point reached

    return SolveTrace(iterates=tuple(records), converged=converged, final_green=green)
