"""Legendre duality on the SPD cone: A[G], F[G], Phi[G] and the exact
self-energy.

F is evaluated through its dual route: solve G[A] = G_target for A by a damped
Newton iteration, then F = 1/2 Tr[A G] - Omega[A]. The Newton Jacobian is the
second-moment sensitivity dG/dA = -1/2 Cov(x_i x_j, x_k x_l) assembled from
oracle fourth moments on the symmetric-matrix basis {E_ii} u {E_ij + E_ji}.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diagrams import sigma1
from .errors import BoundaryTooClose, LwlatticeError, NoConvergence, ValidationError
from .interactions import Interaction, as_diagonal_quartic
from .matrices import SpdMatrix, SymMatrix, logdet_spd, min_eigenvalue
from .oracle import MomentReport, OracleConfig, evaluate_moments

#: Minimum eigenvalue of a target Green's function accepted by the solver;
#: F diverges logarithmically at the cone boundary and Newton conditioning
#: degrades there.
BOUNDARY_GUARD = 1e-6
DEFAULT_TOL_QUADRATURE = 1e-8
DEFAULT_MAX_ITER = 60
MAX_STEP_HALVINGS = 30


@dataclass(frozen=True)
class LwReport:
    """Output bundle of one duality evaluation at fixed G."""

    a_of_g: SymMatrix
    universal_f: float
    phi: float
    phi0: float
    sigma_exact: SymMatrix
    entropy: float
    mean_interaction: float
    solver_iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {
            "a_of_g": self.a_of_g.mat.tolist(),
            "universal_f": self.universal_f,
            "phi": self.phi,
            "phi0": self.phi0,
            "sigma_exact": self.sigma_exact.mat.tolist(),
            "entropy": self.entropy,
            "mean_interaction": self.mean_interaction,
            "solver_iterations": self.solver_iterations,
            "residual": self.residual,
        }


def _sym_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i, n)]


def _newton_step(report: MomentReport, g_target: np.ndarray) -> np.ndarray:
    """Solve the linearized moment-matching equation for a symmetric update."""
    green = report.green.mat
    m4 = report.fourth_moments
    n = green.shape[0]
    pairs = _sym_pairs(n)
    dim = len(pairs)
    cov = m4 - np.einsum("ij,kl->ijkl", green, green)
    jac = np.empty((dim, dim))
    rhs = np.empty(dim)
    for row, (i, j) in enumerate(pairs):
        rhs[row] = green[i, j] - g_target[i, j]
        for col, (k, l) in enumerate(pairs):
            mult = 1.0 if k == l else 2.0
            jac[row, col] = -0.5 * cov[i, j, k, l] * mult
    try:
        delta = np.linalg.solve(jac, -rhs)
    except np.linalg.LinAlgError:
        raise NoConvergence(
            "singular moment-sensitivity Jacobian (degenerate fourth moments)",
            residual=float(np.linalg.norm(rhs)),
        ) from None
    step = np.zeros((n, n))
    for col, (k, l) in enumerate(pairs):
        step[k, l] += delta[col]
        if k != l:
            step[l, k] += delta[col]
    return step


def _initial_guess(g_target: SpdMatrix, u: Interaction, cfg: OracleConfig) -> np.ndarray:
    """G^-1 corrected by the first bold diagram when the coupling is known.

    The diagram correction targets the perturbative regime; when it lands
    farther from the solution than plain G^-1 (strong coupling, large G), the
    plain inverse is used instead.
    """
    g_inv = g_target.inverse()
    try:
        factor, v = as_diagonal_quartic(u)
    except LwlatticeError:
        return g_inv
    corrected = g_inv - factor * sigma1(g_target, v).mat
    probe = replace(cfg, want_fourth_moments=False)
    try:
        res_corr = _forward_residual(corrected, u, probe, g_target.mat)
        res_plain = _forward_residual(g_inv, u, probe, g_target.mat)
    except LwlatticeError:
        return g_inv
    return corrected if res_corr <= res_plain else g_inv


def _forward_residual(a: np.ndarray, u, cfg, g_target: np.ndarray) -> float:
    report = evaluate_moments(SymMatrix(a), u, cfg)
    return float(np.linalg.norm(report.green.mat - g_target))


def default_tolerance(cfg: OracleConfig, report: MomentReport | None = None) -> float:
    """1e-8 in quadrature mode; three standard errors in Monte Carlo mode."""
    if cfg.mode == "quadrature":
        return DEFAULT_TOL_QUADRATURE
    if report is not None and report.std_errors is not None:
        return 3.0 * float(np.linalg.norm(report.std_errors.green))
    return 3e-3


def _solve_inverse(
    g_target: SpdMatrix,
    u: Interaction,
    cfg: OracleConfig,
    tol: float | None,
    max_iter: int,
    a_init: SymMatrix | None = None,
):
    g_target = SpdMatrix.coerce(g_target)
    if min_eigenvalue(g_target) < BOUNDARY_GUARD:
        raise BoundaryTooClose(
            f"lambda_min(G) = {min_eigenvalue(g_target):.3e} below {BOUNDARY_GUARD:.0e}"
        )
    if g_target.n != u.n:
        raise ValidationError(
            f"G has dimension {g_target.n}, interaction has {u.n}"
        )
    full_cfg = replace(cfg, want_fourth_moments=True)
    probe_cfg = replace(cfg, want_fourth_moments=False)
    gt = g_target.mat

    a = a_init.mat.copy() if a_init is not None else _initial_guess(g_target, u, cfg)
    report = evaluate_moments(SymMatrix(a), u, full_cfg)
    if tol is None:
        tol = default_tolerance(cfg, report)
    residual = float(np.linalg.norm(report.green.mat - gt))
    best = (a, residual)

    for iteration in range(1, max_iter + 1):
        if residual <= tol:
            return SymMatrix(a), report, iteration - 1, residual, tol
        step = _newton_step(report, gt)
        scale = 1.0
        for _ in range(MAX_STEP_HALVINGS):
            trial = a + scale * step
            try:
                trial_res = _forward_residual(trial, u, probe_cfg, gt)
            except LwlatticeError:
                trial_res = np.inf
            if trial_res < residual:
                break
            scale *= 0.5
        else:
            raise NoConvergence(
                f"line search stalled at residual {residual:.3e} (tol {tol:.1e})",
                residual=residual,
            )
        a = a + scale * step
        report = evaluate_moments(SymMatrix(a), u, full_cfg)
        residual = float(np.linalg.norm(report.green.mat - gt))
        if residual < best[1]:
            best = (a, residual)

    if residual <= tol:
        return SymMatrix(a), report, max_iter, residual, tol
    raise NoConvergence(
        f"no convergence in {max_iter} iterations; best residual {best[1]:.3e} "
        f"(tol {tol:.1e})",
        residual=best[1],
    )


def inverse_map(
    g_target: SpdMatrix,
    u: Interaction,
    cfg: OracleConfig,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    a_init: SymMatrix | None = None,
) -> SymMatrix:
    """The unique A with <x x'>_{A,U} = G_target.

    Newton iteration on A with damped steps (residual-decreasing line search,
    up to 30 halvings). Raises NoConvergence with the best residual seen, or
    BoundaryTooClose when G_target sits within BOUNDARY_GUARD of the cone
    boundary.
    """
    a, _, _, _, _ = _solve_inverse(g_target, u, cfg, tol, max_iter, a_init)
    return a


def lw_evaluate(
    g: SpdMatrix,
    u: Interaction,
    cfg: OracleConfig,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    a_init: SymMatrix | None = None,
) -> LwReport:
    """A[G], F[G], Phi[G], exact self-energy and the entropy split at G.

    F[G] = 1/2 Tr[A[G] G] - Omega[A[G]] by Legendre duality;
    Phi[G] = 2 F[G] - Tr[log G] - n log(2 pi e);
    Sigma[G] = A[G] - G^-1 (satisfies the Dyson equation by construction);
    entropy is the differential entropy of the maximizing density, so that
    F = entropy - <U> up to solver tolerance.
    """
    g = SpdMatrix.coerce(g)
    a, report, iterations, residual, _ = _solve_inverse(g, u, cfg, tol, max_iter, a_init)
    omega = report.omega
    universal_f = 0.5 * float(np.trace(a.mat @ g.mat)) - omega
    phi0 = g.n * np.log(2.0 * np.pi * np.e)
    phi = 2.0 * universal_f - logdet_spd(g) - phi0
    sigma = SymMatrix(a.mat - g.inverse())
    # entropy of rho_G computed from the oracle's own moments at A[G]
    entropy = (
        0.5 * float(np.trace(a.mat @ report.green.mat))
        + report.mean_interaction
        - omega
    )
    return LwReport(
        a_of_g=a,
        universal_f=universal_f,
        phi=phi,
        phi0=phi0,
        sigma_exact=sigma,
        entropy=entropy,
        mean_interaction=report.mean_interaction,
        solver_iterations=iterations,
        residual=residual,
    )


def exact_self_energy(
    g: SpdMatrix,
    u: Interaction,
    cfg: OracleConfig,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
    a_init: SymMatrix | None = None,
) -> SymMatrix:
    """Sigma[G] = A[G] - G^-1."""
    g = SpdMatrix.coerce(g)
    a, _, _, _, _ = _solve_inverse(g, u, cfg, tol, max_iter, a_init)
    return SymMatrix(a.mat - g.inverse())


def rho_g_logdensity(
    g: SpdMatrix,
    u: Interaction,
    x,
    cfg: OracleConfig,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> float:
    """log rho_G(x) of the maximizing density at G.

    rho_G(x) = exp(-1/2 x'A[G]x - U(x)) / Z[A[G]]; its exponential integrates
    to one by construction.
    """
    g = SpdMatrix.coerce(g)
    a, report, _, _, _ = _solve_inverse(g, u, cfg, tol, max_iter)
    xv = np.asarray(x, dtype=float)
    quad = 0.5 * float(xv @ a.mat @ xv)
    # -log Z = Omega
    return -quad - float(u.evaluate(xv)) + report.omega
