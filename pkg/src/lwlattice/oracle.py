"""Ground-truth moments of the lattice measure exp(-x'Ax/2 - U(x)) / Z.

Two backends share one Gaussian envelope exp(-x'Bx/2):

* tensor-product Gauss-Hermite quadrature (exact for the non-interacting
  theory, exponentially convergent for quartic tails, n small);
* self-normalized importance sampling with proposal N(0, B^-1) and 64-batch
  standard errors.

The envelope matrix is B = A when lambda_min(A) >= tau and
B = A + (tau - lambda_min(A)) I otherwise: A may be indefinite as long as the
interaction grows super-quadratically, so the envelope must be repaired before
it can serve as a node/proposal generator. The leftover factor
exp(-x'(A-B)x/2 - U(x)) multiplies the integrand and is handled in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionCap,
    DimensionMismatch,
    DivergentIntegral,
    NonFinite,
    ValidationError,
)
from .interactions import Growth, Interaction, validate_growth
from .matrices import SpdMatrix, SymMatrix

QUAD_DIM_CAP = 6
DEFAULT_NODES_PER_DIM = 64
DEFAULT_SAMPLES = 1_000_000
DEFAULT_ENVELOPE_FLOOR = 0.5
MC_BATCHES = 64
#: Hard cap on tensor-grid size (nodes_per_dim ** n); beyond this the grid
#: does not fit in memory and the request is refused up front.
QUAD_POINT_CAP = 20_000_000
#: Statistical errors cannot resolve below float rounding; they are floored
#: at a few ulps so that reported errors stay strictly positive.
_SE_FLOOR_ULPS = 4.0

MODES = ("quadrature", "monte_carlo")


@dataclass(frozen=True)
class OracleConfig:
    """Evaluation backend settings.

    seed and the fixed 64-batch partition make Monte Carlo results
    bit-reproducible: each batch owns a counter-based random stream and the
    reduction order never changes.
    """

    mode: str = "quadrature"
    nodes_per_dim: int = DEFAULT_NODES_PER_DIM
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    envelope_floor: float = DEFAULT_ENVELOPE_FLOOR
    want_fourth_moments: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.nodes_per_dim < 1:
            raise ValidationError("nodes_per_dim must be positive")
        if self.samples < MC_BATCHES:
            raise ValidationError(f"samples must be at least {MC_BATCHES}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if not (np.isfinite(self.envelope_floor) and self.envelope_floor > 0.0):
            raise ValidationError("envelope_floor must be positive")


@dataclass(frozen=True)
class StdErrors:
    """Per-entry batch-means standard errors (Monte Carlo only)."""

    z: float
    omega: float
    green: np.ndarray
    fourth_moments: np.ndarray | None = None


@dataclass(frozen=True)
class MomentReport:
    """Partition function, free energy and moments of one (A, U) instance."""

    z: float
    omega: float
    green: SpdMatrix
    mean_interaction: float
    fourth_moments: np.ndarray | None = None
    std_errors: StdErrors | None = None

    def to_dict(self) -> dict:
        out = {
            "z": self.z,
            "omega": self.omega,
            "green": self.green.mat.tolist(),
            "mean_interaction": self.mean_interaction,
        }
        if self.fourth_moments is not None:
            out["fourth_moments"] = self.fourth_moments.ravel().tolist()
        if self.std_errors is not None:
            out["std_errors"] = {
                "z": self.std_errors.z,
                "omega": self.std_errors.omega,
                "green": self.std_errors.green.tolist(),
            }
            if self.std_errors.fourth_moments is not None:
                out["std_errors"]["fourth_moments"] = (
                    self.std_errors.fourth_moments.ravel().tolist()
                )
        return out


@lru_cache(maxsize=32)
def _hermgauss(nodes: int):
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return t, np.log(w)


def _envelope(a: np.ndarray, tau: float, confining: bool):
    """Envelope matrix B and its Cholesky factor.

    The floor repair presumes a confining (super-quadratic) interaction that
    keeps the leftover factor integrable and narrow; without one, A is SPD by
    precondition and is itself the exact envelope, so repairing it would only
    push the nodes off a wide Gaussian.
    """
    lam_min = np.linalg.eigvalsh(a)[0]
    if confining and lam_min < tau:
        b = a + (tau - lam_min) * np.eye(a.shape[0])
    else:
        b = a
    return b, np.linalg.cholesky(b)


def _check_preconditions(a: SymMatrix, u: Interaction) -> bool:
    """Validate integrability; returns whether the interaction confines."""
    if a.n != u.n:
        raise DimensionMismatch(f"A has dimension {a.n}, interaction has {u.n}")
    growth = validate_growth(u)
    if growth.kind is Growth.SUPERQUADRATIC:
        return True
    if np.linalg.eigvalsh(a.mat)[0] <= 0.0:
        raise DivergentIntegral(
            "A is not positive definite and the interaction growth is "
            f"{growth.kind.value}; the partition function may diverge"
        )
    return False


def evaluate_moments(a: SymMatrix, u: Interaction, cfg: OracleConfig) -> MomentReport:
    """Z, Omega = -log Z, G = <x x'> and optionally <x_i x_j x_k x_l>.

    Parameters
    ----------
    a : SymMatrix
        Quadratic coefficient matrix; may be indefinite when the interaction
        grows super-quadratically.
    u : Interaction
        Interaction term.
    cfg : OracleConfig
        Backend selection and accuracy knobs.

    Raises
    ------
    DivergentIntegral
        A not SPD while growth of U is unverified.
    DimensionCap
        Quadrature requested beyond the tensor-grid cap.
    NonFinite
        Overflow or NaN in the integrand (envelope misconfiguration).
    """
    a = SymMatrix.coerce(a)
    confining = _check_preconditions(a, u)
    if cfg.mode == "quadrature":
        return _quadrature_moments(a, u, cfg, confining)
    return _monte_carlo_moments(a, u, cfg, confining)


def green_of_a(a: SymMatrix, u: Interaction, cfg: OracleConfig) -> SpdMatrix:
    """Green's function <x x'> of the measure defined by (A, U)."""
    return evaluate_moments(a, u, replace(cfg, want_fourth_moments=False)).green


def _quadrature_moments(
    a: SymMatrix, u: Interaction, cfg: OracleConfig, confining: bool
) -> MomentReport:
    n = a.n
    if n > QUAD_DIM_CAP:
        raise DimensionCap(f"quadrature limited to n <= {QUAD_DIM_CAP}, got {n}")
    if cfg.nodes_per_dim**n > QUAD_POINT_CAP:
        raise DimensionCap(
            f"tensor grid of {cfg.nodes_per_dim}^{n} points exceeds the "
            f"{QUAD_POINT_CAP:.0e} cap; lower nodes_per_dim"
        )
    t, logw1 = _hermgauss(cfg.nodes_per_dim)
    b, low = _envelope(a.mat, cfg.envelope_floor, confining)

    # tensor grid: y = sqrt(2) t maps the e^{-t^2} weight to e^{-|y|^2/2}
    axes = np.meshgrid(*([t] * n), indexing="ij")
    y = np.sqrt(2.0) * np.stack([ax.ravel() for ax in axes], axis=-1)
    waxes = np.meshgrid(*([logw1] * n), indexing="ij")
    logw = sum(wx.ravel() for wx in waxes)

    x = np.linalg.solve(low.T, y.T).T
    uvals = u.evaluate(x)
    diff = a.mat - b
    phi = -0.5 * np.einsum("mi,ij,mj->m", x, diff, x) - uvals
    if not np.all(np.isfinite(phi)):
        raise NonFinite("non-finite integrand value on the quadrature grid")

    # Z = (sqrt 2)^n / det(L) * sum W exp(phi)
    log_front = 0.5 * n * np.log(2.0) - np.sum(np.log(np.diag(low)))
    log_z = log_front + logsumexp(phi + logw)
    if not np.isfinite(log_z):
        raise NonFinite("partition function overflowed or vanished")

    shifted = phi + logw
    weights = np.exp(shifted - shifted.max())
    weights /= weights.sum()
    green = np.einsum("m,mi,mj->ij", weights, x, x)
    mean_u = float(weights @ uvals)
    m4 = None
    if cfg.want_fourth_moments:
        m4 = np.einsum("m,mi,mj,mk,ml->ijkl", weights, x, x, x, x, optimize=True)

    return MomentReport(
        z=float(np.exp(log_z)),
        omega=float(-log_z),
        green=SpdMatrix(green),
        mean_interaction=mean_u,
        fourth_moments=m4,
    )


def _monte_carlo_moments(
    a: SymMatrix, u: Interaction, cfg: OracleConfig, confining: bool
) -> MomentReport:
    n = a.n
    b, low = _envelope(a.mat, cfg.envelope_floor, confining)
    diff = a.mat - b
    per_batch = cfg.samples // MC_BATCHES
    # proposal N(0, B^-1) has normalization (2 pi)^{n/2} det(B)^{-1/2}
    log_front = 0.5 * n * np.log(2.0 * np.pi) - np.sum(np.log(np.diag(low)))

    shifts = np.empty(MC_BATCHES)
    s0 = np.empty(MC_BATCHES)
    s2 = np.empty((MC_BATCHES, n, n))
    su = np.empty(MC_BATCHES)
    s4 = np.empty((MC_BATCHES, n, n, n, n)) if cfg.want_fourth_moments else None

    for batch in range(MC_BATCHES):
        rng = np.random.Generator(np.random.Philox(key=[cfg.seed, batch]))
        y = rng.standard_normal((per_batch, n))
        x = np.linalg.solve(low.T, y.T).T
        uvals = u.evaluate(x)
        phi = -0.5 * np.einsum("mi,ij,mj->m", x, diff, x) - uvals
        if not np.all(np.isfinite(phi)):
            raise NonFinite("non-finite importance weight")
        shifts[batch] = phi.max()
        w = np.exp(phi - shifts[batch])
        s0[batch] = w.sum()
        s2[batch] = np.einsum("m,mi,mj->ij", w, x, x)
        su[batch] = w @ uvals
        if s4 is not None:
            s4[batch] = np.einsum("m,mi,mj,mk,ml->ijkl", w, x, x, x, x, optimize=True)

    # fixed-order reduction with one global shift: deterministic and stable
    shift = shifts.max()
    scale = np.exp(shifts - shift)
    tot0 = float(scale @ s0)
    log_z = log_front + shift + np.log(tot0) - np.log(per_batch * MC_BATCHES)
    if not np.isfinite(log_z):
        raise NonFinite("partition function estimate overflowed or vanished")
    green = np.einsum("b,bij->ij", scale, s2) / tot0
    mean_u = float(scale @ su) / tot0
    m4 = np.einsum("b,bijkl->ijkl", scale, s4) / tot0 if s4 is not None else None

    # batch-means errors from per-batch self-normalized estimates
    z_b = np.exp(log_front + shifts + np.log(s0) - np.log(per_batch))
    omega_b = -np.log(z_b)
    green_b = s2 / s0[:, None, None]
    root = np.sqrt(MC_BATCHES)
    errors = StdErrors(
        z=_floor_se(z_b.std(ddof=1) / root, float(np.exp(log_z))),
        omega=_floor_se(omega_b.std(ddof=1) / root, float(-log_z)),
        green=_floor_se(green_b.std(axis=0, ddof=1) / root, green),
        fourth_moments=(
            _floor_se((s4 / s0[:, None, None, None, None]).std(axis=0, ddof=1) / root, m4)
            if s4 is not None
            else None
        ),
    )
    return MomentReport(
        z=float(np.exp(log_z)),
        omega=float(-log_z),
        green=SpdMatrix(green),
        mean_interaction=mean_u,
        fourth_moments=m4,
        std_errors=errors,
    )


def _floor_se(se, value):
    floor = _SE_FLOOR_ULPS * np.finfo(float).eps * np.maximum(1.0, np.abs(value))
    out = np.maximum(se, floor)
    return float(out) if np.ndim(out) == 0 else out
