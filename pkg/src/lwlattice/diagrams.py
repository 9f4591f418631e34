"""Bold diagrammatic coefficients for diagonal-quartic couplings.

First order combines the tadpole and exchange contractions; second order the
ring and second-order-exchange ones. Orders k >= 3 have no closed form here
and are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, UnsupportedOrder, ValidationError
from .matrices import SpdMatrix, SymMatrix

MAX_ORDER = 2
#: Tolerance of the trace identity linking phi and sigma coefficients.
PHI_SIGMA_TOLERANCE = 1e-12


def _prepare(g, v):
    g = SpdMatrix.coerce(g)
    v = SymMatrix.coerce(v)
    if g.n != v.n:
        raise DimensionMismatch(f"G has dimension {g.n}, coupling has {v.n}")
    return g, v


def sigma1(g: SpdMatrix, v: SymMatrix) -> SymMatrix:
    """First-order bold self-energy.

    (S1)_ij = -1/2 (sum_k v_ik G_kk) delta_ij - v_ij G_ij
    """
    g, v = _prepare(g, v)
    gm, vm = g.mat, v.mat
    return SymMatrix(-0.5 * np.diag(vm @ np.diag(gm)) - vm * gm)


def sigma2(g: SpdMatrix, v: SymMatrix) -> SymMatrix:
    """Second-order bold self-energy.

    (S2)_ij = 1/2 G_ij (sum_kl v_ik (G_kl)^2 v_lj)
              + sum_kl v_ik G_kj G_kl G_li v_jl
    """
    g, v = _prepare(g, v)
    gm, vm = g.mat, v.mat
    ring = 0.5 * gm * (vm @ (gm * gm) @ vm)
    exchange = np.einsum("ik,kj,kl,li,jl->ij", vm, gm, gm, gm, vm, optimize=True)
    return SymMatrix(ring + exchange)


_SIGMA_BY_ORDER = {1: sigma1, 2: sigma2}


def sigma_term(g: SpdMatrix, v: SymMatrix, order: int) -> SymMatrix:
    """Bold self-energy coefficient of the given order."""
    if order not in _SIGMA_BY_ORDER:
        raise UnsupportedOrder(f"bold self-energy implemented for orders 1..{MAX_ORDER}")
    return _SIGMA_BY_ORDER[order](g, v)


def phi_term(g: SpdMatrix, v: SymMatrix, order: int) -> float:
    """Bold free-energy coefficient: (1 / 2k) Tr[G Sigma^(k)]."""
    sig = sigma_term(g, v, order)
    g = SpdMatrix.coerce(g)
    return float(np.trace(g.mat @ sig.mat)) / (2.0 * order)


def truncated_sigma(g: SpdMatrix, v: SymMatrix, eps: float, order: int) -> SymMatrix:
    """Partial sum sum_{k<=N} eps^k Sigma^(k) at interaction strength eps."""
    if order not in _SIGMA_BY_ORDER:
        raise UnsupportedOrder(f"truncation order must be in 1..{MAX_ORDER}")
    if eps < 0.0:
        raise ValidationError("interaction strength must be >= 0")
    g, v = _prepare(g, v)
    total = np.zeros((g.n, g.n))
    for k in range(1, order + 1):
        total += eps**k * sigma_term(g, v, k).mat
    return SymMatrix(total)


def g0_of_truncation(g: SpdMatrix, v: SymMatrix, eps: float, order: int) -> SpdMatrix:
    """Non-interacting Green's function matching the truncated self-energy.

    Returns (G^-1 + partial sum)^-1; raises NotPositiveDefinite when eps is
    too large for this G.
    """
    g = SpdMatrix.coerce(g)
    bar = truncated_sigma(g, v, eps, order)
    core = g.inverse() + bar.mat
    try:
        return SpdMatrix(np.linalg.inv(SpdMatrix(core).mat))
    except NotPositiveDefinite:
        raise NotPositiveDefinite(
            f"G^-1 + truncated self-energy not SPD at eps={eps}"
        ) from None


@dataclass(frozen=True)
class BoldSeries:
    """Coefficients Sigma^(k), Phi^(k) up to the requested order.

    Construction verifies Phi^(k) = (1/2k) Tr[G Sigma^(k)] to
    PHI_SIGMA_TOLERANCE on every instance.
    """

    order: int
    sigma_terms: tuple
    phi_terms: tuple

    @classmethod
    def build(cls, g: SpdMatrix, v: SymMatrix, order: int = MAX_ORDER) -> "BoldSeries":
        if order not in (1, 2):
            raise UnsupportedOrder(f"series order must be in 1..{MAX_ORDER}")
        g = SpdMatrix.coerce(g)
        sigmas = tuple(sigma_term(g, v, k) for k in range(1, order + 1))
        phis = tuple(phi_term(g, v, k) for k in range(1, order + 1))
        for k, (sig, phi) in enumerate(zip(sigmas, phis), start=1):
            direct = float(np.trace(g.mat @ sig.mat)) / (2.0 * k)
            if abs(phi - direct) > PHI_SIGMA_TOLERANCE:
                raise ValidationError(
                    f"phi/sigma trace identity violated at order {k}: "
                    f"{abs(phi - direct):.3e}"
                )
        return cls(order=order, sigma_terms=sigmas, phi_terms=phis)

    def truncated_phi(self, eps: float) -> float:
        return sum(eps**k * p for k, p in enumerate(self.phi_terms, start=1))

    def truncated_sigma(self, eps: float) -> SymMatrix:
        total = np.zeros_like(self.sigma_terms[0].mat)
        for k, sig in enumerate(self.sigma_terms, start=1):
            total = total + eps**k * sig.mat
        return SymMatrix(total)
