"""
Harmonic section and harmonic map residuals of an almost contact metric structure, their curvature forms and the
frame-free identities relating them.

The induced connection ∇̄ on the contact sub-bundle 𝓕 is realised as the direct-sum connection D on 𝓕 ⊕ span(ξ),
D = P∇P + Q∇Q with Q = ξ⊗η, so that D restricted to 𝓕 is ∇̄ and DJ = P(∇θ)P = ∇̄J. Rough Laplacians use the positive
sign, ∇*∇ = −Σ ∇²_{E_i,E_i}, with the trace running over a full orthonormal frame including ξ.
"""

import logging
from functools import cached_property

import numpy as np

from ..geometry import (
    Germ,
    Point,
    bracket,
    connection_curvature,
    contract,
    differentiate,
    endomorphism_norm,
    rough_laplacian,
)
from ..reports import EquivalenceReport
from ..utils import max_abs

logger = logging.getLogger(__name__)


class ContactConnection:
    """
    The connection induced on 𝓕 by ∇, with its curvature and the derivatives of J = θ|𝓕 at one point
    """

    def __init__(self, structure, point):
        self.structure = structure
        self.point = point
        self.local = structure.at(point)

    @classmethod
    def at(cls, structure, p):
        if not isinstance(p, Point):
            p = structure.chart.at(p)
        return p.cached(("contact", structure), lambda: cls(structure, p))

    @cached_property
    def omega(self):
        """
        ω[a, i, b] = (P∂_iP − Q∂_iP + PΓ_iP + QΓ_iQ)^a_b
        """
        proj = self.local.projection
        gamma = self.point.christoffel
        dp = proj.d()

        return (
            2.0 * contract("am,mbi->aib", proj, dp)
            - dp.map("abi->aib")
            + gamma
            - contract("am,mib->aib", proj, gamma)
            - contract("aim,mb->aib", gamma, proj)
            + 2.0 * contract("am,mip,pb->aib", proj, gamma, proj)
        )

    def projection_residuals(self):
        proj = self.local.P
        return max(max_abs(proj @ proj - proj), max_abs((self.point.g @ self.local.xi_v) @ proj))

    @cached_property
    def nabla_bar_j(self):
        """
        (∇̄J)[a, b, c] = (∇̄_{∂c}J)^a_b
        """
        return differentiate(self.local.theta, "ud", self.omega)

    @cached_property
    def nabla_bar2_j(self):
        """
        ∇̄²J with the inner derivative index before the outer one
        """
        return differentiate(self.nabla_bar_j, "udd", [self.omega, self.omega, self.point.christoffel])

    @cached_property
    def curvature(self):
        return connection_curvature(self.omega)

    def nabla_bar_j_along(self, x):
        return np.einsum("abc,c->ab", self.nabla_bar_j.value, x)

    def rbar(self, x, y):
        """
        Matrix of R̄(X, Y) acting on 𝓕
        """
        proj = self.local.P
        return proj @ np.einsum("abij,i,j->ab", self.curvature.value, x, y) @ proj


def _frame(structure, p, frame):
    return frame if frame is not None else structure.at(p).frame


def _commutator(a, b):
    return a @ b - b @ a


def _curvature_matrix(point, x, y):
    return np.einsum("lkij,i,j->lk", point.riemann.value, x, y)


def unit_sphere_curvature(point, a, b):
    """
    Matrix of r(A, B)σ = ⟨B, σ⟩A − ⟨A, σ⟩B
    """
    return np.outer(a, point.g @ b) - np.outer(b, point.g @ a)


def endomorphism_inner(a, b, point, horizontal):
    """
    ⟨A, B⟩ = Σ_j ⟨AF_j, BF_j⟩ over an orthonormal frame of 𝓕
    """
    return float(sum(point.inner(a @ f, b @ f) for f in horizontal))


def nabla_bar(structure, p, sigma, x):
    """
    ∇̄_Xσ = ∇_Xσ − g(∇_Xσ, ξ)ξ for a horizontal field σ
    """
    local = structure.at(p)
    point = local.point
    germ = point.as_germ(sigma)
    local.check_horizontal(germ.value, "σ")

    nabla_sigma = differentiate(germ, "u", point.christoffel).value @ x
    return nabla_sigma - point.inner(nabla_sigma, local.xi_v) * local.xi_v


def nabla_bar_xi_residual(structure, p):
    """
    |∇̄_ξJ|
    """
    cc = ContactConnection.at(structure, p)
    return endomorphism_norm(cc.point, cc.nabla_bar_j_along(cc.local.xi_v))


def lee_field(structure, p, frame=None):
    """
    δ̄J = Σ_i (∇̄_{F_i}J)(F_i)
    """
    cc = ContactConnection.at(structure, p)
    horizontal = _frame(structure, p, frame).horizontal
    return np.einsum("abc,ib,ic->a", cc.nabla_bar_j.value, horizontal, horizontal)


def theta_lee_field(structure, p, frame=None):
    """
    δθ = Σ_i (∇_{F_i}θ)(F_i)
    """
    local = structure.at(p)
    horizontal = _frame(structure, p, frame).horizontal
    return np.einsum("abc,ib,ic->a", local.nabla_theta.value, horizontal, horizontal)


def lemma33_residual(structure, p, frame=None):
    """
    Σ_i (∇̄_{JF_i}J)(F_i) − Jδ̄J
    """
    cc = ContactConnection.at(structure, p)
    th = cc.local.th
    horizontal = _frame(structure, p, frame).horizontal
    rotated = horizontal @ th.T
    traced = np.einsum("abc,ib,ic->a", cc.nabla_bar_j.value, horizontal, rotated)
    return traced - th @ lee_field(structure, p, frame)


def corrected_extension(structure, p, e):
    """
    Germ of a horizontal field through e with ∇̄E = 0 at the point, horizontal to first order
    """
    local = structure.at(p)
    point = local.point
    local.check_horizontal(e, "E")

    gradient = -np.einsum("kim,m->ki", point.christoffel.value, e) - np.outer(
        local.xi_v, e @ point.g @ local.nabla_xi.value
    )
    return Germ.linear(e, gradient, point.order)


def lemma2_residual(structure, p, e):
    """
    [E, JE] − (∇̄_EJ)(E) − 2⟨E, ∇_{θE}ξ⟩ξ for the corrected extension of a horizontal vector
    """
    cc = ContactConnection.at(structure, p)
    local, point = cc.local, cc.point
    eg = corrected_extension(structure, p, e)
    jeg = contract("ab,b->a", local.theta, eg)

    lie = bracket(eg, jeg).value
    return (
        lie
        - cc.nabla_bar_j_along(e) @ e
        - 2.0 * point.inner(e, local.nabla_xi_along(local.th @ e)) * local.xi_v
    )


def rough_laplacian_j(structure, p, frame=None):
    """
    ∇̄*∇̄J including the ξ-direction term of the trace
    """
    cc = ContactConnection.at(structure, p)
    value = cc.nabla_bar2_j.value
    if frame is None:
        return -np.einsum("abcd,cd->ab", value, cc.point.ginv)
    return -sum(np.einsum("abcd,c,d->ab", value, e, e) for e in frame)


def hse1_residual(structure, p, frame=None):
    """
    [∇̄*∇̄J, J]
    """
    local = structure.at(p)
    return _commutator(rough_laplacian_j(structure, p, frame), local.th)


def hse1_curvature_form(structure, p, frame=None):
    """
    Σ_i [R̄(F_i, JF_i), J] + 2∇̄_{δ̄J}J
    """
    cc = ContactConnection.at(structure, p)
    th = cc.local.th
    frame = _frame(structure, p, frame)

    total = sum(_commutator(cc.rbar(f, th @ f), th) for f in frame.horizontal)
    return total + 2.0 * cc.nabla_bar_j_along(lee_field(structure, p, frame))


def rbar_curvature(structure, p, x, y, sigma):
    """
    R̄(X, Y)σ computed from the curvature of the induced connection
    """
    cc = ContactConnection.at(structure, p)
    for vector, what in ((x, "X"), (y, "Y"), (sigma, "σ")):
        cc.local.check_horizontal(vector, what)
    return cc.rbar(x, y) @ sigma


def rbar_formula(structure, p, x, y, sigma):
    """
    R^𝓕(X, Y)σ + r(∇_Xξ, ∇_Yξ)σ, with R^𝓕 the 𝓕-component of the Levi-Civita curvature
    """
    local = structure.at(p)
    point = local.point
    r = unit_sphere_curvature(point, local.nabla_xi_along(x), local.nabla_xi_along(y))
    return local.P @ _curvature_matrix(point, x, y) @ sigma + r @ sigma


def rbar_residual(structure, p, frame=None):
    """
    Largest |R̄(F_i, F_j)F_k − R^𝓕(F_i, F_j)F_k − r(∇_{F_i}ξ, ∇_{F_j}ξ)F_k| over a horizontal frame
    """
    local = structure.at(p)
    horizontal = _frame(structure, p, frame).horizontal
    return max(
        local.point.norm(rbar_curvature(structure, p, x, y, s) - rbar_formula(structure, p, x, y, s))
        for x in horizontal
        for y in horizontal
        for s in horizontal
    )


def eqr_residual(structure, p, frame=None):
    """
    [Σ_i r(∇_{F_i}ξ, ∇_{JF_i}ξ), J] on 𝓕
    """
    local = structure.at(p)
    th, point = local.th, local.point
    horizontal = _frame(structure, p, frame).horizontal

    total = sum(
        unit_sphere_curvature(point, local.nabla_xi_along(f), local.nabla_xi_along(th @ f)) for f in horizontal
    )
    return _commutator(total, th) @ local.P


def nabla_xi_squared(structure, p):
    """
    |∇ξ|² = Σ_i |∇_{E_i}ξ|²
    """
    local = structure.at(p)
    point = local.point
    nxi = local.nabla_xi.value
    return float(np.einsum("ab,ac,bd,cd->", point.g, nxi, nxi, point.ginv))


def xi_harmonic_residual(structure, p, frame=None):
    """
    ∇*∇ξ − |∇ξ|²ξ
    """
    local = structure.at(p)
    full = None if frame is None else frame.vectors
    return rough_laplacian(structure.xi, local.point, full) - nabla_xi_squared(structure, p) * local.xi_v


def hse2_residual(structure, p, frame=None):
    """
    ∇*∇ξ − |∇ξ|²ξ + ½θ(Σ_i (∇̄_{E_i}J)(∇_{E_i}ξ))
    """
    cc = ContactConnection.at(structure, p)
    local = cc.local
    full = _frame(structure, p, frame).vectors
    nxi = local.nabla_xi.value
    traced = np.einsum("abc,bd,ic,id->a", cc.nabla_bar_j.value, nxi, full, full)
    return xi_harmonic_residual(structure, p, frame) + 0.5 * local.th @ traced


def hse2_curvature_form(structure, p, frame=None):
    """
    ∇*∇ξ − |∇ξ|²ξ − ½Σ_i [R(F_i, θF_i), θ](ξ) − (∇_{δθ}θ)(ξ)
    """
    local = structure.at(p)
    th, xi, point = local.th, local.xi_v, local.point
    frame = _frame(structure, p, frame)

    curvature = sum(_commutator(_curvature_matrix(point, f, th @ f), th) for f in frame.horizontal)
    lee = local.nabla_theta_along(theta_lee_field(structure, p, frame))
    return xi_harmonic_residual(structure, p, frame) - 0.5 * curvature @ xi - lee @ xi


def hse2_sub_identity_residual(structure, p, frame=None):
    """
    Σ_i (∇_{F_i}θ)(∇_{F_i}ξ) − ½Σ_i R(F_i, θF_i)ξ − θ(∇*∇ξ) − ∇_{δθ}ξ
    """
    local = structure.at(p)
    th, xi, point = local.th, local.xi_v, local.point
    frame = _frame(structure, p, frame)

    lhs = sum(local.nabla_theta_along(f) @ local.nabla_xi_along(f) for f in frame.horizontal)
    curvature = sum(_curvature_matrix(point, f, th @ f) @ xi for f in frame.horizontal)
    laplacian = rough_laplacian(structure.xi, point, frame.vectors)
    return lhs - 0.5 * curvature - th @ laplacian - local.nabla_xi_along(theta_lee_field(structure, p, frame))


def combined_residual(structure, p, frame=None):
    """
    Σ_i [R(F_i, θF_i), θ] + 2∇_{δθ}θ on the whole tangent space
    """
    local = structure.at(p)
    th, point = local.th, local.point
    frame = _frame(structure, p, frame)

    curvature = sum(_commutator(_curvature_matrix(point, f, th @ f), th) for f in frame.horizontal)
    return curvature + 2.0 * local.nabla_theta_along(theta_lee_field(structure, p, frame))


def combined_blocks(structure, p, frame=None):
    """
    The 𝓕-block and the ξ-column of the combined residual
    """
    local = structure.at(p)
    combined = combined_residual(structure, p, frame)
    return local.P @ combined @ local.P, combined @ local.xi_v


def combined_block_residuals(structure, p, frame=None):
    """
    Differences between the blocks of the combined residual and what the harmonic section equations say they are:
    the curvature form of hse1 on 𝓕, and along ξ the curvature-free −2θΣ_i (∇_{F_i}θ)(∇_{F_i}ξ) − 2P(∇*∇ξ), which
    holds on normal structures
    """
    local = structure.at(p)
    th, point = local.th, local.point
    frame = _frame(structure, p, frame)
    block, column = combined_blocks(structure, p, frame)

    derivatives = sum(local.nabla_theta_along(f) @ local.nabla_xi_along(f) for f in frame.horizontal)
    laplacian = rough_laplacian(structure.xi, point, frame.vectors)
    expected_column = -2.0 * th @ derivatives - 2.0 * local.P @ laplacian
    return (
        endomorphism_norm(point, block - hse1_curvature_form(structure, p, frame)),
        point.norm(column - expected_column),
    )


def harmonic_map_residual(structure, p, x, frame=None):
    """
    Σ_i ⟨∇̄_{E_i}J, [R̄(E_i, X), J]⟩ + 8Σ_i ⟨∇_{E_i}ξ, R(E_i, X)ξ⟩
    """
    cc = ContactConnection.at(structure, p)
    local, point = cc.local, cc.point
    th, xi = local.th, local.xi_v
    frame = _frame(structure, p, frame)

    total = 0.0
    for e in frame.vectors:
        total += endomorphism_inner(cc.nabla_bar_j_along(e), _commutator(cc.rbar(e, x), th), point, frame.horizontal)
        total += 8.0 * point.inner(local.nabla_xi_along(e), _curvature_matrix(point, e, x) @ xi)
    return total


def harmonic_map_norm(structure, p, frame=None):
    return max(abs(harmonic_map_residual(structure, p, x, frame)) for x in np.eye(structure.dim))


def xi_map_scalar(structure, p, frame=None):
    """
    Σ_i ⟨∇_{E_i}ξ, R(E_i, ξ)ξ⟩, the ξ-direction part of the harmonic map equation
    """
    local = structure.at(p)
    point, xi = local.point, local.xi_v
    frame = _frame(structure, p, frame)
    return float(sum(point.inner(local.nabla_xi_along(e), _curvature_matrix(point, e, xi) @ xi) for e in frame))


def xi_energy_derivative(structure, p):
    """
    ξ(|∇ξ|²/2)
    """
    local = structure.at(p)
    point = local.point
    nxi = local.nabla_xi
    squared = contract("ab,ac,bd,cd->", point.metric, nxi, nxi, point.metric_inverse)
    return 0.5 * float(squared.d().value @ local.xi_v)


def corollary31_equivalence(structure, points, tolerance=1e-6, band_floor=1e-7):
    """
    Where ξ is a harmonic unit field, (hse1 and hse2 vanish) ⇔ (the combined residual vanishes)
    """
    report = EquivalenceReport("cor31:equivalence", tolerance)
    for p in points:
        p = structure.at(p).point
        if max_abs(xi_harmonic_residual(structure, p)) >= band_floor:
            logger.debug("skipping %r: ξ is not harmonic there" % p)
            continue
        local = structure.at(p)
        left = max(
            endomorphism_norm(local.point, hse1_residual(structure, p)),
            local.point.norm(hse2_residual(structure, p)),
        )
        right = endomorphism_norm(local.point, combined_residual(structure, p))
        report.add_pair(left, right)
    return report

