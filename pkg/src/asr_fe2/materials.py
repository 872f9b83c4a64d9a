"""Constitutive laws of the meso model.

Units: stresses and moduli in Pa, times in days, temperatures in K, lengths in
mm except where a fracture energy (J/m^2) is combined with a length, which is
converted to m on the spot.

Orthotropic matrices use Voigt order [xx, yy, xy] with engineering shear
strain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConstitutiveError, ParameterError
from .geometry import Phase

D_MAX = 0.9999
REDUCTION_CONSTANT = 2.0
MAX_REDUCTION_STEPS = 10
FAILURE_TOL = 1e-9


@dataclass(frozen=True)
class IsotropicElastic:
    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0 or not (0 <= self.nu < 0.5):
            raise ParameterError(f"inadmissible elastic constants E={self.E}, nu={self.nu}")

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))


@dataclass(frozen=True)
class FractureParams:
    Gc: float
    ft0: float
    wc: float
    weibull_k: float = 5.0
    weibull_lambda_factor: float = 0.2

    def __post_init__(self):
        if min(self.Gc, self.ft0, self.wc, self.weibull_k, self.weibull_lambda_factor) <= 0:
            raise ParameterError("fracture parameters must be positive")


@dataclass(frozen=True)
class AsrLaw:
    """Larive kinetics with Arrhenius-shifted latency and characteristic times."""

    tau_lat0: float = 30.0
    tau_ch0: float = 60.0
    U_C: float = 5400.0
    U_L: float = 9700.0
    T0: float = 311.15
    eps_inf: float = 0.065

    def tau_ch(self, T):
        return self.tau_ch0 * np.exp(self.U_C * (1.0 / T - 1.0 / self.T0))

    def tau_lat(self, T):
        return self.tau_lat0 * np.exp(self.U_L * (1.0 / T - 1.0 / self.T0))


@dataclass(frozen=True)
class MaterialTable:
    mortar: IsotropicElastic
    aggregate: IsotropicElastic
    asr_product: IsotropicElastic
    mortar_fracture: FractureParams
    aggregate_fracture: FractureParams

    def elastic(self, phase):
        return {Phase.MORTAR: self.mortar, Phase.AGGREGATE: self.aggregate,
                Phase.ASR_SITE: self.asr_product}[Phase(phase)]

    def fracture(self, phase):
        return {Phase.MORTAR: self.mortar_fracture,
                Phase.AGGREGATE: self.aggregate_fracture}.get(Phase(phase))


def default_material_table(wc=0.5):
    """Elastic and fracture data of mortar, aggregates and ASR product."""
    return MaterialTable(
        mortar=IsotropicElastic(12e9, 0.3),
        aggregate=IsotropicElastic(59e9, 0.3),
        asr_product=IsotropicElastic(11e9, 0.18),
        mortar_fracture=FractureParams(Gc=60.0, ft0=3e6, wc=wc),
        aggregate_fracture=FractureParams(Gc=160.0, ft0=10e6, wc=wc),
    )


# --- ASR kinetics ---------------------------------------------------------

def reaction_extent(t, T, law):
    """Reaction extent zeta(t, T) in [0, 1)."""
    t = np.asarray(t, dtype=float)
    tau_ch = law.tau_ch(T)
    tau_lat = law.tau_lat(T)
    x = np.exp(-t / tau_ch)
    zeta = (1.0 - x) / (1.0 + x * np.exp(tau_lat / tau_ch))
    return float(zeta) if zeta.ndim == 0 else zeta


def eigenstrain(t, T, law):
    """Isotropic ASR eigenstrain tensor (2x2) at time t and temperature T."""
    return law.eps_inf * reaction_extent(t, T, law) * np.eye(2)


# --- strength statistics --------------------------------------------------

def tensile_strength_from_uniform(u, ft0, k=5.0, lambda_factor=0.2):
    """Inverse of the shifted Weibull CDF with floor 0.8 * ft0."""
    u = np.asarray(u, dtype=float)
    lam = lambda_factor * ft0
    return 0.8 * ft0 + lam * (-np.log1p(-u)) ** (1.0 / k)


def sample_tensile_strength(ft0, k, lambda_factor, rng, size=None):
    return tensile_strength_from_uniform(rng.random(size), ft0, k, lambda_factor)


def weibull_cdf(ft, ft0, k=5.0, lambda_factor=0.2):
    x = np.clip((np.asarray(ft, dtype=float) - 0.8 * ft0) / (lambda_factor * ft0), 0.0, None)
    return 1.0 - np.exp(-(x**k))


# --- saw-tooth law --------------------------------------------------------

def damage_value(i, a=REDUCTION_CONSTANT, n_max=MAX_REDUCTION_STEPS, d_max=D_MAX):
    """Damage after ``i`` reductions: 1 - a**-i, replaced by ``d_max`` from step ``n_max`` on."""
    i = np.asarray(i)
    if np.any(i < 0) or a <= 1:
        raise ParameterError("need i >= 0 and a > 1")
    d = np.where(i >= n_max, d_max, 1.0 - np.power(float(a), -np.minimum(i, n_max).astype(float)))
    return float(d) if d.ndim == 0 else d


def ultimate_strain(Gc, wc, ft):
    """Crack-band ultimate strain 2 Gc / (wc ft); wc in mm, ft in Pa."""
    return 2.0 * Gc / (wc * 1e-3 * ft)


def softening_modulus(E, ft, eps_u):
    """Magnitude of the softening branch slope through (ft/E, ft) and (eps_u, 0)."""
    return ft / (eps_u - ft / E)


def reduced_strength(eps_u, E_i, E_t):
    """Strength on the softening envelope at secant modulus E_i."""
    return eps_u * E_i * E_t / (E_i + E_t)


def saw_tooth_dissipation(E, ft, eps_u, a=REDUCTION_CONSTANT, n_max=MAX_REDUCTION_STEPS,
                          d_max=D_MAX):
    """Energy density (Pa) released by the drops of a uniaxial saw-tooth path."""
    E = np.asarray(E, dtype=float)
    E_t = softening_modulus(E, ft, eps_u)
    total = np.zeros(np.broadcast(E, ft, eps_u).shape)
    for i in range(n_max):
        E_i = E * (1.0 - damage_value(i, a, n_max, d_max))
        E_next = E * (1.0 - damage_value(i + 1, a, n_max, d_max))
        eps_peak = eps_u * E_t / (E_i + E_t)
        total = total + 0.5 * eps_peak**2 * (E_i - E_next)
    return total


def regularized_ultimate_strain(E, ft, eps_u, a=REDUCTION_CONSTANT, n_max=MAX_REDUCTION_STEPS,
                                d_max=D_MAX):
    """Stretch eps_u so the discrete saw-tooth releases exactly ft * eps_u / 2.

    The teeth stay on the (stretched) linear softening envelope, so the
    strength of every tooth and the ultimate strain are adjusted together.
    Solved by bisection on the stretch factor, vectorized over elements.
    """
    E, ft, eps_u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (E, ft, eps_u)))
    target = 0.5 * ft * eps_u
    lo = np.ones_like(eps_u)
    hi = np.full_like(eps_u, 2.0)
    while True:
        short = saw_tooth_dissipation(E, ft, hi * eps_u, a, n_max, d_max) < target
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
        if hi.max() > 1e6:
            raise ConstitutiveError("saw-tooth regularization did not bracket")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        low = saw_tooth_dissipation(E, ft, mid * eps_u, a, n_max, d_max) < target
        lo = np.where(low, mid, lo)
        hi = np.where(low, hi, mid)
    out = 0.5 * (lo + hi) * eps_u
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ElementState:
    """Constitutive memory of one element (scalar form)."""

    phase: int
    ft_initial: float
    eps_u: float
    E_t: float
    cracked: bool = False
    alpha: float = 0.0
    step: int = 0
    d: float = 0.0
    ft_current: float = math.nan
    closed: bool = False

    def __post_init__(self):
        if math.isnan(self.ft_current):
            object.__setattr__(self, "ft_current", self.ft_initial)

    @classmethod
    def fresh(cls, phase, base, fracture, ft, regularize=True, a=REDUCTION_CONSTANT,
              n_max=MAX_REDUCTION_STEPS, d_max=D_MAX):
        eps_u = ultimate_strain(fracture.Gc, fracture.wc, ft)
        if regularize:
            eps_u = regularized_ultimate_strain(base.E, ft, eps_u, a, n_max, d_max)
        return cls(phase=int(phase), ft_initial=ft, eps_u=eps_u,
                   E_t=softening_modulus(base.E, ft, eps_u))

    @property
    def at_cap(self):
        return self.d >= D_MAX


def sla_reduce(state, base, a=REDUCTION_CONSTANT, n_max=MAX_REDUCTION_STEPS, d_max=D_MAX):
    """One saw-tooth reduction of a cracked element.

    Returns ``(new_state, (E_i, nu_i, mu_i, ft_i))``; when the element already
    sits at ``d_max`` the state is returned unchanged with ``None``.
    """
    if not state.cracked:
        raise ConstitutiveError("sla_reduce needs a cracked element")
    if state.d >= d_max:
        return state, None
    step = state.step + 1
    d = damage_value(step, a, n_max, d_max)
    E_i = base.E * (1.0 - d)
    ft_i = reduced_strength(state.eps_u, E_i, state.E_t)
    new = replace(state, step=step, d=d, ft_current=min(ft_i, state.ft_current))
    return new, (E_i, base.nu * (1.0 - d), base.mu * (1.0 - d), new.ft_current)


# --- fixed-crack orthotropy -----------------------------------------------

def principal_stress(sigma):
    """Largest principal stress and the angle of its direction, in [0, pi).

    ``sigma`` holds Voigt stresses [sxx, syy, sxy] along the last axis.
    """
    sigma = np.asarray(sigma, dtype=float)
    sxx, syy, sxy = sigma[..., 0], sigma[..., 1], sigma[..., 2]
    center = 0.5 * (sxx + syy)
    radius = np.hypot(0.5 * (sxx - syy), sxy)
    angle = np.mod(0.5 * np.arctan2(2.0 * sxy, sxx - syy), np.pi)
    return center + radius, angle


def check_failure(sigma, ft_current, tol=FAILURE_TOL):
    """Crack normal angle if the principal stress criterion is violated, else None."""
    s = np.asarray(sigma, dtype=float)
    if s.shape == (2, 2):
        s = np.array([s[0, 0], s[1, 1], s[0, 1]])
    s1, angle = principal_stress(s)
    if s1 > ft_current * (1.0 + tol):
        return float(angle)
    return None


def crack_normal_stress(sigma, alpha):
    """Normal stress across a crack whose normal makes angle alpha with x."""
    sigma = np.asarray(sigma, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    return c * c * sigma[..., 0] + s * s * sigma[..., 1] + 2.0 * c * s * sigma[..., 2]


def closure_check(sigma_n):
    """True (closed) iff the crack-normal stress is strictly compressive."""
    return np.asarray(sigma_n) < 0.0


def strain_rotation(alpha):
    """Voigt strain transformation global -> crack axes (engineering shear)."""
    alpha = np.asarray(alpha, dtype=float)
    c, s = np.cos(alpha), np.sin(alpha)
    T = np.zeros(alpha.shape + (3, 3))
    T[..., 0, 0] = c * c
    T[..., 0, 1] = s * s
    T[..., 0, 2] = c * s
    T[..., 1, 0] = s * s
    T[..., 1, 1] = c * c
    T[..., 1, 2] = -c * s
    T[..., 2, 0] = -2.0 * c * s
    T[..., 2, 1] = 2.0 * c * s
    T[..., 2, 2] = c * c - s * s
    return T


def orthotropic_stiffness_batch(E, nu, d, alpha, closed, plane="stress"):
    """In-plane stiffness (n, 3, 3) of cracked or sound elements.

    In crack axes (1 = crack normal, 2 = in-plane along the crack, 3 = out of
    plane) the 3D orthotropic matrix is built from the reduced constants,
    condensed to 2D and rotated to global axes. Closed cracks get their Young's
    moduli and Poisson's ratios back while the shear moduli stay reduced.
    """
    E, nu, d, alpha = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (E, nu, d, alpha)))
    closed = np.broadcast_to(np.asarray(closed, dtype=bool), E.shape)
    mu = E / (2.0 * (1.0 + nu))
    keep = np.where(closed, 1.0, 1.0 - d)

    E1 = E * keep
    E2 = E3 = E
    nu12 = nu13 = nu * keep
    nu23 = nu32 = nu
    mu12 = mu * (1.0 - d)
    nu21 = nu12 * E2 / E1
    nu31 = nu13 * E3 / E1

    denom = 1.0 - nu12 * nu21 - nu23 * nu32 - nu31 * nu13 - 2.0 * nu21 * nu32 * nu13
    if np.any(denom <= 0):
        raise ConstitutiveError("non-positive orthotropic determinant")
    g = 1.0 / denom
    c11 = E1 * (1.0 - nu23 * nu32) * g
    c22 = E2 * (1.0 - nu13 * nu31) * g
    c33 = E3 * (1.0 - nu12 * nu21) * g
    c12 = E1 * (nu21 + nu31 * nu23) * g
    c13 = E1 * (nu31 + nu21 * nu32) * g
    c23 = E2 * (nu32 + nu12 * nu31) * g

    C = np.zeros(E.shape + (3, 3))
    if plane == "stress":
        C[..., 0, 0] = c11 - c13 * c13 / c33
        C[..., 1, 1] = c22 - c23 * c23 / c33
        C[..., 0, 1] = C[..., 1, 0] = c12 - c13 * c23 / c33
    elif plane == "strain":
        C[..., 0, 0] = c11
        C[..., 1, 1] = c22
        C[..., 0, 1] = C[..., 1, 0] = c12
    else:
        raise ParameterError(f"unknown plane assumption {plane!r}")
    C[..., 2, 2] = mu12

    T = strain_rotation(alpha)
    return np.einsum("...ki,...kl,...lj->...ij", T, C, T)


def orthotropic_stiffness(state, base, mode="open", plane="stress"):
    """Global 3x3 stiffness of one element for crack mode 'open' or 'closed'."""
    d = state.d if state.cracked else 0.0
    return orthotropic_stiffness_batch(base.E, base.nu, d, state.alpha, mode == "closed", plane)


def isotropic_stiffness(base, plane="stress"):
    E, nu = base.E, base.nu
    if plane == "stress":
        f = E / (1.0 - nu * nu)
        return f * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
    f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([[1.0 - nu, nu, 0.0], [nu, 1.0 - nu, 0.0], [0.0, 0.0, 0.5 - nu]])


# --- per-RVE state arrays -------------------------------------------------

class ElementStates:
    """Struct-of-arrays constitutive state of every element of one mesh."""

    def __init__(self, phases, table, rng=None, regularize=True, a=REDUCTION_CONSTANT,
                 n_max=MAX_REDUCTION_STEPS, d_max=D_MAX, strengths=None):
        self.phases = np.asarray(phases, dtype=np.int8).copy()
        n = len(self.phases)
        self.a, self.n_max, self.d_max = float(a), int(n_max), float(d_max)
        self.E = np.empty(n)
        self.nu = np.empty(n)
        for ph in Phase:
            mask = self.phases == ph
            el = table.elastic(ph)
            self.E[mask] = el.E
            self.nu[mask] = el.nu
        self.ft_initial = np.full(n, np.inf)
        self.eps_u = np.full(n, np.inf)
        self.E_t = np.full(n, np.inf)
        if rng is None:
            rng = np.random.default_rng()
        for ph in (Phase.MORTAR, Phase.AGGREGATE):
            mask = np.flatnonzero(self.phases == ph)
            if not len(mask):
                continue
            fr = table.fracture(ph)
            if strengths is not None:
                ft = np.asarray(strengths, dtype=float)[mask]
            else:
                ft = sample_tensile_strength(fr.ft0, fr.weibull_k, fr.weibull_lambda_factor, rng,
                                             len(mask))
            eps_u = ultimate_strain(fr.Gc, fr.wc, ft)
            if regularize:
                eps_u = regularized_ultimate_strain(self.E[mask], ft, eps_u, a, n_max, d_max)
            self.ft_initial[mask] = ft
            self.eps_u[mask] = eps_u
            self.E_t[mask] = softening_modulus(self.E[mask], ft, eps_u)
        self.can_damage = self.phases != Phase.ASR_SITE
        self.cracked = np.zeros(n, dtype=bool)
        self.alpha = np.zeros(n)
        self.step = np.zeros(n, dtype=np.int64)
        self.d = np.zeros(n)
        self.ft_current = self.ft_initial.copy()
        self.closed = np.zeros(n, dtype=bool)

    def __len__(self):
        return len(self.phases)

    @property
    def at_cap(self):
        return self.d >= self.d_max

    def element(self, e):
        """Scalar snapshot of element ``e``."""
        return ElementState(phase=int(self.phases[e]), ft_initial=float(self.ft_initial[e]),
                            eps_u=float(self.eps_u[e]), E_t=float(self.E_t[e]),
                            cracked=bool(self.cracked[e]), alpha=float(self.alpha[e]),
                            step=int(self.step[e]), d=float(self.d[e]),
                            ft_current=float(self.ft_current[e]), closed=bool(self.closed[e]))

    def initiate(self, idx, angles):
        """Fix the crack direction of elements cracking for the first time."""
        idx = np.asarray(idx)
        new = idx[~self.cracked[idx]]
        if len(new):
            self.alpha[new] = np.asarray(angles)[~self.cracked[idx]]
            self.cracked[new] = True

    def reduce(self, idx):
        """One saw-tooth step on elements ``idx``; returns the ones actually reduced."""
        idx = np.asarray(idx)
        idx = idx[self.cracked[idx] & ~self.at_cap[idx]]
        if not len(idx):
            return idx
        self.step[idx] += 1
        self.d[idx] = damage_value(self.step[idx], self.a, self.n_max, self.d_max)
        E_i = self.E[idx] * (1.0 - self.d[idx])
        ft = reduced_strength(self.eps_u[idx], E_i, self.E_t[idx])
        self.ft_current[idx] = np.minimum(ft, self.ft_current[idx])
        return idx

    def stiffness(self, plane="stress", closed=None):
        closed = self.closed if closed is None else closed
        d = np.where(self.cracked, self.d, 0.0)
        return orthotropic_stiffness_batch(self.E, self.nu, d, self.alpha, closed & self.cracked,
                                           plane)

    def copy(self):
        new = object.__new__(ElementStates)
        new.__dict__ = {k: (v.copy() if isinstance(v, np.ndarray) else v)
                        for k, v in self.__dict__.items()}
        return new

    def pristine(self):
        """Copy with the same strengths and no damage."""
        new = self.copy()
        new.cracked[:] = False
        new.alpha[:] = 0.0
        new.step[:] = 0
        new.d[:] = 0.0
        new.closed[:] = False
        new.ft_current = new.ft_initial.copy()
        return new

    def __eq__(self, other):
        if not isinstance(other, ElementStates):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in
                   ("phases", "cracked", "alpha", "step", "d", "ft_current", "closed",
                    "ft_initial"))
