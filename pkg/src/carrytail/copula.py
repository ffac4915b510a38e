"""Archimedean generators, mixture copulas and frailty sampling.

Four generator families are supported: Clayton, Gumbel, Frank and the
outer-power Clayton ("op_clayton", the Clayton generator composed with
``t ** (1 / beta)``). All derivative orders up to 6 are exact closed forms,
which caps the copula dimension at 5.

The low-level ``_psi*`` helpers broadcast over arrays of parameters as well as
arrays of arguments, so the optimizer can evaluate many parameter vectors in
one numpy pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial
import numpy as np

FAMILIES = ("clayton", "gumbel", "frank", "op_clayton")
MAX_DIM = 5
MAX_ORDER = 6
EPS = 1e-10


class ParameterError(ValueError):
    """Generator or mixture parameters violate a family constraint."""


class DomainError(ValueError):
    """Argument outside the domain of a generator or copula function."""


@dataclass(frozen=True)
class Generator:
    family: str
    theta: float
    beta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        theta, beta = float(self.theta), float(self.beta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)
        if not np.isfinite(theta):
            raise ParameterError("theta must be finite")
        if self.family in ("clayton", "op_clayton") and theta <= 0:
            raise ParameterError("theta must be > 0")
        if self.family == "gumbel" and theta < 1:
            raise ParameterError("theta must be >= 1")
        if self.family == "frank" and theta == 0:
            raise ParameterError("theta must be nonzero")
        if self.family == "op_clayton":
            if not np.isfinite(beta) or beta < 1:
                raise ParameterError("beta must be >= 1")
        elif beta != 1.0:
            raise ParameterError(f"beta is only defined for op_clayton, not {self.family}")

    def check_dim(self, d: int) -> None:
        if self.family == "frank" and self.theta < 0 and d != 2:
            raise ParameterError("negative theta only in dimension 2")

    def to_dict(self) -> dict:
        out = {"family": self.family, "theta": self.theta}
        if self.family == "op_clayton":
            out["beta"] = self.beta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Generator":
        return cls(data["family"], data["theta"], data.get("beta", 1.0))


@dataclass(frozen=True)
class MixtureCopula:
    components: tuple[Generator, ...]
    weights: tuple[float, ...]
    dim: int = 2
    _log_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)
        if not 1 <= len(comps) <= 3:
            raise ParameterError("a mixture has 1 to 3 components")
        if len(w) != len(comps):
            raise ParameterError("one weight per component is required")
        if any(x < 0 or x > 1 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ParameterError("weights must lie in [0, 1] and sum to 1")
        if not 2 <= self.dim <= MAX_DIM:
            raise ParameterError(f"dimension must be between 2 and {MAX_DIM}")
        for g in comps:
            g.check_dim(self.dim)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_weights", np.log(np.asarray(w)))

    @classmethod
    def single(cls, generator: Generator, dim: int = 2) -> "MixtureCopula":
        return cls((generator,), (1.0,), dim)

    def to_dict(self) -> dict:
        return {
            "components": [g.to_dict() for g in self.components],
            "weights": list(self.weights),
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureCopula":
        comps = tuple(Generator.from_dict(c) for c in data["components"])
        return cls(comps, tuple(data["weights"]), int(data["dim"]))


# ---------------------------------------------------------------------------
# combinatorial tables


def _stirling2(n: int, k: int) -> int:
    return sum((-1) ** j * comb(k, j) * (k - j) ** n for j in range(k + 1)) // factorial(k)


# Li_{-n}(x) = sum_k k! S(n+1, k+1) r^(k+1),  r = x / (1 - x)
_POLYLOG_COEF = [
    np.array([factorial(k) * _stirling2(n + 1, k + 1) for k in range(n + 1)], dtype=float)
    for n in range(MAX_ORDER)
]


def _falling(a, j):
    out = np.ones_like(a)
    for i in range(j):
        out = out * (a - i)
    return out


def _bell_table(a, m):
    """Partial Bell polynomials B_{m,k} evaluated at the falling factorials of ``a``.

    These are the Faa di Bruno coefficients for the inner power ``t ** a``:
    d^m/dt^m f(t^a) = t^-m * sum_k f^(k)(s) * s^k * B[m][k], with s = t^a.
    """
    a = np.asarray(a, dtype=float)
    x = [None] + [_falling(a, j) for j in range(1, m + 1)]
    zero, one = np.zeros_like(a), np.ones_like(a)
    table = [[one] + [zero] * m]
    for mm in range(1, m + 1):
        row = [zero]
        for k in range(1, mm + 1):
            acc = zero
            for i in range(1, mm - k + 2):
                acc = acc + comb(mm - 1, i - 1) * x[i] * table[mm - i][k - 1]
            row.append(acc)
        row += [zero] * (m - mm)
        table.append(row)
    return table[m]


# ---------------------------------------------------------------------------
# vectorised generator primitives


def _psi(family, t, theta, beta=1.0):
    t = np.asarray(t, dtype=float)
    if family == "clayton":
        return np.exp(-np.log1p(theta * t) / theta)
    if family == "gumbel":
        return np.exp(-(t ** (1.0 / theta)))
    if family == "frank":
        return -np.log1p(np.expm1(-theta) * np.exp(-t)) / theta
    if family == "op_clayton":
        return np.exp(-np.log1p(theta * t ** (1.0 / beta)) / theta)
    raise ParameterError(f"unknown family {family!r}")


def _psi_inv(family, u, theta, beta=1.0):
    u = np.asarray(u, dtype=float)
    if family == "clayton":
        return np.expm1(-theta * np.log(u)) / theta
    if family == "gumbel":
        return (-np.log(u)) ** theta
    if family == "frank":
        return -np.log(np.expm1(-theta * u) / np.expm1(-theta))
    if family == "op_clayton":
        return (np.expm1(-theta * np.log(u)) / theta) ** beta
    raise ParameterError(f"unknown family {family!r}")


def _log_abs_dpsi(family, t, m, theta, beta=1.0):
    """log |psi^(m)(t)| for t > 0.

    The sign is (-1)^m for every completely monotone generator; negative-theta
    Frank only keeps that pattern for m <= 2, which is all a bivariate density needs.
    """
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if family == "clayton":
        const = sum(np.log1p(j * theta) for j in range(m))
        return const - (1.0 / theta + m) * np.log1p(theta * t)
    if family == "frank":
        return _frank_log_abs_dpsi(t, m, theta)
    if family == "gumbel":
        # psi^(m)(t) = (-1)^m t^-m e^-s Q(s), s = t^a, Q with coefficients (-1)^(m-k) B_{m,k} >= 0
        a = 1.0 / theta
        logt = np.log(t)
        s = np.exp(a * logt)
        bell = _bell_table(a, m)
        q = _horner([(-1) ** (m - k) * bell[k] for k in range(m + 1)], s)
        return -m * logt - s + np.log(q)
    if family == "op_clayton":
        # Faa di Bruno over the inner power; every term carries (1 + theta s)^(-1/theta),
        # the rest is a polynomial in y = s / (1 + theta s) with non-negative coefficients
        a = 1.0 / np.asarray(beta, dtype=float)
        logt = np.log(t)
        s = np.exp(a * logt)
        log1p_ts = np.log1p(theta * s)
        y = s / (1.0 + theta * s)
        bell = _bell_table(a, m)
        coefs = [np.zeros_like(a)]
        outer = np.ones_like(theta)
        for k in range(1, m + 1):
            outer = outer * (1.0 + (k - 1) * theta)
            coefs.append(outer * (-1) ** (m - k) * bell[k])
        return -m * logt - log1p_ts / theta + np.log(_horner(coefs, y))
    raise ParameterError(f"unknown family {family!r}")


def _horner(coefs, x):
    """sum_k coefs[k] * x**k."""
    acc = coefs[-1] * np.ones_like(x)
    for c in reversed(coefs[:-1]):
        acc = acc * x + c
    return acc


def _frank_log_abs_dpsi(t, m, theta):
    # psi^(m)(t) = (-1)^m / theta * Li_{1-m}(x),  x = (1 - e^-theta) e^-t,
    # Li_{-n}(x) = r * sum_k k! S(n+1, k+1) r^k with r = x / (1 - x)
    coef = _POLYLOG_COEF[m - 1]
    if np.all(theta > 0):
        log_x = np.log(-np.expm1(-theta)) - t
        log_r = log_x - np.log1p(-np.exp(log_x))
        return log_r + np.log(_horner(list(coef), np.exp(log_r))) - np.log(theta)
    theta, t = np.broadcast_arrays(theta, t)
    x = -np.expm1(-theta) * np.exp(-t)
    r = x / (1.0 - x)
    return np.log(np.abs(r * _horner(list(coef), r) / theta))


# ---------------------------------------------------------------------------
# public generator API


def psi(g: Generator, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("psi requires t >= 0")
    return _psi(g.family, t, g.theta, g.beta)


def psi_inverse(g: Generator, u):
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 1):
        raise DomainError("psi_inverse requires u in (0, 1]")
    return _psi_inv(g.family, u, g.theta, g.beta)


def psi_deriv(g: Generator, t, order: int):
    """Exact ``order``-th derivative of the generator (1 <= order <= 6)."""
    if not 1 <= order <= MAX_ORDER:
        raise DomainError(f"order must be in 1..{MAX_ORDER}")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("psi_deriv requires t > 0")
    sign = -1.0 if order % 2 else 1.0
    if g.family == "frank" and g.theta < 0:
        # not completely monotone: evaluate the signed polylog directly
        x = -np.expm1(-g.theta) * np.exp(-t)
        r = x / (1.0 - x)
        li = sum(c * r ** (k + 1) for k, c in enumerate(_POLYLOG_COEF[order - 1]))
        return sign * li / g.theta
    return sign * np.exp(_log_abs_dpsi(g.family, t, order, g.theta, g.beta))


def _check_unit(u, *, closed_top: bool):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < 2:
        raise DomainError("copula arguments need dimension >= 2")
    if np.any(u <= 0) or np.any(u > 1) or (not closed_top and np.any(u >= 1)):
        raise DomainError("copula arguments must lie in (0, 1)" if not closed_top else "copula arguments must lie in (0, 1]")
    return u


def copula_cdf(g: Generator, u):
    """C(u) = psi(sum_j psi^-1(u_j)); ``u`` has shape (..., d)."""
    u = _check_unit(u, closed_top=True)
    g.check_dim(u.shape[-1])
    return _psi(g.family, _psi_inv(g.family, u, g.theta, g.beta).sum(axis=-1), g.theta, g.beta)


def mixture_cdf(model: MixtureCopula, u):
    u = _check_unit(u, closed_top=True)
    return sum(w * copula_cdf(g, u) for g, w in zip(model.components, model.weights))


def _component_logpdf(family, u, theta, beta=1.0):
    """Log-density of one Archimedean component.

    ``u`` is (n, d). ``theta``/``beta`` are scalars or 1-d arrays of length P,
    in which case the result is (P, n).
    """
    scalar = np.ndim(theta) == 0 and np.ndim(beta) == 0
    d = u.shape[-1]
    th = np.reshape(theta, (-1, 1, 1)).astype(float)
    be = np.reshape(beta, (-1, 1, 1)).astype(float)
    tj = _psi_inv(family, u[None, ...], th, be)
    top = _log_abs_dpsi(family, tj.sum(axis=-1), d, th[..., 0], be[..., 0])
    bottom = _log_abs_dpsi(family, tj, 1, th, be).sum(axis=-1)
    out = top - bottom
    return out[0] if scalar else out


def _is_independence(g: Generator) -> bool:
    return g.family == "gumbel" and g.theta == 1.0


def log_copula_density(model: MixtureCopula, u) -> np.ndarray:
    u = _check_unit(u, closed_top=False)
    if u.shape[-1] != model.dim:
        raise DomainError(f"expected dimension {model.dim}, got {u.shape[-1]}")
    u2 = u.reshape(-1, model.dim)
    parts = []
    for g, lw in zip(model.components, model._log_weights):
        if _is_independence(g):
            lc = np.zeros(u2.shape[0])
        else:
            lc = _component_logpdf(g.family, u2, g.theta, g.beta)
        parts.append(lc + lw)
    out = parts[0] if len(parts) == 1 else np.logaddexp.reduce(np.stack(parts), axis=0)
    return out.reshape(u.shape[:-1])


def copula_density(model: MixtureCopula, u) -> np.ndarray:
    return np.exp(log_copula_density(model, u))


# ---------------------------------------------------------------------------
# frailty sampling


def _positive_stable(rng: np.random.Generator, alpha, size):
    """Draws with Laplace transform exp(-s^alpha), 0 < alpha <= 1 (Kanter's representation)."""
    if alpha >= 1.0:
        return np.ones(size)
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    b = (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    return a * b


def _frailty(g: Generator, rng: np.random.Generator, size: int) -> np.ndarray:
    if g.family == "clayton":
        return rng.gamma(1.0 / g.theta, g.theta, size)
    if g.family == "gumbel":
        return _positive_stable(rng, 1.0 / g.theta, size)
    if g.family == "frank":
        return rng.logseries(-np.expm1(-g.theta), size).astype(float)
    if g.family == "op_clayton":
        v0 = rng.gamma(1.0 / g.theta, g.theta, size)
        return _positive_stable(rng, 1.0 / g.beta, size) * v0 ** g.beta
    raise ParameterError(f"unknown family {g.family!r}")


def _sample_frank_negative(theta, rng, size):
    # conditional inversion, bivariate only
    u = rng.uniform(size=size)
    w = rng.uniform(size=size)
    num = w * np.expm1(-theta)
    den = w + (1.0 - w) * np.exp(-theta * u)
    v = -np.log1p(num / den) / theta
    return np.column_stack([u, v])


def sample_generator(g: Generator, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    g.check_dim(d)
    if g.family == "frank" and g.theta < 0:
        return _sample_frank_negative(g.theta, rng, n)
    v = _frailty(g, rng, n)
    e = rng.standard_exponential((n, d))
    return _psi(g.family, e / v[:, None], g.theta, g.beta)


def sample_copula(model: MixtureCopula, n: int, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Draw ``n`` rows from the mixture; identical seeds give identical output."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(seed, np.random.SeedSequence):
        # spawn() mutates its receiver; work on a copy so reusing ``seed`` repeats the draws
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    else:
        ss = np.random.SeedSequence(seed)
    pick_ss, *comp_ss = ss.spawn(1 + len(model.components))
    choice = np.random.default_rng(pick_ss).choice(len(model.components), size=n, p=model.weights)
    out = np.empty((n, model.dim))
    for i, g in enumerate(model.components):
        idx = np.flatnonzero(choice == i)
        if idx.size:
            out[idx] = sample_generator(g, idx.size, model.dim, np.random.default_rng(comp_ss[i]))
    return np.clip(out, EPS, 1.0 - EPS)


def kendall_tau(g: Generator) -> float:
    """Closed-form Kendall's tau for Clayton and Gumbel (used by sanity checks)."""
    if g.family == "clayton":
        return g.theta / (g.theta + 2.0)
    if g.family == "gumbel":
        return 1.0 - 1.0 / g.theta
    raise ParameterError(f"no closed form Kendall tau for {g.family}")
