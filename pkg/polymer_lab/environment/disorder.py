import enum
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Dict, NamedTuple, Optional

import torch

from ..errors import ParameterError, UndefinedMomentError
from ..walk import Estimate, check_dimension, pi_d, zeta_d_limit


class FamilyTag(enum.Enum):
    GAUSSIAN = enum.auto()
    RADEMACHER = enum.auto()
    BERNOULLI = enum.auto()
    EXPONENTIAL = enum.auto()


def _logaddexp(a: float, b: float) -> float:
    hi, lo = max(a, b), min(a, b)
    if hi == -math.inf:
        return -math.inf
    return hi + math.log1p(math.exp(lo - hi))


class DisorderFamily(ABC):
    """
    Law of a single environment variable omega together with its log-moment generating
    function lambda(beta) = log E[exp(beta * omega)] in closed form.

    Subclasses map uniform words to draws (inverse CDF or an exact discrete mapping) and
    expose the CDF used by distribution checks.
    """

    tag: FamilyTag
    defaults: Dict[str, float] = {}

    def __init__(self, **params: float):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ParameterError(f"{self.name} family takes no parameter(s) {sorted(unknown)}")
        self.params = {**self.defaults, **{k: float(v) for k, v in params.items()}}
        self.check_params()

    @property
    def name(self) -> str:
        return self.tag.name.lower()

    def check_params(self) -> None:
        pass

    @property
    def beta_limit(self) -> float:
        """Supremum of the inverse temperatures with a finite moment generating function."""
        return math.inf

    @abstractmethod
    def log_mgf(self, beta: float) -> float:
        pass

    @abstractmethod
    def from_uniform(self, u: torch.Tensor) -> torch.Tensor:
        pass

    @abstractmethod
    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        pass

    @abstractmethod
    def lambda2_sup(self) -> float:
        """Supremum of lambda_2 over beta >= 0."""

    def lambda_(self, beta: float) -> float:
        if not math.isfinite(beta):
            raise ParameterError(f"beta must be finite, got {beta}")
        if beta >= self.beta_limit:
            raise ParameterError(f"lambda({beta}) is infinite for {self!r}")
        if beta == 0.0:
            return 0.0
        return self.log_mgf(beta)

    def lambda2(self, beta: float) -> float:
        """lambda(2 beta) - 2 lambda(beta); infinite when lambda(2 beta) is."""
        if 2.0 * beta >= self.beta_limit:
            return math.inf
        return self.lambda_(2.0 * beta) - 2.0 * self.lambda_(beta)

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{type(self).__name__}({params})"


class GaussianDisorder(DisorderFamily):
    tag = FamilyTag.GAUSSIAN

    def log_mgf(self, beta: float) -> float:
        return beta * beta / 2.0

    def from_uniform(self, u: torch.Tensor) -> torch.Tensor:
        return torch.special.ndtri(u)

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        return torch.special.ndtr(x)

    def lambda2_sup(self) -> float:
        return math.inf


class RademacherDisorder(DisorderFamily):
    tag = FamilyTag.RADEMACHER

    def log_mgf(self, beta: float) -> float:
        # log cosh, stable for large |beta|
        return _logaddexp(beta, -beta) - math.log(2.0)

    def from_uniform(self, u: torch.Tensor) -> torch.Tensor:
        return (u >= 0.5).to(torch.float64) * 2.0 - 1.0

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        return 0.5 * (x >= -1.0).to(torch.float64) + 0.5 * (x >= 1.0).to(torch.float64)

    def lambda2_sup(self) -> float:
        return math.log(2.0)


class BernoulliDisorder(DisorderFamily):
    """Centred Bernoulli: omega = 1 - p with probability p, and -p otherwise."""

    tag = FamilyTag.BERNOULLI
    defaults = {"p": 0.5}

    def check_params(self) -> None:
        p = self.params["p"]
        if not 0.0 < p < 1.0:
            raise ParameterError(f"bernoulli parameter p must lie in (0, 1), got {p}")

    def log_mgf(self, beta: float) -> float:
        p = self.params["p"]
        return _logaddexp(math.log(p) + beta * (1.0 - p), math.log1p(-p) - beta * p)

    def from_uniform(self, u: torch.Tensor) -> torch.Tensor:
        p = self.params["p"]
        return (u < p).to(torch.float64) - p

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        p = self.params["p"]
        return (1.0 - p) * (x >= -p).to(torch.float64) + p * (x >= 1.0 - p).to(torch.float64)

    def lambda2_sup(self) -> float:
        return -math.log(self.params["p"])


class ExponentialDisorder(DisorderFamily):
    """Shifted exponential: omega = E - 1/rate with E exponential of the given rate."""

    tag = FamilyTag.EXPONENTIAL
    defaults = {"rate": 1.0}

    def check_params(self) -> None:
        rate = self.params["rate"]
        if not (rate > 0.0 and math.isfinite(rate)):
            raise ParameterError(f"exponential rate must be positive and finite, got {rate}")

    @property
    def beta_limit(self) -> float:
        return self.params["rate"]

    def log_mgf(self, beta: float) -> float:
        ratio = beta / self.params["rate"]
        return -math.log1p(-ratio) - ratio

    def from_uniform(self, u: torch.Tensor) -> torch.Tensor:
        rate = self.params["rate"]
        return -torch.log1p(-u) / rate - 1.0 / rate

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        rate = self.params["rate"]
        return -torch.expm1(-rate * (x + 1.0 / rate).clamp(min=0.0))

    def lambda2_sup(self) -> float:
        return math.inf


DISORDER_FAMILIES = {
    "gaussian": GaussianDisorder,
    "rademacher": RademacherDisorder,
    "bernoulli": BernoulliDisorder,
    "exponential": ExponentialDisorder,
}

FAMILY_ALIASES = {
    "standard_gaussian": "gaussian",
    "centered_bernoulli": "bernoulli",
    "shifted_exponential": "exponential",
}


def create_named_family(name: str, **params: float) -> DisorderFamily:
    """
    Create a DisorderFamily from the closed set of supported families.
    :param name: the family name, e.g. ``gaussian`` or ``bernoulli``.
    :param params: family parameters, ``p`` for bernoulli and ``rate`` for exponential.
    """
    key = FAMILY_ALIASES.get(name, name)
    if key not in DISORDER_FAMILIES:
        raise ParameterError(f"unknown disorder family: {name}")
    return DISORDER_FAMILIES[key](**params)


def parse_family_params(text: str) -> Dict[str, float]:
    """Parse ``"p=0.3"`` or ``"rate=2, p=0.1"`` into a parameter dict."""
    params = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"malformed family parameter {item!r}, expected key=value")
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise ParameterError(f"family parameter {key.strip()} is not a number: {value!r}") from None
    return params


def format_family_params(params: Dict[str, float]) -> str:
    return ",".join(f"{k}={v!r}" for k, v in sorted(params.items()))


@lru_cache(maxsize=None)
def walk_constants(d: int) -> Estimate:
    return pi_d(d, tol=1e-5)


def find_beta2(family: DisorderFamily, threshold: float, tol: float = 1e-10) -> float:
    """Bisection for the boundary of the L2 region, lambda_2(beta_2) = threshold."""
    if family.lambda2_sup() <= threshold:
        return math.inf
    if math.isfinite(family.beta_limit):
        hi = family.beta_limit / 2.0
    else:
        hi = 1.0
        while family.lambda2(hi) <= threshold:
            hi *= 2.0
            if hi > 1e6:
                return math.inf
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if family.lambda2(mid) < threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TemperatureProfile:
    family: str
    d: int
    beta: float
    lambda_: float
    lambda2: float
    kappa2: float
    in_l2_region: bool
    beta2: float
    sigma2: Optional[float]
    pi_d: float
    pi_d_error: float
    zeta_d: float
    params: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["lambda"] = out.pop("lambda_")
        return out


def temperature_profile(family: DisorderFamily, beta: float, d: int) -> TemperatureProfile:
    """
    Derived temperature quantities for one family, inverse temperature and dimension.

    sigma2 = (1 - pi_d) kappa2 / (1 - pi_d e^lambda2) * Z_d inside the L2 region, ``None`` outside.
    """
    check_dimension(d)
    if not (beta >= 0.0 and math.isfinite(beta)):
        raise ParameterError(f"beta must be finite and non-negative, got {beta}")
    constants = walk_constants(d)
    pi = constants.value
    lam = family.lambda_(beta)
    lam2 = family.lambda2(beta)
    kappa2 = math.expm1(lam2) if math.isfinite(lam2) else math.inf
    threshold = -math.log(pi)
    in_l2 = lam2 < threshold
    zeta = zeta_d_limit(d)
    sigma2 = (1.0 - pi) * kappa2 / (1.0 - pi * math.exp(lam2)) * zeta if in_l2 else None
    return TemperatureProfile(
        family=family.name,
        d=d,
        beta=beta,
        lambda_=lam,
        lambda2=lam2,
        kappa2=kappa2,
        in_l2_region=in_l2,
        beta2=find_beta2(family, threshold),
        sigma2=sigma2,
        pi_d=pi,
        pi_d_error=constants.error,
        zeta_d=zeta,
        params=dict(family.params),
    )


class WinftySecondMoment(NamedTuple):
    stated: float
    proof: float


def second_moment_winfty(profile: TemperatureProfile) -> WinftySecondMoment:
    """
    Both closed forms of E[W_inf^2]: ``stated`` = (1 - pi) e^l2 / (1 - pi e^l2) and
    ``proof`` = (1 - pi) / (1 - pi e^l2).

    The overlap dynamic programme of :mod:`polymer_lab.oracle` decides which one the model obeys.
    """
    if not profile.in_l2_region:
        raise UndefinedMomentError(
            f"E[W_inf^2] is infinite at beta={profile.beta}: lambda2={profile.lambda2} >= log(1/pi_d)"
        )
    pi, growth = profile.pi_d, math.exp(profile.lambda2)
    proof = (1.0 - pi) / (1.0 - pi * growth)
    return WinftySecondMoment(stated=proof * growth, proof=proof)
