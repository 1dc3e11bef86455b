"""
Sample statistics used by the acceptance checks.

Kolmogorov-Smirnov statistics are computed in-house from sorted samples, with the asymptotic
Kolmogorov survival function for p-values. Every reduction runs over values ordered by
replicate id and uses ``math.fsum``, which is correctly rounded, so merged shards reproduce a
single-pass result bit for bit.
"""
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, TypeVar

import numpy as np
import torch

T = TypeVar("T")


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    variance: float
    standard_error: float
    skewness: float
    kurtosis: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def merge_by_id(*shards: Mapping[int, T]) -> List[T]:
    """Union of replicate-keyed shards, ordered by replicate id."""
    merged: Dict[int, T] = {}
    for shard in shards:
        for key, value in shard.items():
            if key in merged:
                raise ValueError(f"replicate {key} appears in more than one shard")
            merged[key] = value
    return [merged[key] for key in sorted(merged)]


def fsum_mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def summarize(values: Sequence[float]) -> Summary:
    n = len(values)
    if n < 2:
        raise ValueError(f"need at least two values, got {n}")
    mean = fsum_mean(values)
    dev = [v - mean for v in values]
    m2 = math.fsum(x * x for x in dev) / n
    m3 = math.fsum(x**3 for x in dev) / n
    m4 = math.fsum(x**4 for x in dev) / n
    variance = m2 * n / (n - 1)
    return Summary(
        count=n,
        mean=mean,
        variance=variance,
        standard_error=math.sqrt(variance / n),
        skewness=m3 / m2**1.5 if m2 > 0 else math.nan,
        kurtosis=m4 / m2**2 if m2 > 0 else math.nan,
    )


def through_origin_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of y on x for the model y = b x."""
    return math.fsum(a * b for a, b in zip(x, y)) / math.fsum(a * a for a in x)


def decreasing(earlier: float, later: float) -> Optional[bool]:
    """Strict decrease; None when both values are exactly zero and the trend says nothing."""
    if earlier == 0.0 and later == 0.0:
        return None
    return later < earlier


def kolmogorov_sf(y: float) -> float:
    """Survival function of the limiting Kolmogorov distribution."""
    if y < 1.1e-16:
        return 1.0
    x = -2.0 * y * y
    sign, p, r = 1.0, 0.0, 1.0
    while True:
        t = math.exp(x * r * r)
        p += sign * t
        if t == 0.0:
            break
        r += 1.0
        sign = -sign
        if t / p <= 1.1e-16:
            break
    return min(1.0, max(0.0, 2.0 * p))


def ks_coefficient(level: float) -> float:
    """c(level) with P(sqrt(n) D > c) -> level; 1.628 at level 0.01."""
    return math.sqrt(-0.5 * math.log(level / 2.0))


def ks_critical_value(n: int, level: float = 0.01) -> float:
    return ks_coefficient(level) / math.sqrt(n)


def ks_critical_value_two_sample(n1: int, n2: int, level: float = 0.01) -> float:
    return ks_coefficient(level) * math.sqrt((n1 + n2) / (n1 * n2))


def normal_cdf(x: np.ndarray) -> np.ndarray:
    return torch.special.ndtr(torch.from_numpy(np.asarray(x, dtype=np.float64))).numpy()


def ks_one_sample(values: Iterable[float], cdf: Callable[[np.ndarray], np.ndarray] = normal_cdf) -> KSResult:
    x = np.sort(np.asarray(list(values), dtype=np.float64))
    n = x.shape[0]
    f = cdf(x)
    i = np.arange(1, n + 1, dtype=np.float64)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    en = math.sqrt(n)
    return KSResult(d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))


def ks_two_sample(data1: Iterable[float], data2: Iterable[float]) -> KSResult:
    data1 = np.sort(np.asarray(list(data1), dtype=np.float64))
    data2 = np.sort(np.asarray(list(data2), dtype=np.float64))
    n1, n2 = data1.shape[0], data2.shape[0]
    data_all = np.concatenate([data1, data2])
    cdf1 = np.searchsorted(data1, data_all, side="right") / n1
    cdf2 = np.searchsorted(data2, data_all, side="right") / n2
    d = float(np.max(np.abs(cdf1 - cdf2)))
    en = math.sqrt(n1 * n2 / (n1 + n2))
    return KSResult(d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))


def quantile(values: Sequence[float], q: float) -> float:
    return float(np.quantile(np.asarray(values, dtype=np.float64), q))
