from .disorder import (
    DISORDER_FAMILIES,
    BernoulliDisorder,
    DisorderFamily,
    ExponentialDisorder,
    FamilyTag,
    GaussianDisorder,
    RademacherDisorder,
    TemperatureProfile,
    WinftySecondMoment,
    create_named_family,
    find_beta2,
    format_family_params,
    parse_family_params,
    second_moment_winfty,
    temperature_profile,
    walk_constants,
)
from .field import EnvironmentField, omega, pack_sites, splitmix64


def lambda_(family: DisorderFamily, beta: float) -> float:
    """log E[exp(beta * omega)] in closed form."""
    return family.lambda_(beta)


def lambda2_sup(family: DisorderFamily) -> float:
    return family.lambda2_sup()


__all__ = [
    "DISORDER_FAMILIES",
    "BernoulliDisorder",
    "DisorderFamily",
    "ExponentialDisorder",
    "FamilyTag",
    "GaussianDisorder",
    "RademacherDisorder",
    "TemperatureProfile",
    "WinftySecondMoment",
    "create_named_family",
    "find_beta2",
    "format_family_params",
    "parse_family_params",
    "second_moment_winfty",
    "temperature_profile",
    "walk_constants",
    "EnvironmentField",
    "omega",
    "pack_sites",
    "splitmix64",
    "lambda_",
    "lambda2_sup",
]
