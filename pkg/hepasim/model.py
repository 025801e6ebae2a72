"""
Reaction terms of the virus/T cell system: the growth law with a strong Allee
effect, predation and decay couplings, and the non-local inflow of T cells
through the portal field.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from hepasim.exceptions import PoleInput
from hepasim.grid import FloatArray, ScalarField, quadrature


class ModelParams(BaseModel):
    """
    The scalar coefficients of the system.

    Attributes:
        alpha: Diffusion coefficient of the virus u
        beta: Diffusion coefficient of the T cells v
        gamma: Predation rate
        delta: Inflow strength
        eta: Decay rate of the T cells
        u_min: Allee threshold, 0 < u_min < 1
        kappa: Shape parameter of the growth law

    Example:
        >>> ModelParams(u_min=1.5)
        Traceback (most recent call last):
        pydantic_core._pydantic_core.ValidationError: ...
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.6, gt=0.0, allow_inf_nan=False)
    beta: float = Field(default=0.3, gt=0.0, allow_inf_nan=False)
    gamma: float = Field(default=0.9, gt=0.0, allow_inf_nan=False)
    delta: float = Field(default=3.7, gt=0.0, allow_inf_nan=False)
    eta: float = Field(default=0.2, gt=0.0, allow_inf_nan=False)
    u_min: float = Field(default=0.05, gt=0.0, lt=1.0, allow_inf_nan=False)
    kappa: float = Field(default=0.01, gt=0.0, allow_inf_nan=False)


def _growth(u: FloatArray | float, params: ModelParams) -> FloatArray | float:
    return (1.0 - u) * (u - params.u_min) / (u + params.kappa)


def growth_rate(u: float, params: ModelParams) -> float:
    """
    The growth law w(u) = (1 - u)(u - u_min)/(u + kappa).

    Args:
        u: Virus density.
        params: Model parameters.

    Returns:
        The per-capita growth rate.

    Raises:
        PoleInput: If u <= -kappa.

    Example:
        >>> growth_rate(0.0, ModelParams(u_min=0.05, kappa=0.01))
        -5.0
        >>> growth_rate(1.0, ModelParams())
        0.0
    """
    if u <= -params.kappa:
        raise PoleInput(
            f"The growth law has a pole at u = {-params.kappa}; got u = {u}.",
            "growth law",
        )

    return float(_growth(u, params))


def growth_rate_min(params: ModelParams) -> float:
    """The minimum of w on [0, 1], attained at u = 0."""
    return -params.u_min / params.kappa


def growth_rate_bound(params: ModelParams) -> float:
    """An upper bound for |w(u)| on [0, 1]; w stays below 1 there."""
    return max(params.u_min / params.kappa, 1.0)


def growth_field(u: ScalarField, params: ModelParams) -> ScalarField:
    if u.min() <= -params.kappa:
        raise PoleInput(
            f"The growth law has a pole at u = {-params.kappa}; field reaches "
            f"{u.min()}.",
            "growth law",
        )

    return u.with_values(np.asarray(_growth(u.values, params)))


def inflow_field(
    u: ScalarField, chi: ScalarField, params: ModelParams
) -> ScalarField:
    """
    The non-local inflow j[u] = delta U chi, with U the total virus amount.

    Its integral equals delta U because chi integrates to one.
    """
    total = quadrature(u)
    return chi.with_values(params.delta * total * chi.values)


def reaction_u(u: ScalarField, v: ScalarField, params: ModelParams) -> ScalarField:
    """Pointwise u w(u) - gamma u v."""
    w = growth_field(u, params).values
    return u.with_values(u.values * w - params.gamma * u.values * v.values)


def reaction_v(
    u: ScalarField, v: ScalarField, chi: ScalarField, params: ModelParams
) -> ScalarField:
    """Pointwise j[u] - eta (1 - u) v."""
    inflow = inflow_field(u, chi, params).values
    return v.with_values(inflow - params.eta * (1.0 - u.values) * v.values)
