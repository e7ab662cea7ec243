"""Decoy-state BB84 key generation capability of a single fiber link.

The channel observables are produced by the usual asymptotic fiber model
(Poisson source, threshold detector, background clicks, misalignment) and the
single-photon quantities are bounded with the weak+vacuum two-decoy method.
An optional Chernoff-style relaxation accounts for finite pulse counts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING

import yaml

if TYPE_CHECKING:
    from qkdnet.model import Edge


class DomainError(ValueError):
    pass


class EstimateDegenerate(ArithmeticError):
    """Decoy analysis produced a non-positive single-photon yield."""


@dataclass(frozen=True)
class QkdSystemParams:
    f_req: float = 1e9
    q: float = 0.9
    alpha: float = 0.2
    eta_bob: float = 0.1
    e_det: float = 0.01
    mu: float = 0.4
    nu: float = 0.1
    phi: float = 0.0
    y0: float = 2.1e-5
    e0: float = 0.5
    f_ec: float = 1.15
    n_mu: float = 1.6e10
    n_nu: float = 2e9
    n_phi: float = 2e9
    varsigma: float = 5.73e-7
    finite_key: bool = True

    def __post_init__(self):
        if not 0 <= self.phi < self.nu < self.mu:
            raise DomainError(
                f"decoy intensities must satisfy 0 <= phi < nu < mu, got "
                f"phi={self.phi}, nu={self.nu}, mu={self.mu}")
        for name in ("f_req", "alpha", "y0"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if not 0 < self.q <= 1:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")
        if not 0 < self.eta_bob <= 1:
            raise DomainError(f"eta_bob must lie in (0, 1], got {self.eta_bob}")
        for name in ("e_det", "e0"):
            if not 0 <= getattr(self, name) <= 0.5:
                raise DomainError(f"{name} must lie in [0, 0.5]")
        if self.f_ec < 1:
            raise DomainError(f"f_ec must be >= 1, got {self.f_ec}")
        for name in ("n_mu", "n_nu", "n_phi"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if not 0 < self.varsigma < 1:
            raise DomainError(f"varsigma must lie in (0, 1), got {self.varsigma}")

    def replace(self, **changes) -> QkdSystemParams:
        return QkdSystemParams(**{**asdict(self), **changes})


REFERENCE_PARAMS = QkdSystemParams()


@dataclass(frozen=True)
class ChannelObservables:
    q_mu: float
    q_nu: float
    q_phi: float
    e_mu: float
    e_nu: float
    e_phi: float


@dataclass(frozen=True)
class DecoyEstimates:
    y1_lower: float
    q1_lower: float
    e1_upper: float


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy undefined for x={x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def transmittance(length_km: float,
                  params: QkdSystemParams = REFERENCE_PARAMS) -> float:
    """Overall detection efficiency: fiber loss times receiver transmittance."""
    if length_km < 0:
        raise DomainError(f"length must be non-negative, got {length_km}")
    return params.eta_bob * 10.0 ** (-params.alpha * length_km / 10.0)


def _gain_and_qber(eta: float, intensity: float, params: QkdSystemParams):
    signal = -math.expm1(-eta * intensity)
    gain = params.y0 + signal
    if gain == 0.0:
        return 0.0, 0.0
    return gain, (params.e0 * params.y0 + params.e_det * signal) / gain


def simulate_observables(length_km: float,
                         params: QkdSystemParams = REFERENCE_PARAMS) -> ChannelObservables:
    eta = transmittance(length_km, params)
    q_mu, e_mu = _gain_and_qber(eta, params.mu, params)
    q_nu, e_nu = _gain_and_qber(eta, params.nu, params)
    q_phi, e_phi = _gain_and_qber(eta, params.phi, params)
    return ChannelObservables(q_mu, q_nu, q_phi, e_mu, e_nu, e_phi)


def chernoff_deviation(pulses: float, p: float, varsigma: float) -> float:
    """Relative deviation sqrt(3 ln(1/varsigma) / (N p)) of an observed rate p."""
    if p <= 0.0:
        return 0.0
    return math.sqrt(3.0 * math.log(1.0 / varsigma) / (pulses * p))


def _interval(p: float, pulses: float, params: QkdSystemParams) -> tuple[float, float]:
    if not params.finite_key:
        return p, p
    delta = chernoff_deviation(pulses, p, params.varsigma)
    return max(p * (1.0 - delta), 0.0), p * (1.0 + delta)


def _y1_lower(q_mu: float, q_nu: float, q_phi: float, p: QkdSystemParams) -> float:
    mu, nu, phi = p.mu, p.nu, p.phi
    y0_lower = max((nu * q_phi * math.exp(phi) - phi * q_nu * math.exp(nu)) / (nu - phi), 0.0)
    scale = mu / (mu * nu - mu * phi - nu * nu + phi * phi)
    return scale * (q_nu * math.exp(nu) - q_phi * math.exp(phi)
                    - (nu * nu - phi * phi) / (mu * mu) * (q_mu * math.exp(mu) - y0_lower))


def decoy_estimate(obs: ChannelObservables,
                   params: QkdSystemParams = REFERENCE_PARAMS) -> DecoyEstimates:
    """Weak+vacuum decoy bounds on the single-photon yield, gain and error rate.

    With ``finite_key`` every observed rate is widened to a Chernoff interval
    and the bound is taken at the worst corner of the resulting box.

    Raises EstimateDegenerate when the yield bound is not positive.
    """
    p = params
    q_box = (_interval(obs.q_mu, p.n_mu, p), _interval(obs.q_nu, p.n_nu, p),
             _interval(obs.q_phi, p.n_phi, p))
    y1 = min(_y1_lower(qm, qn, qp, p) for qm, qn, qp in itertools.product(*q_box))
    if not y1 > 0.0:
        raise EstimateDegenerate(f"single-photon yield bound {y1:.3e} <= 0")

    err_nu = _interval(obs.e_nu * obs.q_nu, p.n_nu, p)[1]
    err_phi = _interval(obs.e_phi * obs.q_phi, p.n_phi, p)[0]
    e1 = (err_nu * math.exp(p.nu) - err_phi * math.exp(p.phi)) / ((p.nu - p.phi) * y1)
    e1 = min(max(e1, 0.0), 1.0)
    return DecoyEstimates(y1_lower=y1, q1_lower=y1 * p.mu * math.exp(-p.mu), e1_upper=e1)


@lru_cache(maxsize=4096)
def key_rate(length_km: float, params: QkdSystemParams = REFERENCE_PARAMS) -> float:
    """Secret key rate in bits/second of one QKD system over ``length_km`` of fiber."""
    obs = simulate_observables(length_km, params)
    try:
        est = decoy_estimate(obs, params)
    except EstimateDegenerate:
        return 0.0
    if est.e1_upper >= 0.5:
        return 0.0

    q_mu, e_mu = obs.q_mu, obs.e_mu
    if params.finite_key:
        q_mu = _interval(obs.q_mu, params.n_mu, params)[1]
        e_mu = min(_interval(obs.e_mu * obs.q_mu, params.n_mu, params)[1] / obs.q_mu, 0.5)
    r_low = (-params.q * q_mu * params.f_ec * binary_entropy(e_mu)
             + params.q * est.q1_lower * (1.0 - binary_entropy(est.e1_upper)))
    return max(params.f_req * r_low, 0.0)


def edge_key_capability(edge: Edge,
                        params: QkdSystemParams = REFERENCE_PARAMS) -> float:
    if edge.classical_capacity_bps == 0:
        return 0.0
    if edge.key_rate_bps is not None:
        single = edge.key_rate_bps
    else:
        single = key_rate(float(edge.length_km), params)
    return edge.system_count * single


_PARAM_FIELDS = {f.name for f in fields(QkdSystemParams)}


def params_from_mapping(data: dict, source: str = "<mapping>") -> QkdSystemParams:
    unknown = set(data) - _PARAM_FIELDS
    if unknown:
        raise DomainError(f"{source}: unknown parameter(s) {sorted(unknown)}")
    values = {}
    for name, value in data.items():
        if name == "finite_key":
            if not isinstance(value, bool):
                raise DomainError(f"{source}: finite_key must be true/false")
            values[name] = value
            continue
        try:
            values[name] = float(value)
        except (TypeError, ValueError):
            raise DomainError(f"{source}: parameter {name}={value!r} is not a number") from None
    try:
        return QkdSystemParams(**values)
    except DomainError as exc:
        raise DomainError(f"{source}: {exc}") from None


def load_params(path: str | Path) -> QkdSystemParams:
    from qkdnet.model import resolve_data_path

    path = resolve_data_path(path)
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise DomainError(f"{path}: not a valid key-value file: {exc}") from None
    if not isinstance(data, dict):
        raise DomainError(f"{path}: expected a key-value mapping")
    return params_from_mapping(data, str(path))
