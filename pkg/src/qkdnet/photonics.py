"""Decoy-state BB84 link physics for one point-to-point QKD link.

Covers channel transmittance, asymptotic gains and QBERs of the signal and
decoy states, vacuum+weak-decoy bounds on the single-photon yield and error,
and the secure key rate. Every function here returns an asymptotic
expectation; statistical fluctuation is injected by the simulation engine,
never by this module. All values are immutable once constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum


class ParameterError(ValueError):
    """An argument violates a precondition of the physical model."""


class UndefinedQberError(ParameterError):
    """QBER requested for a link whose total gain is zero."""


class Environment(str, Enum):
    """Fiber environment class, which fixes the average loss coefficient."""

    INTERCITY = "intercity"
    METRO = "metro"
    PATCH = "patch"


# Average loss coefficients from OTDR surveys, dB/km. Intercity backbone
# fiber is clean; metro fiber accumulates splices and connectors. Short
# patch runs behave like metro fiber.
LOSS_COEFF_DB_PER_KM = {
    Environment.INTERCITY: 0.21,
    Environment.METRO: 0.46,
    Environment.PATCH: 0.46,
}

# Field deployment penalties relative to the laboratory: leakage photons
# from parallel high-power fibers in the same cable raise the background
# yield, and sustained vibration around the racks raises the misalignment
# error. Both are additive.
FIELD_BACKGROUND_YIELD = 1e-6
FIELD_E_DET_INCREMENT = 0.001


@dataclass(frozen=True)
class FiberChannel:
    """A physical fiber span between two sites.

    loss_db is the end-to-end optical loss and is non-positive by
    convention (0 dB = lossless).
    """

    id: str
    length_km: float
    loss_db: float
    environment: Environment = Environment.METRO

    def __post_init__(self):
        if self.loss_db > 0:
            raise ParameterError(f"channel {self.id}: loss_db must be <= 0, got {self.loss_db}")
        if self.length_km < 0:
            raise ParameterError(f"channel {self.id}: length_km must be >= 0, got {self.length_km}")

    @property
    def transmittance(self) -> float:
        return transmittance(self.loss_db)


@dataclass(frozen=True)
class SourceConfig:
    """Pulsed weak-coherent decoy-state source.

    mix is the (signal, decoy, vacuum) pulse ratio; vacuum pulses carry
    zero intensity by definition.
    """

    pulse_rate_hz: float = 2.0e7
    mu_signal: float = 0.65      # mean photons per signal pulse
    nu_decoy: float = 0.1        # mean photons per decoy pulse
    mix: tuple[int, int, int] = (14, 1, 1)
    quantum_wavelength_nm: float = 1550.92
    sync_wavelength_nm: float = 1549.32
    pulse_width_ps: float = 600.0

    def __post_init__(self):
        if not (0 < self.nu_decoy < self.mu_signal < 1):
            raise ParameterError(
                f"intensities must satisfy 0 < nu < mu < 1, got nu={self.nu_decoy}, mu={self.mu_signal}"
            )
        if len(self.mix) != 3 or any(m <= 0 for m in self.mix):
            raise ParameterError(f"mix must be three positive integers, got {self.mix}")
        if self.pulse_rate_hz <= 0:
            raise ParameterError("pulse_rate_hz must be positive")

    @property
    def signal_fraction(self) -> float:
        return self.mix[0] / sum(self.mix)

    @property
    def decoy_fraction(self) -> float:
        return self.mix[1] / sum(self.mix)

    @property
    def vacuum_fraction(self) -> float:
        return self.mix[2] / sum(self.mix)


@dataclass(frozen=True)
class DetectorConfig:
    """Single-photon detection stage of one receiver.

    y0_dark and y_background are per-gate yields; their sum is the vacuum
    yield Y0 of the link. With a single gated APD only half of the
    measurement outcomes can register, so the duty factor halves the
    overall detection efficiency.
    """

    eta_det: float = 0.1         # detection efficiency, (0, 1]
    y0_dark: float = 5e-6        # dark-count yield per gate
    y_background: float = 0.0    # channel-leakage yield per gate
    e_det: float = 0.01          # misalignment error fraction
    e0: float = 0.5              # error fraction of noise clicks
    apd_count: int = 2

    def __post_init__(self):
        if not (0 < self.eta_det <= 1):
            raise ParameterError(f"eta_det must be in (0, 1], got {self.eta_det}")
        if self.y0_dark < 0 or self.y_background < 0:
            raise ParameterError("yields must be non-negative")
        if not (0 <= self.e_det < 0.5):
            raise ParameterError(f"e_det must be in [0, 0.5), got {self.e_det}")
        if self.apd_count not in (1, 2):
            raise ParameterError(f"apd_count must be 1 or 2, got {self.apd_count}")

    @property
    def y0(self) -> float:
        """Total vacuum yield (dark counts plus background leakage)."""
        return self.y0_dark + self.y_background

    @property
    def duty_factor(self) -> float:
        return 1.0 if self.apd_count == 2 else 0.5


@dataclass(frozen=True)
class SecurityParams:
    """Post-processing constants of the asymptotic key-rate formula."""

    q_sifting: float = 0.5
    f_ec: float = 1.16           # error-correction inefficiency, >= 1
    qber_abort_threshold: float = 0.11

    def __post_init__(self):
        if self.f_ec < 1:
            raise ParameterError(f"f_ec must be >= 1, got {self.f_ec}")
        if not (0 < self.q_sifting <= 1):
            raise ParameterError(f"q_sifting must be in (0, 1], got {self.q_sifting}")


DEFAULT_SECURITY = SecurityParams()


@dataclass(frozen=True)
class LinkBudget:
    """Observable gains and QBERs of one link: the inputs of the decoy
    analysis. q_mu/q_nu are click probabilities per signal/decoy pulse."""

    q_mu: float
    q_nu: float
    e_mu: float
    e_nu: float
    y0: float

    def __post_init__(self):
        if not (0 <= self.e_mu <= 0.5 and 0 <= self.e_nu <= 0.5):
            raise ParameterError(f"QBERs must lie in [0, 0.5], got e_mu={self.e_mu}, e_nu={self.e_nu}")
        if not (0 < self.q_nu <= self.q_mu <= 1):
            raise ParameterError(f"gains must satisfy 0 < q_nu <= q_mu <= 1, got {self.q_nu}, {self.q_mu}")
        if self.y0 > self.q_nu:
            raise ParameterError(f"vacuum yield {self.y0} exceeds decoy gain {self.q_nu}")


@dataclass(frozen=True)
class DecoyBounds:
    """Single-photon bounds: y1_lower <= true Y1, e1_upper >= true e1.
    clamped marks that an intermediate value fell outside [0, 1] and was
    clipped, i.e. the observed budget sits at the edge of validity."""

    y1_lower: float
    e1_upper: float
    clamped: bool = False


def transmittance(loss_db: float) -> float:
    """Convert a non-positive dB loss to a linear power transmittance."""
    if loss_db > 0:
        raise ParameterError(f"loss_db must be <= 0, got {loss_db}")
    return 10.0 ** (loss_db / 10.0)


def channel_from_length(length_km: float, environment: Environment, id: str = "synthetic") -> FiberChannel:
    """Synthesize a channel from its length using the environment's average
    loss coefficient. Measured losses from a link catalog take precedence
    over this estimate wherever both exist."""
    if length_km < 0:
        raise ParameterError(f"length_km must be >= 0, got {length_km}")
    environment = Environment(environment)
    loss = -LOSS_COEFF_DB_PER_KM[environment] * length_km
    return FiberChannel(id=id, length_km=length_km, loss_db=loss, environment=environment)


def duty_factor(apd_count: int) -> float:
    if apd_count not in (1, 2):
        raise ParameterError(f"apd_count must be 1 or 2, got {apd_count}")
    return 1.0 if apd_count == 2 else 0.5


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy H2(p) in bits, with H2(0) = H2(1) = 0."""
    if not (0 <= p <= 1):
        raise ParameterError(f"p must be in [0, 1], got {p}")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def expected_gain(mu: float, eta: float, y0: float) -> float:
    """Click probability per pulse of intensity mu through overall
    efficiency eta with vacuum yield y0: Q = y0 + 1 - exp(-eta*mu)."""
    if mu < 0 or y0 < 0 or not (0 <= eta <= 1):
        raise ParameterError(f"invalid gain arguments mu={mu}, eta={eta}, y0={y0}")
    return y0 - math.expm1(-eta * mu)


def expected_qber(mu: float, eta: float, y0: float, e_det: float, e0: float = 0.5) -> float:
    """Error fraction of clicks: noise clicks err at e0, photon clicks at
    the misalignment fraction e_det."""
    gain = expected_gain(mu, eta, y0)
    if gain == 0:
        raise UndefinedQberError("gain is zero; QBER undefined")
    return (e0 * y0 + e_det * -math.expm1(-eta * mu)) / gain


def overall_efficiency(loss_db: float, detector: DetectorConfig) -> float:
    """Channel transmittance times detection efficiency times APD duty."""
    return transmittance(loss_db) * detector.eta_det * detector.duty_factor


def link_budget(loss_db: float, source: SourceConfig, detector: DetectorConfig) -> LinkBudget:
    """Asymptotic observables of a link with the given end-to-end loss."""
    eta = overall_efficiency(loss_db, detector)
    y0 = detector.y0
    return LinkBudget(
        q_mu=expected_gain(source.mu_signal, eta, y0),
        q_nu=expected_gain(source.nu_decoy, eta, y0),
        e_mu=expected_qber(source.mu_signal, eta, y0, detector.e_det, detector.e0),
        e_nu=expected_qber(source.nu_decoy, eta, y0, detector.e_det, detector.e0),
        y0=y0,
    )


def single_photon_truth(eta: float, y0: float, e_det: float, e0: float = 0.5) -> tuple[float, float]:
    """Exact single-photon yield and error of the modeled channel, used as
    the oracle against which the decoy bounds must be conservative."""
    y1 = y0 + eta - y0 * eta
    e1 = (e0 * y0 + e_det * eta) / y1 if y1 > 0 else e0
    return y1, e1


def decoy_bounds(budget: LinkBudget, mu: float, nu: float, e0: float = 0.5) -> DecoyBounds:
    """Vacuum+weak-decoy bounds on the single-photon yield and error.

    Y1 >= mu/(mu*nu - nu^2) * (Q_nu e^nu - Q_mu e^mu nu^2/mu^2
          - (mu^2 - nu^2)/mu^2 * Y0)
    e1 <= (E_nu Q_nu e^nu - e0 Y0) / (Y1_lower * nu)

    Both results are clamped to [0, 1]; the clamped flag is set when the
    raw value fell outside.
    """
    if not mu > nu > 0:
        raise ParameterError(f"decoy analysis needs mu > nu > 0, got mu={mu}, nu={nu}")
    clamped = False
    y1 = (mu / (mu * nu - nu * nu)) * (
        budget.q_nu * math.exp(nu)
        - budget.q_mu * math.exp(mu) * nu * nu / (mu * mu)
        - (mu * mu - nu * nu) / (mu * mu) * budget.y0
    )
    if y1 < 0:
        y1, clamped = 0.0, True
    elif y1 > 1:
        y1, clamped = 1.0, True

    if y1 > 0:
        e1 = (budget.e_nu * budget.q_nu * math.exp(nu) - e0 * budget.y0) / (y1 * nu)
        if e1 < 0:
            e1, clamped = 0.0, True
        elif e1 > 1:
            e1, clamped = 1.0, True
    else:
        # No single-photon contribution can be certified; pessimal error.
        e1, clamped = 1.0, True
    return DecoyBounds(y1_lower=y1, e1_upper=e1, clamped=clamped)


def rate_from_budget(budget: LinkBudget, source: SourceConfig,
                     security: SecurityParams = DEFAULT_SECURITY, e0: float = 0.5) -> float:
    """Secure key rate in bits/second implied by an observed link budget.

    Only signal pulses bear key, so the pulse rate is scaled by the signal
    fraction of the mix. Returns 0 above the QBER abort threshold and never
    goes negative.
    """
    if budget.e_mu >= security.qber_abort_threshold:
        return 0.0
    bounds = decoy_bounds(budget, source.mu_signal, source.nu_decoy, e0=e0)
    q1_lower = bounds.y1_lower * source.mu_signal * math.exp(-source.mu_signal)
    per_pulse = (
        -budget.q_mu * security.f_ec * binary_entropy(budget.e_mu)
        + q1_lower * (1.0 - binary_entropy(bounds.e1_upper))
    )
    per_pulse = max(0.0, per_pulse)
    return source.pulse_rate_hz * source.signal_fraction * security.q_sifting * per_pulse


def secure_key_rate(channel: FiberChannel, source: SourceConfig, detector: DetectorConfig,
                    security: SecurityParams = DEFAULT_SECURITY) -> float:
    """Secure key rate in bits/second of one link, end to end."""
    budget = link_budget(channel.loss_db, source, detector)
    return rate_from_budget(budget, source, security, e0=detector.e0)


def in_field_conditions(detector: DetectorConfig,
                        background_yield: float = FIELD_BACKGROUND_YIELD,
                        e_det_increment: float = FIELD_E_DET_INCREMENT) -> DetectorConfig:
    """Detector parameters as seen in the field rather than the lab."""
    return replace(
        detector,
        y_background=detector.y_background + background_yield,
        e_det=detector.e_det + e_det_increment,
    )
