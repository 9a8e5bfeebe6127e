"""Power and area overhead calculator for the switched-capacitor countermeasure."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class OverheadParams:
    """Inputs to the overhead arithmetic, all strictly positive.

    The gate-capacitance default is back-solved so the switching term lands at
    50 uW for a 1.25 GHz switching rate at 1.2 V. The PRNG power is taken as a
    single input (two LFSRs plus decode logic). The three area terms default
    to a 0.03 mm^2 total.
    """

    switching_frequency: float = 1.25e9
    unit_capacitance: float = 20e-12
    max_droop: float = 0.1
    gate_capacitance_per_switch: float = 50e-6 / (1.25e9 * 1.2**2)
    v_dd: float = 1.2
    prng_power: float = 150e-6
    aes_power: float = 1.32e-3
    aes_area: float = 0.15
    cap_area: float = 0.02
    prng_area: float = 0.005
    switch_area: float = 0.005

    def __post_init__(self):
        for name in (
            "switching_frequency", "unit_capacitance",
            "gate_capacitance_per_switch", "v_dd", "prng_power", "aes_power",
            "aes_area", "cap_area", "prng_area", "switch_area",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_droop < 0:
            raise ValueError("max_droop must be >= 0")


@dataclass
class PowerBreakdown:
    charge_loss: float
    switching: float
    prng: float
    total: float
    ratio: float


@dataclass
class AreaBreakdown:
    total_added: float
    ratio: float


def power_overhead(p: OverheadParams) -> PowerBreakdown:
    """Charge-loss, switch-gate, and PRNG power added on top of the AES core.

    charge_loss = 0.5 * f * C * dV^2; switching = f * C_gate * V_DD^2;
    ratio compares (AES + overhead) against AES alone.
    """
    charge_loss = 0.5 * p.switching_frequency * p.unit_capacitance * p.max_droop**2
    switching = p.switching_frequency * p.gate_capacitance_per_switch * p.v_dd**2
    total = charge_loss + switching + p.prng_power
    return PowerBreakdown(
        charge_loss=charge_loss,
        switching=switching,
        prng=p.prng_power,
        total=total,
        ratio=(p.aes_power + total) / p.aes_power,
    )


def area_overhead(p: OverheadParams) -> AreaBreakdown:
    """Capacitor + PRNG + switch area added on top of the AES core."""
    total = p.cap_area + p.prng_area + p.switch_area
    return AreaBreakdown(total_added=total, ratio=(p.aes_area + total) / p.aes_area)
