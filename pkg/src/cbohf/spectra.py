"""Broadened spectra, Rabi-splitting metrics and detuning scans."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import cm_to_hartree
from .hessian import base_state, harmonic_analysis
from .molecule import CavityMode
from .scf import SCFSettings, prepare_integrals, resolve_basis, solve_stationary

log = logging.getLogger(__name__)

POLARITON_THRESHOLD = 0.05


@dataclass(frozen=True)
class Peak:
    frequency: float  # cm^-1
    intensity: float
    photon_weight: float = 0.0
    label: str = ""


@dataclass
class SpectrumPeakSet:
    peaks: list
    provenance: str = "harmonic"  # harmonic | anharmonic
    cavity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("harmonic", "anharmonic"):
            raise ValueError("provenance must be 'harmonic' or 'anharmonic'")
        for p in self.peaks:
            if p.intensity < 0:
                raise ValueError("peak intensities must be non-negative")
        self.peaks = sorted(self.peaks, key=lambda p: p.frequency)

    @classmethod
    def from_modes(cls, modes, cavity: CavityMode | None = None) -> "SpectrumPeakSet":
        rows = modes.peaks()
        peaks = [Peak(f, i, a) for f, i, a in rows if f > 0]
        return cls(peaks, "harmonic", _cavity_dict(cavity))

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([p.frequency for p in self.peaks])

    @property
    def intensities(self) -> np.ndarray:
        return np.array([p.intensity for p in self.peaks])

    @property
    def photon_weights(self) -> np.ndarray:
        return np.array([p.photon_weight for p in self.peaks])

    def scaled(self, factor: float) -> "SpectrumPeakSet":
        return SpectrumPeakSet([Peak(p.frequency, p.intensity * factor, p.photon_weight, p.label) for p in self.peaks],
                               self.provenance, dict(self.cavity))

    def shifted(self, delta: float) -> "SpectrumPeakSet":
        return SpectrumPeakSet([Peak(p.frequency + delta, p.intensity, p.photon_weight, p.label) for p in self.peaks],
                               self.provenance, dict(self.cavity))

    def __or__(self, other: "SpectrumPeakSet") -> "SpectrumPeakSet":
        return SpectrumPeakSet(self.peaks + other.peaks, self.provenance, dict(self.cavity))


def _cavity_dict(cavity):
    if cavity is None:
        return {}
    return {"omega": cavity.omega, "coupling": cavity.coupling, "polarization": list(cavity.polarization), "q": cavity.q}


def frequency_grid(start: float, stop: float, step: float = 0.5) -> np.ndarray:
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def broaden(peaks: SpectrumPeakSet, width: float = 10.0, grid=None, normalize: bool = False):
    """Sum of Lorentzians of full width ``width`` whose heights equal the
    peak intensities. Returns (frequencies, curve)."""
    if width <= 0:
        raise ValueError("broadening width must be positive")
    if grid is None:
        f = peaks.frequencies
        lo, hi = (0.0, 5000.0) if len(f) == 0 else (f.min() - 20 * width, f.max() + 20 * width)
        grid = frequency_grid(lo, hi, width / 20)
    grid = np.asarray(grid, dtype=float)
    curve = np.zeros_like(grid)
    if not peaks.peaks:
        warnings.warn("broadening an empty peak list", stacklevel=2)
        return grid, curve
    hw2 = (0.5 * width) ** 2
    for p in peaks.peaks:
        curve += p.intensity * hw2 / ((grid - p.frequency) ** 2 + hw2)
    if normalize and curve.max() > 0:
        curve = curve / curve.max()
    return grid, curve


@dataclass(frozen=True)
class RabiMetrics:
    nu_lp: float
    nu_up: float
    omega_c: float  # cm^-1
    bare_nu1: float
    photon_lp: float
    photon_up: float
    intensity_lp: float = 0.0
    intensity_up: float = 0.0

    found = True

    @property
    def rabi_splitting(self) -> float:
        return self.nu_up - self.nu_lp

    @property
    def asymmetry(self) -> float:
        return self.omega_c - 0.5 * (self.nu_lp + self.nu_up)

    @property
    def detuning(self) -> float:
        return self.omega_c - self.bare_nu1

    @property
    def splitting_minus_detuning(self) -> float:
        """Omega_R - |Delta|: zero for an uncoupled system at any detuning."""
        return self.rabi_splitting - abs(self.detuning)

    def as_dict(self) -> dict:
        return {
            "omega_c": self.omega_c,
            "bare_nu1": self.bare_nu1,
            "nu_lp": self.nu_lp,
            "nu_up": self.nu_up,
            "rabi_splitting": self.rabi_splitting,
            "asymmetry": self.asymmetry,
            "detuning": self.detuning,
            "splitting_minus_detuning": self.splitting_minus_detuning,
            "photon_lp": self.photon_lp,
            "photon_up": self.photon_up,
            "intensity_lp": self.intensity_lp,
            "intensity_up": self.intensity_up,
        }


@dataclass(frozen=True)
class NoPolaritonPair:
    reason: str
    omega_c: float = float("nan")
    bare_nu1: float = float("nan")

    found = False

    def as_dict(self) -> dict:
        return {"omega_c": self.omega_c, "bare_nu1": self.bare_nu1, "status": f"no polariton pair: {self.reason}"}


def rabi_analysis(peaks: SpectrumPeakSet, omega_c: float, bare_nu1: float,
                  threshold: float = POLARITON_THRESHOLD):
    """Identify LP/UP and compute Rabi metrics (all in cm^-1).

    LP/UP are the most intense peaks with |a_c|^2 > threshold below and above
    omega_c; if omega_c is not bracketed, the two most intense such peaks.
    """
    cand = [p for p in peaks.peaks if p.photon_weight > threshold and p.frequency > 0]
    if len(cand) < 2:
        return NoPolaritonPair(f"{len(cand)} peak(s) with |a_c|^2 > {threshold}", omega_c, bare_nu1)
    below = [p for p in cand if p.frequency < omega_c]
    above = [p for p in cand if p.frequency >= omega_c]
    key = lambda p: (p.intensity, p.photon_weight)  # noqa: E731
    if below and above:
        lp = max(below, key=key)
        up = max(above, key=key)
    else:
        lp, up = sorted(sorted(cand, key=key, reverse=True)[:2], key=lambda p: p.frequency)
    if up.frequency <= lp.frequency:
        return NoPolaritonPair("degenerate polariton candidates", omega_c, bare_nu1)
    return RabiMetrics(lp.frequency, up.frequency, omega_c, bare_nu1, lp.photon_weight, up.photon_weight,
                       lp.intensity, up.intensity)


def bare_fundamental(peaks: SpectrumPeakSet) -> float:
    """Frequency of the most intense molecular (|a_c|^2 < 0.5) peak."""
    mol = [p for p in peaks.peaks if p.photon_weight < 0.5]
    if not mol:
        raise ValueError("no molecular peaks")
    return max(mol, key=lambda p: p.intensity).frequency


def fit_r2(x, y, degree: int = 1, even: bool = False) -> tuple:
    """Least-squares polynomial fit in x (or in x^2 when ``even``); returns
    (coefficients, R^2)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    t = x**2 if even else x
    coef = np.polyfit(t, y, degree)
    resid = y - np.polyval(coef, t)
    ss = np.sum((y - y.mean()) ** 2)
    return coef, 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0


def detuning_scan(mol, basis, coupling: float, omegas_cm, polarization=(0.0, 0.0, 1.0), settings=None,
                  bare_nu1: float | None = None, step: float = 5e-3, jobs: int = 1):
    """One stationary SCF and FD Hessian per cavity frequency.

    Returns a list of row dicts with Rabi metrics and cavity energy terms; a
    failing row carries an ``error`` entry instead of stopping the scan.
    """
    if coupling <= 0:
        raise ValueError("detuning scan needs a positive coupling strength")
    settings = settings or SCFSettings()
    mb = resolve_basis(mol, basis)
    if bare_nu1 is None:
        ref = harmonic_analysis(base_state(mol, mb, CavityMode(1.0, 0.0, polarization), settings), step, jobs)
        bare_nu1 = bare_fundamental(SpectrumPeakSet.from_modes(ref.modes))
    ints = prepare_integrals(mol, mb)
    rows = []
    for w in omegas_cm:
        row = {"omega_c": float(w)}
        try:
            cav = CavityMode(cm_to_hartree(w), coupling, polarization)
            st = solve_stationary(mol, mb, cav, settings, ints)
            res = harmonic_analysis(st, step, jobs)
            metrics = rabi_analysis(SpectrumPeakSet.from_modes(res.modes, st.cavity), w, bare_nu1)
            row.update(metrics.as_dict())
            row.update({"e_lin": st.energy.e_lin, "e_dse": st.energy.e_dse, "e_dis": st.energy.e_dis,
                        "q_c": st.cavity.q, "total_energy": st.total_energy})
        except Exception as exc:  # annotate and continue
            log.warning("detuning row %.3f failed: %s", w, exc)
            row["error"] = str(exc)
        rows.append(row)
    return rows
