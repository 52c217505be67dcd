"""ULA array responses, DFT codebooks, beam patterns and main-lobe masks."""

from __future__ import annotations

import dataclasses
import hashlib
import warnings
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import DataValidationError, GridSpec

TWO_PI = 2.0 * np.pi


@dataclasses.dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array: ``n_t`` antennas spaced ``spacing_ratio`` wavelengths."""

    n_t: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if self.n_t < 1:
            raise DataValidationError("array needs at least one antenna")
        if not self.spacing_ratio > 0:
            raise DataValidationError("antenna spacing ratio must be positive")


def array_response(phi, cfg: ArrayConfig) -> np.ndarray:
    """Unit-norm steering vector(s) a(phi); phi may be an array (..., n_t)."""
    phi = np.asarray(phi, dtype=float)
    n = np.arange(cfg.n_t)
    phase = -1j * TWO_PI * cfg.spacing_ratio * np.cos(phi)[..., None] * n
    return np.exp(phase) / np.sqrt(cfg.n_t)


def beam_pattern(phi, w, cfg: ArrayConfig):
    """Beamforming gain |a*(phi) w|^2 at angle(s) phi."""
    w = np.asarray(w)
    if w.shape != (cfg.n_t,):
        raise DataValidationError(f"beam length {w.shape} does not match n_t={cfg.n_t}")
    a = array_response(phi, cfg)
    out = np.abs(np.conj(a) @ w) ** 2
    return out if out.ndim else float(out)


@dataclasses.dataclass
class Codebook:
    """A set of unit-norm beams with their pointing angles and 3 dB widths."""

    array: ArrayConfig
    beams: np.ndarray        # (n_beams, n_t) complex
    beam_angles: np.ndarray  # (n_beams,) radians, ascending
    beamwidths: np.ndarray   # (n_beams,) radians

    def __post_init__(self):
        n = len(self.beams)
        if not (len(self.beam_angles) == len(self.beamwidths) == n):
            raise DataValidationError("codebook field lengths disagree")
        norms = np.abs(np.einsum("ij,ij->i", np.conj(self.beams), self.beams))
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise DataValidationError("beams must have unit norm")
        if np.any(np.diff(self.beam_angles) < 0):
            raise DataValidationError("beam angles must be sorted ascending")

    def __len__(self) -> int:
        return len(self.beams)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.beams).tobytes())
        h.update(np.ascontiguousarray(self.beam_angles).tobytes())
        return h.hexdigest()[:16]

    def export_csv(self, path) -> None:
        """One row per (beam, antenna-weight) for offline inspection."""
        lines = ["beam,theta,width," + ",".join(
            f"re{n},im{n}" for n in range(self.array.n_t)) + "\n"]
        for j in range(len(self)):
            parts = [str(j), f"{self.beam_angles[j]:.17g}", f"{self.beamwidths[j]:.17g}"]
            for wn in self.beams[j]:
                parts += [f"{wn.real:.17g}", f"{wn.imag:.17g}"]
            lines.append(",".join(parts) + "\n")
        Path(path).write_text("".join(lines))


def _refine_peak(w, cfg: ArrayConfig, phi0: float, half_window: float = 2e-4) -> float:
    lo = max(phi0 - half_window, 0.0)
    hi = min(phi0 + half_window, np.pi)
    res = minimize_scalar(
        lambda p: -beam_pattern(p, w, cfg),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def beam_peak_angle(w, cfg: ArrayConfig, grid_resolution: float = 1e-4) -> float:
    """Pointing angle of a beam: dense-grid argmax over (0, pi), then refined."""
    phis = np.arange(0.0, np.pi + grid_resolution, grid_resolution)
    gains = beam_pattern(phis, w, cfg)
    return _refine_peak(w, cfg, float(phis[int(np.argmax(gains))]))


def beamwidth_3db(w, theta_j: float, cfg: ArrayConfig,
                  scan_step: float = 1e-4) -> float:
    """Width of the contiguous interval around theta_j with gain >= peak/2."""
    peak = beam_pattern(theta_j, w, cfg)
    if peak <= 0:
        raise DataValidationError("beam has no gain at its own pointing angle")
    half = peak / 2.0

    def _crossing(direction: int):
        phi = theta_j
        while 0.0 < phi < np.pi:
            nxt = phi + direction * scan_step
            nxt = min(max(nxt, 0.0), np.pi)
            if beam_pattern(nxt, w, cfg) < half:
                lo, hi = (phi, nxt) if direction > 0 else (nxt, phi)
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if (beam_pattern(mid, w, cfg) >= half) == (direction > 0):
                        lo = mid
                    else:
                        hi = mid
                return 0.5 * (lo + hi)
            if nxt in (0.0, np.pi):
                return None
            phi = nxt
        return None

    left = _crossing(-1)
    right = _crossing(+1)
    if left is None and right is None:
        warnings.warn("no half-power crossing in (0, pi); falling back to full range")
        return float(np.pi)
    # lobes touching an endfire boundary are clamped at the domain edge
    if left is None:
        left = 0.0
    if right is None:
        right = np.pi
    return float(right - left)


def dft_codebook(cfg: ArrayConfig) -> Codebook:
    """DFT codebook: n_t orthonormal beams sorted by pointing angle."""
    n = cfg.n_t
    idx = np.arange(n)
    beams = np.exp(-1j * TWO_PI * np.outer(idx, idx) / n) / np.sqrt(n)
    angles = np.array([beam_peak_angle(beams[j], cfg) for j in range(n)])
    order = np.argsort(angles, kind="stable")
    beams = beams[order]
    angles = angles[order]
    widths = np.array([beamwidth_3db(beams[j], angles[j], cfg) for j in range(n)])
    return Codebook(cfg, beams, angles, widths)


# ---------------------------------------------------------------------------
# azimuth helpers and main-lobe masks
# ---------------------------------------------------------------------------


def azimuth(x, y):
    """Planar polar angle of point(s) x relative to reference y, in [0, 2*pi)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x[..., :2] - y[..., :2]
    return np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)


def wrap_angle(delta):
    """Wrap angle difference(s) to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(delta), TWO_PI)


def main_lobe_cells(p_t, beam: int, codebook: Codebook, grid: GridSpec) -> np.ndarray:
    """(m1, m2) boolean mask of cells inside the beam's 3 dB main lobe."""
    if not 0 <= beam < len(codebook):
        raise DataValidationError(f"beam index {beam} out of range")
    centers = grid.all_centers()
    phi = azimuth(centers, np.asarray(p_t)[:2])
    dev = np.abs(wrap_angle(phi - codebook.beam_angles[beam]))
    mask = dev <= codebook.beamwidths[beam] / 2.0
    return mask.reshape(grid.m1, grid.m2)
