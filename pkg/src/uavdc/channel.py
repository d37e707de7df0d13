"""Air-to-ground link math: line of sight, path loss, jammer cones, SINR, rates.

Distances are metres, powers watts, bandwidths Hz. Path loss is a dB slope
against log10 distance plus optional shadowing; linear channel gain is
10^(-loss/10). Most functions broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import PhysicsParams


def is_los(cell_a, cell_b, comm_blocked: np.ndarray) -> bool:
    """True when the straight segment between the two cell centers misses every
    comm-blocking cell.

    Geometry is 2D in cell units. A link is blocked when the segment, endpoints
    included, touches the closed unit square of any blocked cell, so a node or
    UAV sitting on a blocked cell never has line of sight.
    """

    bx, by = np.nonzero(comm_blocked)
    if bx.size == 0:
        return True
    p0 = np.array([cell_a[0] + 0.5, cell_a[1] + 0.5])
    p1 = np.array([cell_b[0] + 0.5, cell_b[1] + 0.5])
    lo = np.stack([bx, by], axis=1).astype(float)
    return not np.any(_segment_hits_boxes(p0, p1, lo, lo + 1.0))


def _segment_hits_boxes(p0, p1, lo, hi) -> np.ndarray:
    """Closed-interval slab test of one segment against (N, 2) axis boxes."""

    d = p1 - p0
    t0 = np.zeros(lo.shape[0])
    t1 = np.ones(lo.shape[0])
    ok = np.ones(lo.shape[0], dtype=bool)
    for ax in range(2):
        if d[ax] == 0.0:
            ok &= (p0[ax] >= lo[:, ax]) & (p0[ax] <= hi[:, ax])
        else:
            ta = (lo[:, ax] - p0[ax]) / d[ax]
            tb = (hi[:, ax] - p0[ax]) / d[ax]
            t_near = np.minimum(ta, tb)
            t_far = np.maximum(ta, tb)
            t0 = np.maximum(t0, t_near)
            t1 = np.minimum(t1, t_far)
    return ok & (t0 <= t1)


def segment_box_distance(p0, p1, lo, hi, samples: int = 4096) -> float:
    """Minimum distance between a 2D segment and one axis box, by dense golden
    search over the segment. Exact enough to classify boundary touches."""

    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = np.linspace(0.0, 1.0, samples)
    pts = p0[None, :] + t[:, None] * (p1 - p0)[None, :]
    dx = np.maximum(np.maximum(lo[0] - pts[:, 0], pts[:, 0] - hi[0]), 0.0)
    dy = np.maximum(np.maximum(lo[1] - pts[:, 1], pts[:, 1] - hi[1]), 0.0)
    return float(np.min(np.hypot(dx, dy)))


def path_loss_db(phys: PhysicsParams, dist_m, los, shadow_db=0.0):
    """Large-scale loss in dB: slope * log10(d) + shadowing."""

    alpha = np.where(los, phys.alpha_los_db, phys.alpha_nlos_db)
    return alpha * np.log10(dist_m) + shadow_db


def sample_shadow(phys: PhysicsParams, los, rng: np.random.Generator, enabled: bool = True):
    """Zero-mean normal shadowing draw in dB; exactly 0 when fading is disabled."""

    if not enabled:
        return np.zeros(np.shape(los)) if np.ndim(los) else 0.0
    sigma = np.sqrt(np.where(los, phys.shadow_var_los_db2, phys.shadow_var_nlos_db2))
    draw = rng.normal(0.0, sigma)
    return draw if np.ndim(los) else float(draw)


def gain_from_loss(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0) if np.ndim(loss_db) \
        else 10.0 ** (-loss_db / 10.0)


def beam_tan_half(beam_rad: float) -> float:
    # half-angle identity keeps tan(45 deg) == 1 exact in floats
    return math.sin(beam_rad) / (1.0 + math.cos(beam_rad))


def cone_radius_m(beam_rad: float, altitude_m: float) -> float:
    """Ground radius of the jamming cone."""

    return altitude_m * beam_tan_half(beam_rad)


def jammer_gain(beam_rad: float, horiz_dist_m: float, altitude_m: float, iso_gain: float = 1.0) -> float:
    """Main-lobe antenna gain toward the UAV, 0 outside the ground cone.

    Inside the cone the gain is 4 * iso_gain / tan^2(beam/2), independent of
    the horizontal offset; the boundary itself counts as inside.
    """

    th = beam_tan_half(beam_rad)
    if horiz_dist_m <= altitude_m * th:
        return 4.0 * iso_gain / (th * th)
    return 0.0


def interference_w(jammer_terms) -> float:
    """Total received jamming power, from per-jammer received terms."""

    return float(np.sum(jammer_terms))


@dataclass
class SinrInputs:
    tx_power_w: float
    bw_hz: float
    noise_psd_w_per_hz: float
    interference_w: float = 0.0


@dataclass
class RobustParams:
    """Worst-case channel knowledge model.

    csi_delta_db bounds the uniform gain estimation error in dB; inf_mean is
    the mean of the exponential residual-noise coefficient.
    """

    csi_delta_db: float = 0.0
    inf_mean: float = 0.0


def sinr(gain, inputs: SinrInputs):
    """Signal-to-interference-plus-noise ratio of the desired link."""

    return inputs.tx_power_w * gain / (inputs.bw_hz * inputs.noise_psd_w_per_hz + inputs.interference_w)


def robust_sinr_core(gain, tx_power_w, bw_hz, noise_psd_w_per_hz, jammer_terms,
                     eps_desired_db, eps_jammer_db, noise_coeff):
    """Pessimistic SINR with the perturbations already drawn.

    The desired gain is shrunk by 10^(-eps/10), each jammer term inflated by
    10^(+eps/10) and the thermal noise scaled by (1 + a).
    """

    sig = tx_power_w * gain * 10.0 ** (-np.asarray(eps_desired_db) / 10.0)
    jam = np.sum(np.asarray(jammer_terms, dtype=float) * 10.0 ** (np.asarray(eps_jammer_db, dtype=float) / 10.0))
    return sig / ((1.0 + noise_coeff) * bw_hz * noise_psd_w_per_hz + jam)


def robust_sinr(gain, inputs: SinrInputs, jammer_terms, rob: RobustParams, rng: np.random.Generator):
    """Draw one set of robustness perturbations and evaluate the pessimistic SINR.

    With csi_delta_db == 0 and inf_mean == 0 this reduces exactly to sinr().
    """

    n_jam = len(jammer_terms)
    eps_i = rng.uniform(0.0, rob.csi_delta_db)
    eps_j = rng.uniform(0.0, rob.csi_delta_db, size=n_jam)
    a = rng.exponential(rob.inf_mean) if rob.inf_mean > 0 else 0.0
    return robust_sinr_core(gain, inputs.tx_power_w, inputs.bw_hz, inputs.noise_psd_w_per_hz,
                            jammer_terms, eps_i, eps_j, a)


def rate_bps(bw_hz, sinr_value):
    """Shannon rate of one link; zero bandwidth carries zero rate."""

    if np.ndim(bw_hz) or np.ndim(sinr_value):
        bw = np.asarray(bw_hz, dtype=float)
        return np.where(bw > 0.0, bw * np.log2(1.0 + np.asarray(sinr_value, dtype=float)), 0.0)
    if bw_hz <= 0.0:
        return 0.0
    return bw_hz * math.log2(1.0 + sinr_value)
