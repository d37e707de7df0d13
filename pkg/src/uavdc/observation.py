"""Observation pipeline: layered maps, UAV-centered view, frozen feature extractor.

The world is encoded as five stacked (Y, Y) layers:

    0 flight-blocked cells (no-fly and combined zones)
    1 comm-blocked cells (obstacles and combined zones)
    2 start/land cells
    3 remaining node data in Mb at node cells
    4 jamming-to-noise level log10(1 + P*G / (B*N0)) at jammer cells

The stack is recentered on the UAV into a (2Y-1, 2Y-1, 5) view whose padding
reads as flight-blocked, then squeezed through two fixed seeded linear
convolution stages along a pooled global path and a cropped local path. The
flat feature vector plus the normalized battery level is the agent observation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import channel
from .scenario import (ScenarioConfig, comm_blocked_mask, flight_blocked_mask,
                       start_land_mask)

N_LAYERS = 5
LAYER_NO_FLY, LAYER_COMM, LAYER_START, LAYER_NODE, LAYER_JAMMER = range(N_LAYERS)


def build_layers(cfg: ScenarioConfig, node_data_mb, jammer_draws) -> np.ndarray:
    """(Y, Y, 5) float map stack for the current state, indexed [x, y, layer]."""

    y = cfg.grid.y_cells
    layers = np.zeros((y, y, N_LAYERS))
    layers[:, :, LAYER_NO_FLY] = flight_blocked_mask(cfg)
    layers[:, :, LAYER_COMM] = comm_blocked_mask(cfg)
    layers[:, :, LAYER_START] = start_land_mask(cfg)
    for node, d_rem in zip(cfg.nodes, node_data_mb):
        layers[node.cell[0], node.cell[1], LAYER_NODE] += float(d_rem)
    noise_w = cfg.physics.total_bw_hz * cfg.physics.noise_psd_w_per_hz
    for draw in jammer_draws:
        th = channel.beam_tan_half(draw.beam_rad)
        main_gain = 4.0 * draw.iso_gain / (th * th)
        layers[draw.cell[0], draw.cell[1], LAYER_JAMMER] += draw.power_w * main_gain / noise_w
    jam = layers[:, :, LAYER_JAMMER]
    layers[:, :, LAYER_JAMMER] = np.log10(1.0 + jam)
    return layers


def centralize(layers: np.ndarray, uav_cell) -> np.ndarray:
    """Recenter the stack on the UAV: (2Y-1, 2Y-1, 5), UAV at the middle cell.

    Cells outside the world read as flight-blocked (layer 0 set to 1, rest 0).
    """

    y = layers.shape[0]
    side = 2 * y - 1
    out = np.zeros((side, side, layers.shape[2]))
    out[:, :, LAYER_NO_FLY] = 1.0
    ux, uy = uav_cell
    # world cell (x, y) lands at centered cell (x - ux + y_cells - 1, ...)
    x0 = y - 1 - ux
    y0 = y - 1 - uy
    out[x0:x0 + y, y0:y0 + y, :] = layers
    return out


@dataclass
class FeatureSpec:
    """Frozen random-projection geometry for the two-path extractor."""

    pool_cells: int = 7
    crop_cells: int = 9
    channels: tuple[int, int] = (8, 16)
    kernel: int = 3
    stride: int = 2
    seed: int = 927

    def spec_hash(self) -> str:
        blob = json.dumps([self.pool_cells, self.crop_cells, list(self.channels),
                           self.kernel, self.stride, self.seed])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _conv_out(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _pool_matrix(src: int, dst: int) -> np.ndarray:
    """Adaptive average pooling weights: rows sum to 1, segment bounds
    floor(i*src/dst) .. ceil((i+1)*src/dst)."""

    mat = np.zeros((dst, src))
    for i in range(dst):
        a = (i * src) // dst
        b = -((-(i + 1) * src) // dst)
        mat[i, a:b] = 1.0 / (b - a)
    return mat


class FeatureExtractor:
    """Two-path frozen extractor over a centered map stack.

    Global path: adaptive average pool to pool_cells, then two seeded linear
    conv stages. Local path: centered crop of crop_cells, same stage shape
    with its own seeded weights. Weights are fixed at construction and never
    trained; biases are zero so an all-zero map yields all-zero features.
    """

    def __init__(self, side: int, spec: FeatureSpec = FeatureSpec()):
        if side < 1:
            raise ValueError("centered map side must be >= 1")
        self.spec = spec
        self.side = side
        self.pool_eff = min(spec.pool_cells, side)
        self.crop_eff = min(spec.crop_cells, side)
        if (side - self.crop_eff) % 2 != 0:
            self.crop_eff -= 1
        rng = np.random.default_rng(spec.seed)
        self._pool = _pool_matrix(side, self.pool_eff)
        self._global = self._make_stages(self.pool_eff, rng)
        self._local = self._make_stages(self.crop_eff, rng)
        self.n_features = self._global["n_out"] + self._local["n_out"]

    def _make_stages(self, size: int, rng) -> dict:
        k, s = self.spec.kernel, self.spec.stride
        chans = (N_LAYERS,) + tuple(self.spec.channels)
        stages = []
        for ci in range(len(self.spec.channels)):
            out = _conv_out(size, k, s)
            if size < k or out < 1:
                raise ValueError(
                    f"feature stage input {size} too small for kernel {k}")
            fan_in = k * k * chans[ci]
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, chans[ci + 1]))
            idx = self._patch_indices(size, chans[ci], k, s)
            stages.append({"w": w, "idx": idx, "out": out, "cout": chans[ci + 1]})
            size = out
        return {"stages": stages, "n_out": size * size * chans[-1]}

    @staticmethod
    def _patch_indices(size, cin, kernel, stride):
        out = _conv_out(size, kernel, stride)
        base = np.arange(size * size * cin).reshape(size, size, cin)
        rows = []
        for i in range(out):
            for j in range(out):
                patch = base[i * stride:i * stride + kernel, j * stride:j * stride + kernel, :]
                rows.append(patch.ravel())
        return np.stack(rows, axis=0)

    def _run_stages(self, x: np.ndarray, path: dict) -> np.ndarray:
        for st in path["stages"]:
            flat = x.ravel()
            x = (flat[st["idx"]] @ st["w"]).reshape(st["out"], st["out"], st["cout"])
        return x.ravel()

    def extract(self, centered: np.ndarray) -> np.ndarray:
        if centered.shape[0] != self.side or centered.shape[1] != self.side:
            raise ValueError(f"expected a {self.side}x{self.side} centered map, got {centered.shape[:2]}")
        pooled = np.tensordot(self._pool, centered, axes=(1, 0))
        pooled = np.tensordot(pooled, self._pool, axes=(1, 1)).transpose(0, 2, 1)
        g = self._run_stages(pooled, self._global)
        off = (self.side - self.crop_eff) // 2
        crop = centered[off:off + self.crop_eff, off:off + self.crop_eff, :]
        loc = self._run_stages(crop, self._local)
        return np.concatenate([g, loc])


def assemble(features: np.ndarray, energy_frac: float) -> np.ndarray:
    """Final observation vector: extractor features plus battery in [0, 1]."""

    return np.concatenate([features, [min(max(energy_frac, 0.0), 1.0)]])


class ObservationBuilder:
    """Caches per-scenario geometry and produces observation vectors.

    reset() fixes the per-episode jammer layer; build() normalizes the node
    layer by per-cell capacity before extraction and appends battery level.
    """

    def __init__(self, cfg: ScenarioConfig, spec: FeatureSpec = FeatureSpec()):
        self.cfg = cfg
        self.spec = spec
        y = cfg.grid.y_cells
        self.extractor = FeatureExtractor(2 * y - 1, spec)
        self.obs_dim = self.extractor.n_features + 1
        self._cap = np.zeros((y, y))
        for node in cfg.nodes:
            self._cap[node.cell[0], node.cell[1]] += node.capacity_mb
        self._static = build_layers(cfg, [0.0] * len(cfg.nodes), [])
        self._jam_layer = self._static[:, :, LAYER_JAMMER]

    def reset(self, jammer_draws) -> None:
        full = build_layers(self.cfg, [0.0] * len(self.cfg.nodes), jammer_draws)
        self._jam_layer = full[:, :, LAYER_JAMMER]

    def layers(self, node_data_mb) -> np.ndarray:
        layers = self._static.copy()
        for node, d_rem in zip(self.cfg.nodes, node_data_mb):
            layers[node.cell[0], node.cell[1], LAYER_NODE] += float(d_rem)
        layers[:, :, LAYER_JAMMER] = self._jam_layer
        return layers

    def build(self, uav_cell, node_data_mb, energy: float) -> np.ndarray:
        layers = self.layers(node_data_mb)
        with np.errstate(invalid="ignore", divide="ignore"):
            norm = np.where(self._cap > 0, layers[:, :, LAYER_NODE] / self._cap, 0.0)
        layers[:, :, LAYER_NODE] = norm
        centered = centralize(layers, uav_cell)
        feats = self.extractor.extract(centered)
        return assemble(feats, energy / self.cfg.physics.energy_budget)

    def build_from(self, env) -> np.ndarray:
        st = env.state
        return self.build(st.uav_cell, st.node_data, st.energy)
