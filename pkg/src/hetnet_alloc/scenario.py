"""Network topologies and channel realizations for multi-cell HetNets.

All quantities are converted to linear units (watts, linear gains) when a
topology or channel state is built; only the configuration carries dB/dBm.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScenarioConfig",
    "NetworkTopology",
    "ChannelState",
    "dbm_to_watts",
    "db_to_linear",
    "path_loss_db",
    "noise_power_per_subchannel",
    "hex_cell_centers",
    "generate_topology",
    "redraw_ues",
    "generate_channels",
    "rayleigh_fading",
]

_SQRT3 = math.sqrt(3.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation parameters for one network drop.

    Counts are per cell where the name says so. ``n_bs_per_cell`` includes
    the macro BS. Powers are in dBm, the noise PSD in dBm/Hz, distances in
    meters and shadowing/penetration in dB.
    """

    n_cells: int = 7
    n_bs_per_cell: int = 4
    n_ues_per_cell: int = 30
    n_subchannels: int = 50
    n_subcarriers_per_subchannel: int = 12
    subcarrier_bandwidth: float = 15e3
    isd: float = 500.0
    macro_power: float = 46.0
    micro_power: float = 30.0
    noise_psd: float = -174.0
    shadowing_sigma: float = 10.0
    penetration_loss: float = 20.0
    n_antennas: int = 1
    seed: int = 0
    tolerance: float = 0.01
    spectral_mask_fraction: float = 1.0
    min_distance: float = 10.0

    def __post_init__(self):
        for name in ("n_cells", "n_bs_per_cell", "n_ues_per_cell", "n_subchannels",
                     "n_subcarriers_per_subchannel", "n_antennas"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        if not self.isd > 0:
            raise ValueError(f"isd must be positive, got {self.isd!r}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if not self.subcarrier_bandwidth > 0:
            raise ValueError("subcarrier_bandwidth must be positive")
        if not 0.0 < self.spectral_mask_fraction <= 1.0:
            raise ValueError("spectral_mask_fraction must lie in (0, 1]")
        if self.min_distance < 0 or self.shadowing_sigma < 0:
            raise ValueError("min_distance and shadowing_sigma must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be an unsigned integer")

    @property
    def subchannel_bandwidth(self) -> float:
        return self.n_subcarriers_per_subchannel * self.subcarrier_bandwidth

    @property
    def n_bs(self) -> int:
        return self.n_cells * self.n_bs_per_cell

    @property
    def n_ues(self) -> int:
        return self.n_cells * self.n_ues_per_cell

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class NetworkTopology:
    """BS and UE placement. BS index ``b = cell * n_bs_per_cell + j`` with ``j = 0`` the macro."""

    n_cells: int
    n_bs_per_cell: int
    isd: float
    cell_centers: np.ndarray  # (n_cells, 2)
    bs_positions: np.ndarray  # (B, 2)
    bs_cell: np.ndarray  # (B,)
    bs_is_macro: np.ndarray  # (B,)
    bs_power: np.ndarray  # (B,) watts
    ue_positions: np.ndarray  # (K, 2)
    ue_cell: np.ndarray  # (K,)

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def n_ues(self) -> int:
        return len(self.ue_positions)

    def bs_index(self, cell: int, j: int) -> int:
        return cell * self.n_bs_per_cell + j

    def distances(self) -> np.ndarray:
        """BS-to-UE distances in meters, shape (B, K)."""
        diff = self.bs_positions[:, None, :] - self.ue_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


@dataclass(frozen=True)
class ChannelState:
    """Complex channel ``h[b, k, n, a]`` and the derived power gains.

    ``large_scale`` is the linear path-loss/shadowing/penetration gain per
    (BS, UE) pair; ``h`` already includes it.
    """

    h: np.ndarray  # (B, K, N, A) complex
    noise_power: float  # watts per subchannel
    large_scale: np.ndarray  # (B, K)
    shadowing_db: np.ndarray  # (B, K)
    topology: NetworkTopology
    gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.h.ndim != 4:
            raise ValueError("h must have shape (B, K, N, A)")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        object.__setattr__(self, "gain", np.abs(self.h) ** 2)

    @property
    def n_bs(self) -> int:
        return self.h.shape[0]

    @property
    def n_ues(self) -> int:
        return self.h.shape[1]

    @property
    def n_subchannels(self) -> int:
        return self.h.shape[2]

    @property
    def n_antennas(self) -> int:
        return self.h.shape[3]

    @property
    def scalar_gain(self) -> np.ndarray:
        """Single-antenna gain ``|h|^2`` on the first antenna, shape (B, K, N)."""
        return self.gain[..., 0]

    def with_h(self, h: np.ndarray) -> "ChannelState":
        return ChannelState(h=h, noise_power=self.noise_power, large_scale=self.large_scale,
                            shadowing_db=self.shadowing_db, topology=self.topology)

    def statistical_intercell(self) -> "ChannelState":
        """Copy where every inter-cell link is replaced by its large-scale mean gain."""
        topo = self.topology
        inter = topo.bs_cell[:, None] != topo.ue_cell[None, :]
        mean_h = np.sqrt(self.large_scale)[:, :, None, None] * np.ones(self.h.shape[2:])
        h = np.where(inter[:, :, None, None], mean_h.astype(complex), self.h)
        return self.with_h(h)


def path_loss_db(d_km):
    """Distance-dependent NLOS path loss in dB, ``d_km`` in kilometers."""
    d = np.asarray(d_km, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("path loss distance must be positive")
    out = 128.1 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def noise_power_per_subchannel(config: ScenarioConfig) -> float:
    bw = config.subchannel_bandwidth
    if not bw > 0:
        raise ValueError("subchannel bandwidth must be positive")
    return float(dbm_to_watts(config.noise_psd + 10.0 * math.log10(bw)))


def _hex_axial_coords(n: int) -> list[tuple[int, int]]:
    coords = [(0, 0)]
    directions = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)]
    ring = 1
    while len(coords) < n:
        q, r = -ring, ring  # start at direction 4 scaled by ring
        for dq, dr in directions:
            for _ in range(ring):
                coords.append((q, r))
                q, r = q + dq, r + dr
        ring += 1
    return coords[:n]


def hex_cell_centers(n_cells: int, isd: float) -> np.ndarray:
    """Cell centers on a hexagonal lattice filled ring by ring around the origin."""
    coords = np.array(_hex_axial_coords(n_cells), dtype=float)
    x = isd * (coords[:, 0] + coords[:, 1] / 2.0)
    y = isd * (_SQRT3 / 2.0) * coords[:, 1]
    return np.column_stack([x, y])


def _in_hexagon(xy: np.ndarray, inradius: float) -> np.ndarray:
    # pointy-top hexagon: vertical edges at |x| = inradius
    ax, ay = np.abs(xy[:, 0]), np.abs(xy[:, 1])
    return (ax <= inradius) & (ax / 2.0 + ay * _SQRT3 / 2.0 <= inradius)


def _sample_hexagon(rng: np.random.Generator, n: int, inradius: float) -> np.ndarray:
    circumradius = 2.0 * inradius / _SQRT3
    out = np.empty((0, 2))
    while len(out) < n:
        batch = rng.uniform([-inradius, -circumradius], [inradius, circumradius], size=(2 * n + 8, 2))
        out = np.vstack([out, batch[_in_hexagon(batch, inradius)]])
    return out[:n]


def _place_ues(rng, centers, bs_positions, bs_cell, n_per_cell, isd, min_distance):
    positions = []
    for c, center in enumerate(centers):
        own_bs = bs_positions[bs_cell == c]
        placed = np.empty((0, 2))
        while len(placed) < n_per_cell:
            cand = _sample_hexagon(rng, n_per_cell, isd / 2.0) + center
            d = np.hypot(*(cand[:, None, :] - own_bs[None, :, :]).transpose(2, 0, 1))
            placed = np.vstack([placed, cand[d.min(axis=1) >= min_distance]])
        positions.append(placed[:n_per_cell])
    return np.vstack(positions)


def _seed_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def generate_topology(config: ScenarioConfig, seed: int | None = None) -> NetworkTopology:
    """Hexagonal layout, macro in each cell center, micros and UEs uniform in the cell hexagon."""
    rng = _seed_rng(config.seed if seed is None else seed, 0)
    centers = hex_cell_centers(config.n_cells, config.isd)
    nm = config.n_bs_per_cell
    bs_pos, bs_cell, is_macro = [], [], []
    for c, center in enumerate(centers):
        micros = _sample_hexagon(rng, nm - 1, config.isd / 2.0) + center
        bs_pos.append(np.vstack([center[None, :], micros]))
        bs_cell.extend([c] * nm)
        is_macro.extend([True] + [False] * (nm - 1))
    bs_positions = np.vstack(bs_pos)
    bs_cell = np.array(bs_cell)
    is_macro = np.array(is_macro)
    power = np.where(is_macro, dbm_to_watts(config.macro_power), dbm_to_watts(config.micro_power))
    ue_positions = _place_ues(rng, centers, bs_positions, bs_cell, config.n_ues_per_cell,
                              config.isd, config.min_distance)
    ue_cell = np.repeat(np.arange(config.n_cells), config.n_ues_per_cell)
    return NetworkTopology(n_cells=config.n_cells, n_bs_per_cell=nm, isd=config.isd,
                           cell_centers=centers, bs_positions=bs_positions, bs_cell=bs_cell,
                           bs_is_macro=is_macro, bs_power=power, ue_positions=ue_positions,
                           ue_cell=ue_cell)


def redraw_ues(topology: NetworkTopology, config: ScenarioConfig, seed: int) -> NetworkTopology:
    """Same BSs, freshly drawn UE positions."""
    rng = _seed_rng(seed, 2)
    ue_positions = _place_ues(rng, topology.cell_centers, topology.bs_positions, topology.bs_cell,
                              config.n_ues_per_cell, config.isd, config.min_distance)
    return dataclasses.replace(topology, ue_positions=ue_positions)


def rayleigh_fading(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with unit mean-square."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def generate_channels(topology: NetworkTopology, config: ScenarioConfig, seed: int | None = None,
                      shadowing_db: np.ndarray | None = None) -> ChannelState:
    """Draw shadowing per (BS, UE) pair and Rayleigh fading per subchannel and antenna.

    Passing ``shadowing_db`` keeps the large-scale realization fixed and only
    redraws the fast fading.
    """
    rng = _seed_rng(config.seed if seed is None else seed, 1)
    d_km = np.maximum(topology.distances(), config.min_distance) / 1000.0
    pl = path_loss_db(d_km)
    if shadowing_db is None:
        shadowing_db = rng.normal(0.0, config.shadowing_sigma, size=pl.shape)
    large_scale = db_to_linear(-(pl + shadowing_db + config.penetration_loss))
    fading = rayleigh_fading(rng, (topology.n_bs, topology.n_ues, config.n_subchannels,
                                   config.n_antennas))
    h = np.sqrt(large_scale)[:, :, None, None] * fading
    return ChannelState(h=h, noise_power=noise_power_per_subchannel(config),
                        large_scale=large_scale, shadowing_db=shadowing_db, topology=topology)
