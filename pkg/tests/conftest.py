import mpmath
import numpy as np
import pytest

from hetnet_alloc.assignment import assign_all_subchannels
from hetnet_alloc.power import PowerLimits, link_gains, link_state
from hetnet_alloc.scenario import (
    ChannelState,
    NetworkTopology,
    ScenarioConfig,
    generate_channels,
    generate_topology,
)


def make_instance(seed, n_cells=2, n_bs_per_cell=2, n_ues_per_cell=3, n_subchannels=3,
                  **cfg_kw):
    cfg = ScenarioConfig(n_cells=n_cells, n_bs_per_cell=n_bs_per_cell,
                         n_ues_per_cell=n_ues_per_cell, n_subchannels=n_subchannels, **cfg_kw)
    top = generate_topology(cfg, seed)
    ch = generate_channels(top, cfg, seed)
    limits = PowerLimits.from_topology(top, n_subchannels, cfg.spectral_mask_fraction)
    return cfg, top, ch, limits


def scheduled_links(seed, weights=None, **kw):
    cfg, top, ch, limits = make_instance(seed, **kw)
    w = np.ones(ch.n_ues) if weights is None else weights
    asg = assign_all_subchannels(limits.uniform(), ch, w)
    return ch, limits, asg, link_gains(asg, w, ch)


def handmade_channel(h, noise=1.0, n_cells=1):
    """ChannelState from an explicit complex tensor h[b, k, n, a]; positions are dummies."""
    h = np.asarray(h, dtype=complex)
    B, K = h.shape[:2]
    top = NetworkTopology(
        n_cells=n_cells, n_bs_per_cell=B // n_cells, isd=500.0,
        cell_centers=np.zeros((n_cells, 2)), bs_positions=np.zeros((B, 2)),
        bs_cell=np.repeat(np.arange(n_cells), B // n_cells),
        bs_is_macro=np.arange(B) % (B // n_cells) == 0, bs_power=np.ones(B),
        ue_positions=np.ones((K, 2)), ue_cell=np.zeros(K, dtype=int))
    large = np.mean(np.abs(h) ** 2, axis=(2, 3))
    return ChannelState(h=h, noise_power=noise, large_scale=large,
                        shadowing_db=np.zeros((B, K)), topology=top)


def gain_channel(gains, noise=1.0):
    """Single-antenna channel with prescribed power gains gains[b, k, n]."""
    g = np.asarray(gains, dtype=float)
    return handmade_channel(np.sqrt(g)[..., None], noise)


@pytest.fixture
def two_cell():
    return scheduled_links(3)


def mp_fd_gradients(p, links, digits=40):
    """Central differences of g and h in extended precision (step 1e-12 of the curvature scale)."""
    mpmath.mp.dps = digits
    B, N = p.shape
    gain = [[[mpmath.mpf(float(links.gain[b, c, n])) for n in range(N)] for c in range(B)]
            for b in range(B)]
    w = links.weight
    act = links.active
    noise = mpmath.mpf(links.noise)

    def parts(q):
        g = h = mpmath.mpf(0)
        for b in range(B):
            for n in range(N):
                if not act[b, n]:
                    continue
                interf = noise + sum(gain[b][c][n] * q[c][n] for c in range(B) if c != b)
                total = interf + gain[b][b][n] * q[b][n]
                g += w[b, n] * mpmath.log(total, 2)
                h += w[b, n] * mpmath.log(interf, 2)
        return g, h

    base = [[mpmath.mpf(float(p[c, n])) for n in range(N)] for c in range(B)]
    interference, total = link_state(p, links)
    out_g, out_h = np.zeros_like(p), np.zeros_like(p)
    for c in range(B):
        for n in range(N):
            hit = act[:, n] & (links.gain[:, c, n] > 0)
            if not hit.any():
                continue
            scale = float(np.min(total[hit, n] / links.gain[hit, c, n]))
            step = mpmath.mpf(scale) * mpmath.mpf("1e-12")
            up = [row[:] for row in base]
            dn = [row[:] for row in base]
            up[c][n] += step
            dn[c][n] -= step
            (gu, hu), (gd, hd) = parts(up), parts(dn)
            out_g[c, n] = float((gu - gd) / (2 * step))
            out_h[c, n] = float((hu - hd) / (2 * step))
    return out_g, out_h


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
