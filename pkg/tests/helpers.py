"""Small builders shared by several test modules."""

import numpy as np

from crossfield.channel import generate_channel
from crossfield.config import db_to_linear
from crossfield.geometry import build_array_geometry, sample_paths
from crossfield.sounding import PilotCodebooks, measure, normalize_tx_power


def desk_measurement(scenario, d, pitch_deg=0.0, seed=0, snr_db=6.0, model="SWM",
                     noiseless=False, n_paths=None):
    c = scenario.system if n_paths is None else scenario.system.replace(n_paths=n_paths)
    rng = np.random.default_rng(seed)
    paths = sample_paths(rng, d, c)
    ch = generate_channel(model, build_array_geometry(c, d, np.deg2rad(pitch_deg)), paths, c)
    cb = PilotCodebooks.draw(rng, c)
    p_t = normalize_tx_power(d, db_to_linear(snr_db), c.noise_power, c.n_subcarriers, c)
    sigma2 = 0.0 if noiseless else c.noise_power
    return measure(ch, cb, p_t, sigma2, np.random.SeedSequence(seed + 1))


def synthetic_measurement(config, H, seed=0, noise_power=0.0, tx_power=1.0):
    """Sounding of an arbitrary channel array (geometry and paths are placeholders)."""
    from crossfield.channel import ChannelRealization
    rng = np.random.default_rng(seed)
    geom = build_array_geometry(config, 1.0)
    ch = ChannelRealization("SWM", np.asarray(H, complex), sample_paths(rng, 1.0, config),
                            geom, config)
    cb = PilotCodebooks.draw(rng, config)
    return measure(ch, cb, tx_power, noise_power, np.random.SeedSequence(seed + 1))


def atom_pair_channel(config, tx_atom, rx_atom, gains):
    """Every SA-pair block equal to ``gains[k] * rx_atom tx_atom^T``."""
    from crossfield.channel import assemble_blocks
    blk = np.einsum("k,r,t->krt", np.asarray(gains), rx_atom, tx_atom)
    blocks = np.broadcast_to(blk[:, None, None], (len(gains), config.n_sa_rx, config.n_sa_tx)
                             + blk.shape[1:])
    return assemble_blocks(np.ascontiguousarray(blocks))
