"""Shared fixtures: a small prepared generative model on disk.

The model fixture mirrors what a user would assemble: a handful of analytic
TSDFs decomposed into coefficient pyramids, an oracle denoiser over their
coarse volumes with encoder anchors, the detail volumes and size table
needed to reconstruct surfaces, and a manifest tying it together.
"""

from __future__ import annotations

import numpy as np
import pytest

from waveshape import tsdf as tsdf_mod
from waveshape.conditioning import PoolProjectEncoder, write_model_manifest
from waveshape.diffusion import (GaussianMixtureOracle, make_linear_schedule,
                                 write_oracle_corpus)
from waveshape.wavelet import get_bank, pyramid_decompose

MODEL_SEED = 11
MODEL_T = 100
MODEL_TAU = 0.25
MODEL_RES = 32
MODEL_LEVELS = 2
MODEL_LATENT = 32
MODEL_BANK = "bior-6.8"


def model_shapes():
    return [
        tsdf_mod.SphereSource((0.0, 0.0, 0.0), 0.55),
        tsdf_mod.BoxSource((0.0, 0.0, 0.0), (0.45, 0.45, 0.45)),
        tsdf_mod.TorusSource((0.0, 0.0, 0.0), 0.5, 0.22),
    ]


def build_model_dir(root):
    """Write corpus/ and model.json under ``root``; returns the manifest path."""
    bank = get_bank(MODEL_BANK)
    encoder = PoolProjectEncoder(MODEL_LATENT, pool=8, seed=MODEL_SEED)
    coarse, details = [], []
    dims_table = None
    for src in model_shapes():
        vol = tsdf_mod.sample_tsdf(src, MODEL_RES)
        pyr = pyramid_decompose(vol, J=MODEL_LEVELS, bank=bank)
        coarse.append(pyr.coarse)
        details.append(pyr.details[0])
        dims_table = pyr.dims_table
    anchors = np.stack([encoder.encode(c) for c in coarse])
    sched = make_linear_schedule(MODEL_T)
    weights = [0.5, 0.3, 0.2]
    oracle = GaussianMixtureOracle(list(zip(weights, coarse)),
                                   anchors=anchors, tau=MODEL_TAU, sched=sched)
    write_oracle_corpus(root / "corpus", oracle, details=details,
                        dims_table=dims_table, bank_name=MODEL_BANK)
    manifest = root / "model.json"
    write_model_manifest(manifest, encoder_seed=MODEL_SEED,
                         latent_length=MODEL_LATENT, corpus_path="corpus",
                         tau=MODEL_TAU, T=MODEL_T, beta_start=1e-4,
                         beta_end=0.02, pool=8)
    return manifest


@pytest.fixture(scope="session")
def model_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("model")
    return build_model_dir(root)
