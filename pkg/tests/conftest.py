import numpy as np
import pytest

from hdoms.experiments import SyntheticBenchSpec, synth_library
from hdoms.hd_core import EncoderConfig, gen_id_family, gen_level_family
from hdoms.spectra import BinConfig, Spectrum


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticBenchSpec(library_size=200, query_count=30)


@pytest.fixture(scope="session")
def small_dataset(small_spec):
    return synth_library(small_spec, seed=11)


@pytest.fixture(scope="session")
def tiny_encoder():
    return EncoderConfig(dim=1024, levels=16, id_bits=1, seed=5)


@pytest.fixture(scope="session")
def tiny_families(tiny_encoder):
    bc = BinConfig(0.1, 100.0, 1600.0)
    ids = gen_id_family(bc.num_bins, tiny_encoder)
    lv = gen_level_family(tiny_encoder)
    return bc, ids, lv


def make_spectrum(seed=0, n=30, sid="s", lo=100.0, hi=1600.0):
    rng = np.random.default_rng(seed)
    mz = np.sort(rng.uniform(lo, hi, size=n))
    intensity = rng.uniform(0.05, 1.0, size=n)
    return Spectrum(
        id=sid,
        precursor_mass=float(rng.uniform(500, 1500)),
        precursor_charge=2,
        mz=mz,
        intensity=intensity,
    )


@pytest.fixture
def spectrum():
    return make_spectrum()


MGF_TEXT = """\
BEGIN IONS
TITLE=pep_one
PEPMASS=421.75
CHARGE=2+
100.10 12.0
250.20 150.0
300.00 7.5
450.30 80.0
500.05 5.0
END IONS

BEGIN IONS
TITLE=DECOY_pep_two
PEPMASS=600.25 12345.0
CHARGE=3+
120.00 1.0
240.00 2.0
360.00 3.0
480.00 4.0
600.00 5.0
720.00 6.0
END IONS
"""
