import pytest

from co2vent.inference import SamplerConfig, sample_posterior
from co2vent.priors import default_prior_set

from twins import CHAMBER_VOLUME_L, injection_twin


@pytest.fixture(scope="session")
def quick_config():
    return SamplerConfig(draws=1000, burn_in=300)


@pytest.fixture(scope="session")
def test4_quick():
    """A short constant-injection twin plus its posterior, shared by tests
    that only need *some* converged posterior."""
    data = injection_twin(horizon_h=2.0, seed=42)
    samples = sample_posterior(default_prior_set(), data, CHAMBER_VOLUME_L,
                               config=SamplerConfig(draws=1000, burn_in=300),
                               seed=9)
    return {"data": data, "samples": samples, "volume_l": CHAMBER_VOLUME_L,
            "truth": {"q_ach": 1.9, "c_out_ppm": 420.0, "e_lps": 0.013,
                      "sigma": 72.7}}
