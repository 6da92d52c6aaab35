import numpy as np
import pytest

from dcffair import MacParams

# Collision-light backoff profile used by validation studies: the renewal
# increment abstraction is near-exact here (see tests/test_acceptance.py).
VALIDATION_PARAMS = MacParams(cw_min=128, cw_max=1024, max_backoff_stage=3)

# Short-airtime profile keeping increment variance small relative to the
# mean; used where theta -> 0 limits need tight relative tolerances.
COMPACT_PARAMS = MacParams(ack_dur=30, header_dur=40, payload_dur=200)


@pytest.fixture(scope="session")
def default_params() -> MacParams:
    return MacParams()


@pytest.fixture(scope="session")
def rng() -> np.random.Generator:
    return np.random.default_rng(20_240_811)
