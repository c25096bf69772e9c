import warnings

import pytest

from demodiff.resample import CoarseBootstrapWarning
from demodiff.synth import default_models, generate


@pytest.fixture(scope="session")
def small_synth():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseBootstrapWarning)
        return generate(default_models(40, outlier_fraction=0.05), seed=11)
