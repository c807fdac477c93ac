"""
Verification oracles on small meshes
"""
import pytest

from config.run_config import RunConfig
from services.verification_service import VerificationService, level_variation


@pytest.fixture
def verifier():
    return VerificationService(RunConfig(command='verify', square=2, seed=3))


def test_partition_of_unity(verifier):
    assert verifier.partition_of_unity().passed


def test_divergence_theorem(verifier):
    assert verifier.divergence_theorem().passed


def test_integration_by_parts_oracles(verifier):
    assert all(result.passed for result in verifier.integration_by_parts())


def test_flipped_orientation_is_detected():
    flipped = VerificationService(RunConfig(command='verify', square=2, flip_orientation=True))
    results = {r.oracle: r.passed for r in flipped.integration_by_parts()}
    assert results == {'integration_by_parts': False, 'jump_average_identity': True}
    assert flipped.divergence_theorem().passed is False


def test_lifting_and_trace_bounds(verifier):
    for result in verifier.trace_inequality() + verifier.lifting_bound():
        assert result.passed, result


def test_coercivity(verifier):
    assert verifier.coercivity().passed


def test_conformity(verifier):
    assert verifier.conformity().passed


def test_helmholtz_oracle(verifier):
    assert verifier.helmholtz().passed


def test_small_penalty_fails_the_coercivity_oracle():
    weak = VerificationService(RunConfig(command='verify', square=2, seed=3, eta_star='0.01'))
    result = weak.coercivity()
    assert result.passed is False
    assert result.value < 0.5


def test_level_variation():
    assert level_variation([1.0, 1.0, 1.0]) == 0.0
    assert level_variation([2.0]) == 0.0
    # successive changes only: 1.0 -> 2.0 is a 50% change, 2.0 -> 1.5 a 25% change
    assert level_variation([1.0, 2.0, 1.5]) == pytest.approx(0.5)
    assert level_variation([0.0229, 0.0191, 0.0180]) == pytest.approx((0.0229 - 0.0191) / 0.0229)
