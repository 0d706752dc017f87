from __future__ import annotations

import numpy as np
import pytest

from bmm2d import (
    AdditiveGaussian,
    ArParams,
    ContaminationSpec,
    DomainError,
    ReplaceAr,
    ReplaceStudentT,
    ReplaceWhiteNoise,
    contaminate,
)


@pytest.fixture(scope="module")
def big_field(std_params):
    from bmm2d import GaussianNoise, simulate_ar2d

    return simulate_ar2d(std_params, 200, 200, GaussianNoise(), 50, seed=314)


def test_alpha_validation():
    with pytest.raises(DomainError):
        ContaminationSpec(alpha=-0.1, kind=AdditiveGaussian())
    with pytest.raises(DomainError):
        ContaminationSpec(alpha=1.1, kind=AdditiveGaussian())


def test_payload_validation():
    with pytest.raises(DomainError):
        AdditiveGaussian(variance=0.0)
    with pytest.raises(DomainError):
        ReplaceWhiteNoise(variance=-1.0)
    with pytest.raises(DomainError):
        ReplaceStudentT(df=0.0)


def test_untouched_cells_bit_exact(big_field):
    spec = ContaminationSpec(alpha=0.3, kind=ReplaceWhiteNoise(50.0))
    out = contaminate(big_field, spec, seed=8)
    same = ~out.mask
    np.testing.assert_array_equal(out.z.values[same], big_field.values[same])
    assert np.all(out.z.values[out.mask] != big_field.values[out.mask])


def test_alpha_zero_and_one(big_field):
    clean = contaminate(big_field, ContaminationSpec(0.0, ReplaceWhiteNoise()), seed=1)
    assert clean.n_replaced == 0
    np.testing.assert_array_equal(clean.z.values, big_field.values)
    full = contaminate(big_field, ContaminationSpec(1.0, ReplaceWhiteNoise()), seed=1)
    assert full.n_replaced == big_field.values.size


def test_deterministic_in_seed(big_field):
    spec = ContaminationSpec(alpha=0.1, kind=AdditiveGaussian(50.0))
    a = contaminate(big_field, spec, seed=99)
    b = contaminate(big_field, spec, seed=99)
    np.testing.assert_array_equal(a.z.values, b.z.values)
    np.testing.assert_array_equal(a.mask, b.mask)
    c = contaminate(big_field, spec, seed=100)
    assert np.any(a.z.values != c.z.values)


def test_mask_fraction_close_to_alpha(big_field):
    spec = ContaminationSpec(alpha=0.1, kind=ReplaceWhiteNoise())
    out = contaminate(big_field, spec, seed=5)
    frac = out.n_replaced / big_field.values.size
    # binomial se at n=40000 is about 0.0015
    assert frac == pytest.approx(0.1, abs=0.01)


def test_additive_shifts_have_requested_variance(big_field):
    spec = ContaminationSpec(alpha=0.5, kind=AdditiveGaussian(50.0))
    out = contaminate(big_field, spec, seed=17)
    shifts = (out.z.values - big_field.values)[out.mask]
    assert shifts.std() == pytest.approx(np.sqrt(50.0), rel=0.05)
    assert shifts.mean() == pytest.approx(0.0, abs=0.2)


def test_white_noise_replacement_variance(big_field):
    spec = ContaminationSpec(alpha=0.5, kind=ReplaceWhiteNoise(50.0))
    out = contaminate(big_field, spec, seed=18)
    repl = out.z.values[out.mask]
    assert repl.std() == pytest.approx(np.sqrt(50.0), rel=0.05)


def test_student_t_replacement_is_heavy_tailed(big_field):
    spec = ContaminationSpec(alpha=0.5, kind=ReplaceStudentT(2.3))
    out = contaminate(big_field, spec, seed=19)
    repl = out.z.values[out.mask]
    # excess of |values| beyond 4 is far above the Gaussian rate
    assert np.mean(np.abs(repl) > 4.0) > 0.005


def test_replace_ar_draws_independent_field(big_field):
    spec = ContaminationSpec(alpha=0.4, kind=ReplaceAr())
    out = contaminate(big_field, spec, seed=20)
    repl = out.z.values[out.mask]
    orig = big_field.values[out.mask]
    r = np.corrcoef(repl, orig)[0, 1]
    assert abs(r) < 0.03


def test_replace_ar_infeasible_params_rejected(big_field):
    spec = ContaminationSpec(alpha=0.1, kind=ReplaceAr(params=ArParams(0.5, 0.4, 0.3)))
    with pytest.raises(DomainError):
        contaminate(big_field, spec, seed=1)
