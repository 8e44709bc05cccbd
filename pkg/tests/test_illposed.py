import numpy as np
import pytest
from scipy.integrate import quad

from deautoconv.forward import apply_forward
from deautoconv.grid import ComplexSignal, l2_norm, make_grid
from deautoconv.illposed import (PsiBetaSpec, central_window, illposedness_demo, psi_beta_autoconv_closed_form,
                                 psi_beta_autoconv_exact, psi_beta_image_bound, psi_beta_samples,
                                 reconstruction_error, sign_ambiguity_residual)
from deautoconv.kernel import ConstantKernel, PhysicalKernel
from deautoconv.synth import PulseSpec, make_pulse

# 0.5 * B(3/4, 3/4) from a 30-digit mpmath evaluation
HALF_BETA_34 = 0.847213084793979086606499123482


@pytest.fixture(scope="module")
def grid2001():
    return make_grid(0, 1, 2001)


@pytest.mark.parametrize("kw", [dict(r=-1, beta=0.3), dict(r=0, beta=0.3), dict(r=1, beta=0.0),
                                dict(r=1, beta=0.5), dict(r=1, beta=0.7)])
def test_spec_rejects(kw):
    with pytest.raises(ValueError):
        PsiBetaSpec(**kw)


def test_small_beta_limit():
    g = make_grid(0, 1, 11)
    x = psi_beta_samples(PsiBetaSpec(2.0, 1e-9), g)
    assert x.values[-1].real == pytest.approx(2.0, rel=1e-8)


def test_midpoint_substitution():
    g = make_grid(0, 1, 11)
    spec = PsiBetaSpec(1.0, 0.3)
    x = psi_beta_samples(spec, g).values.real
    assert x[0] == pytest.approx(np.sqrt(0.4) * (0.05) ** -0.3)
    assert np.all(np.isfinite(x))


def test_samples_need_unit_interval():
    with pytest.raises(ValueError):
        psi_beta_samples(PsiBetaSpec(1, 0.3), make_grid(0, 2, 11))


def test_norm_converges_to_r():
    errs = [abs(l2_norm(psi_beta_samples(PsiBetaSpec(1.0, 0.25), make_grid(0, 1, n))) - 1)
            for n in (501, 1001, 2001)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_closed_form_values():
    spec = PsiBetaSpec(1.0, 0.25)
    assert psi_beta_autoconv_closed_form(spec, 0.0) == 0.0
    assert psi_beta_autoconv_closed_form(spec, 1.0) == pytest.approx(HALF_BETA_34, rel=1e-13)
    with pytest.raises(ValueError):
        psi_beta_autoconv_closed_form(spec, 2.5)


@pytest.mark.parametrize("beta", [0.1, 0.3, 0.45])
@pytest.mark.parametrize("s", [0.2, 0.9, 1.0, 1.3, 1.8])
def test_exact_form_matches_quadrature(beta, s):
    spec = PsiBetaSpec(1.0, beta)
    f = lambda q: (1 - 2 * beta) * q**-beta * (s - q) ** -beta
    ref = quad(f, max(0.0, s - 1), min(1.0, s), limit=200)[0]
    assert psi_beta_autoconv_exact(spec, s) == pytest.approx(ref, rel=1e-8)
    if s <= 1:
        assert psi_beta_autoconv_closed_form(spec, s) == pytest.approx(ref, rel=1e-8)


def test_closed_form_overshoots_beyond_one():
    spec = PsiBetaSpec(1.0, 0.3)
    assert psi_beta_autoconv_closed_form(spec, 1.5) > 3 * psi_beta_autoconv_exact(spec, 1.5)


def test_discrete_autoconvolution_converges():
    spec = PsiBetaSpec(1.0, 0.25)
    errs = []
    for n in (251, 1001):
        g = make_grid(0, 1, n)
        y = apply_forward(ConstantKernel(1.0), psi_beta_samples(spec, g), g)
        m = np.array([round(s / g.dq) for s in (0.5, 1.0)])
        errs.append(np.max(np.abs(y[m].real / psi_beta_autoconv_closed_form(spec, g.s[m]) - 1)))
    assert errs[1] < errs[0]
    assert errs[1] < 0.02


def test_demo_zero_background(grid2001):
    t = illposedness_demo(np.zeros(2001), 1.0, [0.3, 0.4, 0.45, 0.49], ConstantKernel(1.0), grid2001)
    assert t.beta == [0.3, 0.4, 0.45, 0.49]
    img = np.array(t.image_diff_norm)
    assert np.all(np.diff(img) < 0)
    assert np.all(img <= np.array(t.bound))
    g = grid2001
    psi = psi_beta_samples(PsiBetaSpec(1.0, 0.45), g)
    assert img[2] == pytest.approx(l2_norm(apply_forward(ConstantKernel(1.0), psi, g), g.dq), rel=1e-12)


def test_demo_case_one_background(grid2001):
    x0 = make_pulse(PulseSpec.case_one(), grid2001)
    t = illposedness_demo(x0, 0.1, [0.3, 0.4, 0.45, 0.49], ConstantKernel(1.0), grid2001)
    assert np.all(np.diff(t.image_diff_norm) < 0)


def test_demo_single_row(grid2001, tmp_path):
    t = illposedness_demo(np.zeros(2001), 1.0, [0.3], PhysicalKernel(), grid2001)
    assert len(t.rows()) == 1
    assert t.perturbation_norm[0] == pytest.approx(1.0, rel=0.03)
    text = t.to_csv(tmp_path / "t.csv")
    assert text.splitlines()[0] == "beta,perturbation_norm,image_diff_norm,bound"
    assert len(text.splitlines()) == 2


def test_demo_rejects_unsorted():
    with pytest.raises(ValueError):
        illposedness_demo(np.zeros(11), 1.0, [0.4, 0.3], ConstantKernel(1.0), make_grid(0, 1, 11))


def test_bound_formula():
    assert psi_beta_image_bound(1.0, 0.25) == pytest.approx(np.sqrt(2) * 0.5 * np.pi * np.sqrt(2))


@pytest.mark.parametrize("kernel", [ConstantKernel(1.0), PhysicalKernel()])
def test_sign_ambiguity(kernel):
    g = make_grid(0, 1, 30)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    y = apply_forward(kernel, x, g)
    a, b = sign_ambiguity_residual(x, y, kernel, g)
    assert a <= 1e-12 * l2_norm(y, g.dq) and b <= 1e-12 * l2_norm(y, g.dq)
    yr = rng.standard_normal(59) + 1j * rng.standard_normal(59)
    a, b = sign_ambiguity_residual(x, yr, kernel, g)
    assert a == pytest.approx(b, rel=1e-13)
    assert np.allclose(apply_forward(kernel, np.exp(1j * np.pi) * x, g), y, rtol=1e-13)


def test_reconstruction_error_invariances():
    g = make_grid(0, 1, 100)
    x = make_pulse(PulseSpec.case_two(), g)
    assert reconstruction_error(x, x) == (0.0, 0.0)
    neg = ComplexSignal.on_input(g, -x.values)
    assert reconstruction_error(neg, x) == pytest.approx((0.0, 0.0), abs=1e-10)
    shifted = ComplexSignal.on_input(g, np.exp(2.1j) * x.values)
    assert reconstruction_error(shifted, x) == pytest.approx((0.0, 0.0), abs=1e-10)
    flat = ComplexSignal.on_input(g, np.abs(x.values))
    assert reconstruction_error(flat, x)[1] > 0.1


def test_reconstruction_error_rejects_mismatch():
    a = ComplexSignal.on_input(make_grid(0, 1, 10), np.ones(10))
    b = ComplexSignal.on_input(make_grid(0, 1, 11), np.ones(11))
    with pytest.raises(ValueError):
        reconstruction_error(a, b)
    with pytest.raises(ValueError):
        reconstruction_error(a, a, central_fraction=0.0)


def test_central_window():
    assert central_window(128, 0.6) == slice(26, 102)
    assert central_window(10, 1.0) == slice(0, 10)
