import numpy as np
import pytest
from scipy.special import mathieu_a, mathieu_b

from fglab.schrodinger_direct import (
    FourierPotential,
    band_scan,
    discriminant,
    free_resonances,
    gap_centres,
    monodromy,
)

ZERO = FourierPotential(np.zeros(8), 1.0)


@pytest.mark.parametrize("eps", [0.3, 7.0, 55.5, -2.0])
def test_free_monodromy_closed_form(eps):
    T = 1.3
    m = monodromy(ZERO, T, eps)
    k = np.sqrt(complex(eps))
    exact = np.array([[np.cos(k * T), np.sin(k * T) / k], [-k * np.sin(k * T), np.cos(k * T)]])
    assert np.abs(m.matrix - exact).max() < 1e-9 * max(1, abs(k))


@pytest.mark.parametrize("eps", [-3.0, 0.5, 12.0, 4.0 + 2.0j])
def test_wronskian_is_one(eps):
    u = FourierPotential.from_function(lambda x: 0.8 * np.cos(2 * np.pi * x) + 0.2 * np.sin(6 * np.pi * x), 1.0, 32)
    assert abs(monodromy(u, 1.0, eps).det - 1) < 1e-10


def test_mathieu_edges():
    # -y'' + 2q cos(2x) y = eps y has band edges at the Mathieu characteristic values
    q = 1.5
    u = FourierPotential.from_function(lambda x: 2 * q * np.cos(2 * x), np.pi, 32)
    rep = band_scan(u, np.pi, (-3.0, 20.0), grid=300)
    expected = [mathieu_a(0, q)] + [f(m, q) for m in (1, 2, 3, 4) for f in (mathieu_b, mathieu_a)]
    expected = [e for e in expected if e < 20.0]
    edges = np.asarray(rep.edges)
    assert len(edges) == len(expected)
    assert np.abs(np.sort(edges) - np.sort(expected)).max() < 1e-7


def test_free_spectrum_has_no_gaps_above_zero():
    rep = band_scan(ZERO, 1.0, (1.0, 200.0), grid=300)
    assert rep.gaps == []
    res = free_resonances(1.0, (1.0, 200.0), grid=300)
    expected = [(np.pi * m) ** 2 for m in range(1, 5)]
    assert np.allclose(res, expected, atol=1e-6)


def test_small_cosine_gap_centres_near_free_resonances():
    u = FourierPotential.from_function(lambda x: 0.1 * np.cos(2 * np.pi * x), 1.0, 32)
    rep = band_scan(u, 1.0, (-1.0, 100.0), grid=600)
    centres = gap_centres(rep)
    assert len(centres) == 3
    free = [(np.pi * m) ** 2 for m in (1, 2, 3)]
    # the first gap has width ~ amplitude and is centred at the resonance to second order
    assert np.abs(np.array(centres) - free).max() < 1e-2
    lo, hi = rep.gaps[0]
    assert abs((hi - lo) - 0.1) < 5e-3


def test_discriminant_real_and_even_in_shift():
    u = FourierPotential.from_function(lambda x: np.cos(2 * np.pi * x) + 0.5 * np.cos(4 * np.pi * x + 0.3), 1.0, 32)
    a = discriminant(u, 1.0, 5.0)
    b = discriminant(u, 1.0, 5.0, x0=0.37)
    assert isinstance(a, float)
    assert abs(a - b) < 1e-9


def test_fourier_potential_derivatives():
    u = FourierPotential.from_function(lambda x: np.sin(2 * np.pi * x) + 0.25 * np.cos(6 * np.pi * x), 1.0, 16)
    x = np.linspace(0, 1, 9)
    w = 2 * np.pi
    assert np.allclose(u(x), np.sin(w * x) + 0.25 * np.cos(3 * w * x), atol=1e-13)
    assert np.allclose(u.derivative(x, 1), w * np.cos(w * x) - 0.75 * w * np.sin(3 * w * x), atol=1e-11)
    assert np.allclose(u.derivative(x, 2), -w * w * np.sin(w * x) - 2.25 * w * w * np.cos(3 * w * x), atol=1e-9)
    assert abs(u.mean) < 1e-15
    assert u.tail_ratio() < 1e-12


def test_thread_count_does_not_change_results(monkeypatch):
    u = FourierPotential.from_function(lambda x: np.cos(2 * np.pi * x), 1.0, 32)
    monkeypatch.setenv("FGLAB_THREADS", "1")
    a = band_scan(u, 1.0, (-2.0, 45.0), grid=120).to_dict()
    monkeypatch.setenv("FGLAB_THREADS", "4")
    b = band_scan(u, 1.0, (-2.0, 45.0), grid=120).to_dict()
    assert a == b


def test_invalid_inputs():
    with pytest.raises(ValueError):
        band_scan(ZERO, 1.0, (3.0, 1.0))
    with pytest.raises(ValueError):
        monodromy(ZERO, 0.0, 1.0)
    with pytest.raises(ValueError):
        FourierPotential([1.0, 2.0], 1.0)
