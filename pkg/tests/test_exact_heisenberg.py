import math

import pytest

from app.core.config import settings
from app.core.errors import DomainError, OutOfRangeError, PreconditionError, ResourceLimitError
from app.models.spectrum import SectorKind, SpectralDatum
from app.services import exact_heisenberg as eh
from app.services.heat import heat_trace_from_spectrum
from app.services.weyl_qe import weyl_fit


def test_counting_small_cutoff():
    spectrum = eh.enumerate_spectrum(3.5)
    assert eh.counting(spectrum, 3.5) == 15
    assert eh.counting(spectrum, 0.5) == 1
    assert eh.counting(spectrum, 1.0) == 3


def test_aggregate_by_value_merges_sectors():
    spectrum = eh.enumerate_spectrum(3.5)
    assert eh.aggregate_by_value(spectrum) == [(0.0, 1), (1.0, 2), (2.0, 4), (3.0, 8)]


def test_oscillator_data_carry_landau_multiplicity(flat_spectrum):
    for datum in list(flat_spectrum)[:500]:
        if datum.kind == SectorKind.OSCILLATOR:
            assert datum.multiplicity == abs(datum.m)
            assert datum.eigenvalue == (2 * datum.l + 1) * abs(datum.m)
        else:
            assert datum.eigenvalue == pytest.approx(2 * math.pi * (datum.j ** 2 + datum.k ** 2))


def test_spectrum_is_sorted_and_exhaustive(flat_spectrum):
    ev = flat_spectrum.eigenvalues
    assert (ev[1:] >= ev[:-1]).all()
    assert ev.max() <= 2000.0


def test_weyl_fit_matches_popp_volume(flat_spectrum):
    report = weyl_fit(flat_spectrum, 200.0, 2000.0, reference=eh.WEYL_CONSTANT_FLAT)
    assert report.exponent == pytest.approx(2.0, abs=0.02)
    assert report.relative_error < 0.02
    assert eh.WEYL_CONSTANT_FLAT == pytest.approx(math.pi ** 2 / 8)


def test_torus_counting_is_linear(flat_spectrum):
    report = eh.torus_counting_fit(flat_spectrum, 100.0, 2000.0)
    assert report.exponent == pytest.approx(1.0, abs=0.05)
    assert 0.35 < report.constant < 0.7


def test_heat_trace_small_time_constant():
    t = 1e-3
    assert t * t * eh.heat_trace_closed_form(t) == pytest.approx(math.pi ** 2 / 4, rel=0.01)


def test_heat_trace_agrees_with_partial_sum(flat_spectrum):
    t = 0.05
    assert heat_trace_from_spectrum(flat_spectrum, t) == pytest.approx(eh.heat_trace_closed_form(t), rel=1e-9)


def test_oscillator_factors():
    datum = SpectralDatum.oscillator(2, -3)
    r, omega = eh.oscillator_factors(datum)
    assert (r, omega) == (3, 5)
    assert r * omega == datum.eigenvalue
    with pytest.raises(PreconditionError):
        eh.oscillator_factors(SpectralDatum.torus(1, 0))


def test_concentration_element():
    assert eh.concentration_element(SpectralDatum.oscillator(0, 4)) == pytest.approx(0.8)
    assert eh.concentration_element(SpectralDatum.torus(1, 1)) == 0.0


def test_errors(monkeypatch):
    with pytest.raises(DomainError):
        eh.enumerate_spectrum(-1.0)
    spectrum = eh.enumerate_spectrum(10.0)
    with pytest.raises(OutOfRangeError):
        eh.counting(spectrum, 11.0)
    with pytest.raises(DomainError):
        eh.heat_trace_closed_form(0.0)
    monkeypatch.setattr(settings, "MAX_SPECTRUM_ENTRIES", 10)
    with pytest.raises(ResourceLimitError):
        eh.enumerate_spectrum(1000.0)


def test_write_spectrum_csv(store):
    path = eh.write_spectrum_csv(eh.enumerate_spectrum(3.5), store)
    lines = path.read_text().splitlines()
    assert lines[0] == "eigenvalue,sector_kind,l,m,j,k,multiplicity"
    assert lines[1] == "0,torus,,,0,0,1"
    assert lines[2] == "1,oscillator,0,-1,,,1"
    assert len(lines) == 1 + len(eh.enumerate_spectrum(3.5))


def _brute_force_count(lam):
    total = 0
    for mabs in range(1, int(lam) + 1):
        l = 0
        while (2 * l + 1) * mabs <= lam:
            total += 2 * mabs
            l += 1
    jmax = int(math.sqrt(lam / (2 * math.pi))) + 1
    for j in range(-jmax, jmax + 1):
        for k in range(-jmax, jmax + 1):
            if 2 * math.pi * (j * j + k * k) <= lam:
                total += 1
    return total


def test_counting_matches_double_loop(rng):
    spectrum = eh.enumerate_spectrum(200.0)
    assert eh.counting(spectrum, 0.0) == 1
    for lam in rng.uniform(0.0, 200.0, size=20):
        assert eh.counting(spectrum, float(lam)) == _brute_force_count(float(lam))


def test_counting_is_nondecreasing(flat_spectrum):
    counts = eh.counting_many(flat_spectrum, [0.0, 1.0, 7.3, 50.0, 50.0, 400.0, 2000.0])
    assert (counts[1:] >= counts[:-1]).all()


def test_counting_outgrows_riemannian_rate(flat_spectrum):
    n200, n2000 = eh.counting_many(flat_spectrum, [200.0, 2000.0])
    assert n2000 / 2000.0 ** 1.5 > n200 / 200.0 ** 1.5
    assert n2000 / 2000.0 ** 2 == pytest.approx(eh.WEYL_CONSTANT_FLAT, rel=0.02)


def test_torus_ring_aggregates_to_four():
    view = eh.aggregate_by_value(eh.enumerate_spectrum(7.0))
    ring = [mult for value, mult in view if value == pytest.approx(2 * math.pi)]
    assert ring == [4]


def test_only_constant_below_one_half():
    spectrum = eh.enumerate_spectrum(0.5)
    assert len(spectrum) == 1
    assert spectrum[0].kind == SectorKind.TORUS and spectrum[0].eigenvalue == 0.0


def test_concentration_values():
    assert eh.concentration_element(SpectralDatum.oscillator(0, 1)) == 0.5
    assert eh.concentration_element(SpectralDatum.oscillator(0, 10)) == pytest.approx(100 / 110)
    assert eh.concentration_element(SpectralDatum.torus(1, 0)) == 0.0


def test_heat_trace_at_unit_time_matches_enumeration():
    spectrum = eh.enumerate_spectrum(50.0)
    assert heat_trace_from_spectrum(spectrum, 1.0) == pytest.approx(eh.heat_trace_closed_form(1.0), abs=1e-10)


def test_heat_trace_is_decreasing():
    ts = [0.01, 0.05, 0.2, 1.0, 5.0, 30.0]
    values = [eh.heat_trace_closed_form(t) for t in ts]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(1.0, abs=1e-9)
    assert max(t * t * v for t, v in zip(ts, values)) < 3.0
