import itertools

import numpy as np
import pytest

from fluxccz.composite import (
    COMPUTATIONAL,
    DeviceConfig,
    DressedModel,
    LabelingError,
    build_composite,
    coupler_transition_table,
    dressed_model,
    paper_device,
    solve_subsystems,
)

LEVELS = 4


@pytest.fixture(scope="module")
def device():
    return paper_device()


@pytest.fixture(scope="module")
def small(device):
    return dressed_model(device, LEVELS, 64)


def kron_hamiltonian(config, sols):
    """Independent dense assembly with explicit Kronecker products."""
    lv = sols[0].n_levels
    eye = np.eye(lv)

    def embed(op, k):
        mats = [eye] * 4
        mats[k] = op
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    h = sum(embed(np.diag(s.energies), k) for k, s in enumerate(sols)).astype(complex)
    for i, j in itertools.combinations(range(4), 2):
        h = h + config.g(i, j) * embed(sols[i].n_matrix, i) @ embed(sols[j].n_matrix, j)
    return h


def test_composite_matches_kron_assembly(device):
    sols = solve_subsystems(device, LEVELS)
    model = build_composite(device, LEVELS, subsystems=sols)
    ref = kron_hamiltonian(device, sols)
    assert model.H.dtype == float
    np.testing.assert_allclose(model.H, ref.real, atol=1e-12)
    assert np.abs(ref.imag).max() < 1e-12
    np.testing.assert_allclose(
        np.linalg.eigvalsh(model.H)[:64], np.linalg.eigvalsh(ref)[:64], atol=1e-10
    )


def test_dressed_energies_and_labels(small):
    assert small.energies[0] == 0.0
    assert np.all(np.diff(small.energies) >= 0)
    assert small.labels[0] == (0, 0, 0, 0)
    assert len(set(small.labels)) == small.n_keep
    assert np.all(small.overlap_quality[small.computational_indices(0)] > 0.5)
    np.testing.assert_allclose(small.n_T_dressed, small.n_T_dressed.conj().T, atol=1e-14)


def test_uncoupled_device_has_no_residual_coupling(device):
    d = dressed_model(device.with_couplings(0.0), LEVELS, 32)
    s = coupler_transition_table(d)
    assert np.abs(s.zeta_zz).max() < 1e-3  # Hz
    assert abs(s.zeta_zzz) < 1e-3
    assert abs(s.delta) < 1e-12
    assert np.ptp(s.f_xyz) < 1e-12


def test_bare_labels_without_coupling(device):
    d = dressed_model(device.with_couplings(0.0), LEVELS, 32)
    np.testing.assert_allclose(d.overlap_quality, 1.0, atol=1e-12)


def test_swap_symmetry(device):
    base = coupler_transition_table(dressed_model(device, LEVELS, 32))
    sw = coupler_transition_table(dressed_model(device.swapped(0, 2), LEVELS, 32))
    # pairs (12, 13, 23) map to (23, 13, 12)
    np.testing.assert_allclose(sw.zeta_zz, base.zeta_zz[::-1], rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(sw.zeta_zzz, base.zeta_zzz, rtol=1e-5, atol=1e-6)
    perm = [int(f"{x[2]}{x[1]}{x[0]}", 2) for x in COMPUTATIONAL]
    np.testing.assert_allclose(sw.f_xyz, base.f_xyz[perm], atol=1e-10)


def test_save_load_roundtrip(small, tmp_path):
    path = tmp_path / "m.npz"
    small.save(path)
    back = DressedModel.load(path)
    assert back.labels == small.labels
    np.testing.assert_array_equal(back.energies, small.energies)
    np.testing.assert_array_equal(back.n_T_dressed, small.n_T_dressed)


def test_subset_and_truncate(small):
    t = small.truncate(32)
    np.testing.assert_array_equal(t.energies, small.energies[:32])
    extra = small.labels[40]
    w = small.with_labels(32, [extra])
    assert w.n_keep == 33 and w.labels[-1] == extra
    k = small.index(extra)
    np.testing.assert_array_equal(w.n_T_dressed[-1, :32], small.n_T_dressed[k, :32])
    with pytest.raises(ValueError):
        small.truncate(small.n_keep + 1)
    with pytest.raises(LabelingError):
        small.index((9, 9, 9, 9))


def test_bare_to_dressed_of_coupler_charge(small, device):
    sols = solve_subsystems(device, LEVELS)
    np.testing.assert_allclose(small.bare_to_dressed(sols[3].n_matrix, 3), small.n_T_dressed, atol=1e-12)


def test_config_validation(device):
    with pytest.raises(ValueError):
        DeviceConfig(device.fluxoniums[:2], device.transmon)
    with pytest.raises(ValueError):
        DeviceConfig(device.fluxoniums, device.transmon, {("F1", "T"): 0.6, ("T", "F1"): 0.5})
    with pytest.raises(ValueError):
        build_composite(device, 3)
    assert device.g(0, 3) == device.g(3, 0) == 0.6
    assert device.coupling_matrix()[0, 1] == 0.15
