import math

import numpy as np
import pytest

from oracles import integrate_lindblad, random_density
from tempsteer import dynamics, qmat
from tempsteer.dynamics import (
    COUPLED_QUBIT_LABEL,
    RADICAL_PAIR_LABEL,
    SPIN_LABEL,
    CoupledQubitParams,
    Liouvillian,
    RadicalPairParams,
)
from tempsteer.qmat import SIGMA_X, SIGMA_Z

GG, EE = 0, 3  # |gg>, |ee> in the (g, e) product basis


def coupled(gamma=1.0, g=1.0):
    return dynamics.build_coupled_qubit_liouvillian(CoupledQubitParams(g, gamma))


def rp_initial(spin_state=None):
    spin = np.eye(8) / 8 if spin_state is None else spin_state
    return np.kron(spin, qmat.projector(qmat.ket(0, 4)))


class TestLiouvillian:
    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError):
            Liouvillian(np.eye(2), ((SIGMA_X, -1.0),))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            Liouvillian(np.array([[0, 1], [0, 0]]))

    def test_superoperator_matches_apply(self, rng):
        l = coupled(0.7, 1.3)
        rho = random_density(rng, 4)
        np.testing.assert_allclose(
            (l.superoperator() @ rho.reshape(-1)).reshape(4, 4), l.apply(rho), atol=1e-13
        )

    def test_generator_is_trace_preserving(self):
        # tr(L(X)) = 0 for every X means the row-sum against vec(1) vanishes
        l = dynamics.build_radical_pair_liouvillian(RadicalPairParams(theta=0.3))
        ones = np.eye(32).reshape(-1)
        assert np.abs(ones @ l.sparse_superoperator).max() < 1e-6


class TestParams:
    def test_coupled_validation(self):
        with pytest.raises(ValueError):
            CoupledQubitParams(g=0.0)
        with pytest.raises(ValueError):
            CoupledQubitParams(gamma=-1)

    def test_radical_validation(self):
        with pytest.raises(ValueError):
            RadicalPairParams(theta=2.0)
        with pytest.raises(ValueError):
            RadicalPairParams(kappa=-1)
        with pytest.raises(ValueError):
            RadicalPairParams(shelving=False)

    def test_field_direction(self):
        p = RadicalPairParams(theta=math.pi / 2, phi=0.0)
        np.testing.assert_allclose(p.field, [p.b0, 0, 0], atol=1e-20)

    def test_zeeman_scale(self):
        # gamma * B0 for the default field, in rad/s
        assert abs(dynamics.GYROMAGNETIC * dynamics.EARTH_FIELD - 4.133e6) < 1e3


class TestCoupledQubits:
    def test_unitary_without_decay(self, rng):
        l = coupled(gamma=0.0)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        rho0 = qmat.projector(psi / np.linalg.norm(psi))
        for rho in dynamics.propagate(l, rho0, np.linspace(0, 5, 6)):
            assert abs(np.trace(rho) - 1) < 1e-9
            assert abs(np.trace(rho @ rho).real - 1) < 1e-8

    def test_ground_state_is_dark(self):
        rho0 = qmat.projector(qmat.ket(GG, 4))
        for rho in dynamics.propagate(coupled(1.0, 2.5), rho0, [0.5, 3.0]):
            np.testing.assert_allclose(rho, rho0, atol=1e-12)

    def test_excited_population_against_oracle(self):
        l = coupled(gamma=1.0)
        rho0 = qmat.projector(qmat.ket(EE, 4))
        ref = integrate_lindblad(l.hamiltonian, l.collapse, rho0, 1.7)
        rho = dynamics.propagate(l, rho0, [0.0, 1.7])[-1]
        assert abs(rho[EE, EE] - ref[EE, EE]) < 1e-8
        # both qubits decay independently out of |ee>
        assert abs(rho[EE, EE].real - math.exp(-2 * 1.7)) < 1e-8

    @pytest.mark.parametrize("gamma", [1.0, 4.0, 9.0])
    def test_relaxes_to_ground(self, gamma):
        rho = dynamics.propagate(coupled(gamma), np.eye(4) / 4, [20 / gamma])[0]
        assert rho[GG, GG].real > 1 - 1e-4


class TestPropagate:
    def test_time_zero_is_exact(self, rng):
        rho0 = random_density(rng, 4)
        out = dynamics.propagate(coupled(), rho0, [0.0])
        assert np.array_equal(out[0], rho0)

    def test_unitary_matches_exponential(self, rng):
        l = coupled(gamma=0.0, g=1.4)
        rho0 = random_density(rng, 4)
        u = qmat.expm(-1j * l.hamiltonian * 2.3)
        rho = dynamics.propagate(l, rho0, [2.3])[0]
        assert np.linalg.norm(rho - u @ rho0 @ u.conj().T) < 1e-8

    @pytest.mark.parametrize("method", ["DOP853", "RK45", "expm"])
    def test_lindblad_matches_superoperator(self, rng, method):
        l = coupled(gamma=0.8)
        rho0 = random_density(rng, 4)
        for t, rho in zip([0.4, 1.1], dynamics.propagate(l, rho0, [0.4, 1.1], method=method)):
            assert np.linalg.norm(rho - dynamics.exact_evolution(l, rho0, t)) < 1e-7

    def test_stack_input(self, rng):
        l = coupled()
        stack = np.array([random_density(rng, 4) for _ in range(3)])
        out = dynamics.propagate(l, stack, [0.5])[0]
        assert out.shape == (3, 4, 4)
        for s, r in zip(stack, out):
            assert np.linalg.norm(r - dynamics.exact_evolution(l, s, 0.5)) < 1e-8

    def test_divisibility(self, rng):
        l = coupled(gamma=0.6)
        rho0 = random_density(rng, 4)
        mid = dynamics.propagate(l, rho0, [0.7])[0]
        two_step = dynamics.propagate(l, mid, [1.2])[0]
        direct = dynamics.propagate(l, rho0, [1.9])[0]
        assert np.linalg.norm(two_step - direct) < 1e-7

    def test_rejects_bad_times(self):
        with pytest.raises(ValueError):
            dynamics.propagate(coupled(), np.eye(4) / 4, [1.0, 0.5])
        with pytest.raises(ValueError):
            dynamics.propagate(coupled(), np.eye(4) / 4, [-1.0])

    def test_rejects_dimension(self):
        with pytest.raises(ValueError):
            dynamics.propagate(coupled(), np.eye(2) / 2, [1.0])


class TestRadicalPair:
    def test_structure(self):
        l = dynamics.build_radical_pair_liouvillian(RadicalPairParams())
        assert l.dim == 32
        assert len(l.collapse) == 10
        assert l.label == RADICAL_PAIR_LABEL
        ops = dynamics.recombination_operators()
        assert len(ops) == 8
        # each shelving jump maps the undecayed sector out of itself
        p = dynamics.undecayed_projector()
        for op in ops:
            assert np.allclose(p @ op, 0) and np.allclose(op @ p, op)

    def test_hamiltonian_acts_trivially_on_ancillas(self):
        h = dynamics.radical_pair_hamiltonian(RadicalPairParams(theta=0.4), RADICAL_PAIR_LABEL)
        spin = dynamics.radical_pair_hamiltonian(RadicalPairParams(theta=0.4), SPIN_LABEL)
        np.testing.assert_allclose(h, np.kron(spin, np.eye(4)))

    def test_zeeman_precession_frequency(self):
        p = RadicalPairParams(hyperfine=(0, 0, 0), kappa=0, gamma_dephasing=0, shelving=False)
        l = dynamics.build_radical_pair_liouvillian(p)
        plus = np.array([1, 1]) / math.sqrt(2)
        rho0 = qmat.kron(qmat.projector(plus), np.eye(4) / 4)
        omega = 2 * dynamics.GYROMAGNETIC * p.b0
        times = np.linspace(0, 4 * math.pi / omega, 9)
        sx = qmat.embed(SIGMA_X, SPIN_LABEL, ["electron1"])
        for t, rho in zip(times, dynamics.propagate(l, rho0, times, rtol=1e-11, atol=1e-13)):
            assert abs(np.trace(rho) - 1) < 1e-9
            assert abs(np.trace(sx @ rho).real - math.cos(omega * t)) < 1e-6

    def test_defaults_trace_and_survival(self):
        l = dynamics.build_radical_pair_liouvillian(RadicalPairParams(theta=math.pi / 4))
        times = np.linspace(0, 100e-6, 21)
        p = dynamics.undecayed_projector()
        survival = []
        for rho in dynamics.propagate(l, rp_initial(), times):
            assert abs(np.trace(rho) - 1) < 1e-8
            assert np.linalg.eigvalsh(rho).min() > -1e-8
            survival.append(np.trace(p @ rho).real)
        assert np.all(np.diff(survival) <= 1e-12)
        assert survival[-1] < survival[0]

    def test_axial_hyperfine_conserves_nuclear_polarization(self):
        p = RadicalPairParams(theta=0.9, kappa=0, gamma_dephasing=0, shelving=False)
        l = dynamics.build_radical_pair_liouvillian(p)
        nuc = np.diag([0.8, 0.2])
        rho0 = qmat.kron(qmat.projector(dynamics.electron_pair_states()["s"]), nuc)
        sz = qmat.embed(SIGMA_Z, SPIN_LABEL, ["nucleus"])
        for rho in dynamics.propagate(l, rho0, np.linspace(0, 20e-6, 5)):
            assert abs(np.trace(sz @ rho).real - 0.6) < 1e-8

    def test_against_exponential(self):
        l = dynamics.build_radical_pair_liouvillian(RadicalPairParams(theta=math.pi / 2))
        rho0 = rp_initial(qmat.kron(qmat.projector(dynamics.electron_pair_states()["s"]), np.eye(2) / 2))
        rho = dynamics.propagate(l, rho0, [13e-6])[0]
        assert np.linalg.norm(rho - dynamics.exact_evolution(l, rho0, 13e-6)) < 1e-7


class TestReduce:
    def test_trace_out_product(self, rng):
        ra, rb = random_density(rng, 4), random_density(rng, 8)
        label = qmat.SpaceLabel(("pair", "rest"), (4, 8))
        spec = dynamics.ReductionSpec("trace-out", {"rest"})
        np.testing.assert_allclose(dynamics.reduce(np.kron(ra, rb), label, spec), ra, atol=1e-14)

    def test_project_identity(self, rng):
        rho = random_density(rng, 4)
        spec = dynamics.ReductionSpec("project", set(), np.eye(4))
        np.testing.assert_allclose(dynamics.reduce(rho, COUPLED_QUBIT_LABEL, spec), rho, atol=1e-15)

    def test_modes_agree_before_decay(self, rng):
        rho = rp_initial(random_density(rng, 8))
        a = dynamics.reduce(rho, RADICAL_PAIR_LABEL, dynamics.radical_pair_reduction("trace-out"))
        b = dynamics.reduce(rho, RADICAL_PAIR_LABEL, dynamics.radical_pair_reduction("project"))
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_fully_decayed(self):
        shelved = np.kron(np.eye(8) / 8, qmat.projector(qmat.ket(3, 4)))
        with pytest.raises(dynamics.FullyDecayedError):
            dynamics.reduce(shelved, RADICAL_PAIR_LABEL, dynamics.radical_pair_reduction("project"))

    def test_projector_must_be_idempotent(self):
        with pytest.raises(ValueError):
            dynamics.ReductionSpec("project", set(), 2 * np.eye(2))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            dynamics.ReductionSpec("average")
