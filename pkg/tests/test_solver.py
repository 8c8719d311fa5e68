import math

import numpy as np
import pytest

from elastinv.dtn import BackgroundMedium
from elastinv.fem import MaterialField, build_disk_mesh, incident_field, project_material
from elastinv.solver import (
    FrequencyContext,
    adjoint_gradient,
    boundary_inner,
    boundary_norm,
    derivative_apply,
    near_field,
    parameter_inner,
    phaseless,
    solve_adjoint,
    solve_boundary_datum,
    solve_forward,
)
from oracles import exterior_mode, exterior_mode_field

MEDIUM = BackgroundMedium()


@pytest.fixture(scope="module")
def mesh0():
    return build_disk_mesh(1.0, 0, coarse_points=64)


@pytest.fixture(scope="module")
def mesh1():
    return build_disk_mesh(1.0, 0)


def smooth_field(mesh, seed, amp=0.3):
    rng = np.random.default_rng(seed)
    x, y = mesh.nodes.T
    comps = []
    for _ in range(3):
        c = rng.uniform(-0.4, 0.4, 2)
        comps.append(rng.uniform(-amp, amp) * np.exp(-10 * ((x - c[0]) ** 2 + (y - c[1]) ** 2)))
    return project_material(MaterialField(*comps), mesh)


def incident_trace(ctx, kind, angle):
    ring = ctx.mesh.nodes[ctx.mesh.boundary_ring]
    return incident_field(kind, angle, ctx.freq.waves, ring)


def test_q_zero_reproduces_incident_wave_with_second_order_convergence():
    errs = []
    for level in (0, 1, 2):
        mesh = build_disk_mesh(1.0, level)
        ctx = FrequencyContext(mesh, MEDIUM, 1.0).at(MaterialField.zeros(mesh.n_nodes))
        sol = solve_forward(ctx, "P", 0.0)
        exact = incident_trace(ctx, "P", 0.0)
        errs.append(np.linalg.norm(sol.trace - exact) / np.linalg.norm(exact))
    assert errs[1] < 2.5e-4
    for a, b in zip(errs, errs[1:]):
        assert 3.5 < a / b < 4.5


@pytest.mark.parametrize("kind", ["P", "S"])
def test_q_zero_full_field(mesh1, kind):
    ctx = FrequencyContext(mesh1, MEDIUM, 2.0).at(MaterialField.zeros(mesh1.n_nodes))
    sol = solve_forward(ctx, kind, 0.7)
    exact = incident_field(kind, 0.7, ctx.freq.waves, mesh1.nodes)
    assert np.abs(sol.u - exact).max() < 5e-3
    assert sol.residual < 1e-10


def test_linear_in_boundary_datum(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 2.0).at(smooth_field(mesh0, 0))
    rng = np.random.default_rng(1)
    p = mesh0.boundary_points
    g1 = rng.normal(size=(p, 2)) + 1j * rng.normal(size=(p, 2))
    g2 = rng.normal(size=(p, 2)) + 1j * rng.normal(size=(p, 2))
    a, b = 0.3 - 1.2j, 2.0 + 0.5j
    lhs = solve_boundary_datum(ctx, a * g1 + b * g2).u
    rhs = a * solve_boundary_datum(ctx, g1).u + b * solve_boundary_datum(ctx, g2).u
    assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(lhs).max()


def test_incident_load_is_superposition(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 1.5).at(smooth_field(mesh0, 2))
    u1 = solve_forward(ctx, "P", 0.3).u
    u2 = solve_forward(ctx, "S", 1.0).u
    from elastinv.fem import boundary_load

    g = boundary_load("P", 0.3, ctx.freq.waves, MEDIUM, ctx.freq.dtn) + boundary_load(
        "S", 1.0, ctx.freq.waves, MEDIUM, ctx.freq.dtn
    )
    assert np.abs(solve_boundary_datum(ctx, g).u - (u1 + u2)).max() < 1e-10


def test_manufactured_radiating_field(mesh1):
    # with q = 0 and datum T u - B u of a radiating mode the solution is the mode
    omega = 2.0
    ctx = FrequencyContext(mesh1, MEDIUM, omega).at(MaterialField.zeros(mesh1.n_nodes))
    w = ctx.freq.waves
    theta = ctx.freq.dtn.angles
    u, t = exterior_mode(1, 1.0, 0.5j, w.kp, w.ks, MEDIUM.lambda0, MEDIUM.mu0, 1.0, theta)
    from elastinv.dtn import apply_dtn

    # the radiating field is singular at 0; use it as a boundary datum only:
    # T u - B u = 0, so the discrete solution must vanish
    g = t - apply_dtn(ctx.freq.dtn, u)
    sol = solve_boundary_datum(ctx, g)
    assert np.abs(sol.u).max() < 1e-8
    # sanity: the oracle field agrees with itself off the boundary
    assert np.allclose(exterior_mode_field(1, 1.0, 0.5j, w.kp, w.ks, np.column_stack([np.cos(theta), np.sin(theta)])), u)


def test_phaseless_invariant_under_global_phase(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 1.0).at(smooth_field(mesh0, 3))
    tr = near_field(solve_forward(ctx, "P", 0.0))
    assert np.allclose(phaseless(tr), phaseless(np.exp(0.7j) * tr), rtol=1e-14)
    assert np.all(phaseless(tr) >= 0)


def test_zero_adjoint_datum(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 1.0).at(smooth_field(mesh0, 4))
    adj = solve_adjoint(ctx, np.zeros((mesh0.boundary_points, 2)))
    assert not np.any(adj.phi)


def test_factorisation_reused(mesh0):
    q = smooth_field(mesh0, 5)
    freq = FrequencyContext(mesh0, MEDIUM, 3.0)
    ctx = freq.at(q)
    a = solve_forward(ctx, "P", 0.1).u
    solve_forward(ctx, "S", 0.4)
    solve_adjoint(ctx, np.ones((mesh0.boundary_points, 2)))
    assert ctx.factorizations == 1
    fresh = FrequencyContext(mesh0, MEDIUM, 3.0).at(q)
    assert np.abs(solve_forward(fresh, "P", 0.1).u - a).max() <= 1e-12 * np.abs(a).max()


@pytest.mark.parametrize("kind", ["P", "S"])
@pytest.mark.parametrize("omega", [1.0, 5.0])
def test_discrete_adjoint_identity(mesh0, kind, omega):
    ctx = FrequencyContext(mesh0, MEDIUM, omega).at(smooth_field(mesh0, 6))
    base = solve_forward(ctx, kind, 0.5)
    rng = np.random.default_rng(int(omega) + (kind == "S"))
    wgt = ctx.freq.dtn.quadrature_weight
    for k in range(5):
        dq = smooth_field(mesh0, 100 + k)
        h = rng.normal(size=(mesh0.boundary_points, 2)) + 1j * rng.normal(size=(mesh0.boundary_points, 2))
        lhs = boundary_inner(wgt, derivative_apply(ctx, base, dq), h)
        g = adjoint_gradient(ctx, base.u, solve_adjoint(ctx, h).phi)
        rhs = parameter_inner(mesh0, dq, g)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-14)


def test_phaseless_adjoint_identity(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 2.0).at(smooth_field(mesh0, 7))
    base = solve_forward(ctx, "P", 0.2)
    wgt = ctx.freq.dtn.quadrature_weight
    rng = np.random.default_rng(8)
    for k in range(3):
        dq = smooth_field(mesh0, 200 + k)
        hbar = rng.normal(size=mesh0.boundary_points)
        # F'(dq) = 2 Re(conj(u) . N'(dq))
        fprime = 2 * np.real(np.sum(np.conj(base.trace) * derivative_apply(ctx, base, dq), axis=1))
        lhs = wgt * np.sum(fprime * hbar)
        g = 2 * adjoint_gradient(ctx, base.u, solve_adjoint(ctx, hbar[:, None] * base.trace).phi).real
        rhs = np.sum(mesh0.lumped_mass() * dq.as_array() * g)
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_density_component_only(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 2.0).at(smooth_field(mesh0, 9))
    base = solve_forward(ctx, "P", 0.0)
    phi = solve_adjoint(ctx, np.ones((mesh0.boundary_points, 2))).phi
    full = adjoint_gradient(ctx, base.u, phi)
    dens = adjoint_gradient(ctx, base.u, phi, components=(2,))
    assert np.array_equal(dens[2], full[2])
    assert not np.any(dens[:2])


@pytest.mark.parametrize("kind", ["P", "S"])
def test_taylor_remainder_second_order(mesh0, kind):
    freq = FrequencyContext(mesh0, MEDIUM, 2.0)
    q = smooth_field(mesh0, 10)
    ctx = freq.at(q)
    base = solve_forward(ctx, kind, 0.3)
    dq = smooth_field(mesh0, 11, amp=0.2)
    lin = derivative_apply(ctx, base, dq)
    rem = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        pert = MaterialField.from_array(q.as_array() + eps * dq.as_array())
        tr = solve_forward(freq.at(pert), kind, 0.3).trace
        rem.append(np.abs(tr - base.trace - eps * lin).max())
    for a, b in zip(rem, rem[1:]):
        assert 3.6 < a / b < 4.4


def test_derivative_linear(mesh0):
    ctx = FrequencyContext(mesh0, MEDIUM, 2.0).at(smooth_field(mesh0, 12))
    base = solve_forward(ctx, "P", 0.0)
    a, b = smooth_field(mesh0, 13), smooth_field(mesh0, 14)
    both = MaterialField.from_array(2 * a.as_array() - 3 * b.as_array())
    lhs = derivative_apply(ctx, base, both)
    rhs = 2 * derivative_apply(ctx, base, a) - 3 * derivative_apply(ctx, base, b)
    assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(lhs).max()
    zero = derivative_apply(ctx, base, MaterialField.zeros(mesh0.n_nodes))
    assert not np.any(zero)


def test_boundary_norm_of_constant():
    w = 2 * math.pi / 64
    assert boundary_norm(w, np.ones((64, 2))) == pytest.approx(math.sqrt(4 * math.pi))


def test_radius_mismatch(mesh0):
    with pytest.raises(ValueError):
        FrequencyContext(mesh0, BackgroundMedium(radius=2.0), 1.0)
