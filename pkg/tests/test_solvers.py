import math

import numpy as np
import pytest

from ctprior import generator as gen
from ctprior.phantoms import shepp_logan
from ctprior.priors import prox_tv
from ctprior.solvers import (
    Adam,
    DataTerm,
    NumericalError,
    RunTrace,
    SolverConfig,
    TraceRecord,
    adam_step,
    augmented_lagrangian,
    lagrangian_value,
    learning_rate,
    run_dip,
    run_mcdip_admm,
    run_pnp_dip,
)
from ctprior.tomography import ParallelGeometry, projector

from gradcheck import numeric_grad, rel_err


class Identity:
    """Stand-in projector with A = I on a square image."""

    def __init__(self, n):
        self.image_shape = self.sino_shape = (n, n)

        class _G:
            pixel_size = 1.0 / n

        self.geom = _G()

    def forward(self, x):
        return np.array(x, dtype=float)

    adjoint = forward


def tiny_gen(size=4):
    # two upsampling blocks from a 1x1 latent
    return gen.GeneratorConfig(
        latent_shape=(2, size // 4, size // 4),
        blocks=(gen.BlockSpec(3, 4), gen.BlockSpec(3, 1, activation="none", normalize=False)),
        split_layer=1,
    )


def small_instance(size=32, angles=30, sigma=None, seed=0):
    x = shepp_logan(size)
    A = projector(ParallelGeometry.default(size, num_angles=angles))
    y = A.forward(x)
    if sigma:
        y = y + sigma * np.random.default_rng(seed).standard_normal(y.shape)
    return x, DataTerm(A, y)


# ---------------------------------------------------------------- Adam


def test_zero_gradient_leaves_parameters():
    p = np.array([1.0, -2.0])
    new, _ = adam_step(p, np.zeros(2), (np.zeros(2), np.zeros(2)), 1, 0.02)
    np.testing.assert_array_equal(new, p)


def test_first_adam_step_closed_form():
    # bias correction makes m_hat = g and v_hat = g^2 at t = 1
    for g in (3.0, -0.004):
        new, (m, v) = adam_step(np.array([0.5]), np.array([g]), (np.zeros(1), np.zeros(1)), 1, 0.02)
        assert new[0] == pytest.approx(0.5 - 0.02 * g / (abs(g) + 1e-8), rel=1e-15)
        assert m[0] == pytest.approx(0.1 * g) and v[0] == pytest.approx(0.001 * g * g)


def test_constant_gradient_steps_have_magnitude_lr():
    p, mom = np.array([0.0]), (np.zeros(1), np.zeros(1))
    for t in range(1, 50):
        before = p.copy()
        p, mom = adam_step(p, np.array([2.0]), mom, t, 0.01)
        assert before[0] - p[0] == pytest.approx(0.01, rel=1e-6)


def test_learning_rate_schedule():
    assert learning_rate(0) == 0.02 and learning_rate(999) == 0.02
    assert learning_rate(1000) == 0.01 and learning_rate(2500) == 0.005
    assert learning_rate(1000) == 0.5 * learning_rate(999)


def test_adam_class_skips_missing_gradients():
    from ctprior.autodiff import Tensor

    a, b = Tensor(np.ones(2), True), Tensor(np.ones(2), True)
    a.grad = np.ones(2)
    opt = Adam({"a": a, "b": b})
    opt.step()
    assert a.value[0] < 1 and np.all(b.value == 1)
    assert opt.t == 1 and opt.lr == 0.02


# ---------------------------------------------------------------- objective


def test_lagrangian_hand_case():
    data = DataTerm(Identity(2), np.array([[0.0, 0.0], [0.0, 1.0]]))
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    g = np.ones((2, 2))
    u = np.array([[0.0, 1.0], [0.0, 0.0]])
    # F = 1.5, TV = 6, ||x - g + u||^2 = 17, ||u||^2 = 1
    value = lagrangian_value(x, g, u, data, lam=2.0, rho=0.5, edge_length=1.0)
    assert value == pytest.approx(1.5 + 12 + 0.25 * 17 - 0.25 * 1)


def test_lagrangian_reduces_to_fidelity():
    cfg = tiny_gen()
    p = gen.init_params(cfg, 0)
    z = gen.sample_codes(cfg, 1, 0)
    G = gen.image_of(gen.dip_forward(z, p))
    data = DataTerm(Identity(4), np.random.default_rng(1).random((4, 4)))
    value = augmented_lagrangian(G, p, z, np.zeros((4, 4)), data, SolverConfig(lam=0.0), multi_code=False)
    assert value == pytest.approx(data.value(G), rel=1e-14)


@pytest.mark.parametrize("multi", [False, True])
def test_lagrangian_gradient_matches_finite_differences(multi):
    cfg = tiny_gen()
    rs = np.random.default_rng(4)
    p = gen.init_params(cfg, 3, num_codes=2 if multi else None)
    codes = gen.sample_codes(cfg, 2 if multi else 1, 3)
    data = DataTerm(Identity(4), rs.random((4, 4)))
    x, u = rs.random((4, 4)), 0.1 * rs.standard_normal((4, 4))
    config = SolverConfig(rho=0.7, lam=0.3)
    augmented_lagrangian(x, p, codes, u, data, config, multi_code=multi, return_grad=True)
    for name, t in p.tensors().items():
        if name == "block0.bias":
            continue  # removed by the following instance norm
        fd = numeric_grad(lambda: augmented_lagrangian(x, p, codes, u, data, config, multi_code=multi), t.value)
        assert rel_err(t.grad, fd) <= 1e-4, name


def test_data_term_poisson_scale_gradient():
    A = projector(ParallelGeometry.default(8, num_angles=6))
    rs = np.random.default_rng(2)
    x = rs.uniform(0.2, 1.0, (8, 8))
    y = rs.poisson(50 * A.forward(x) + 0.1).astype(float)
    data = DataTerm(A, y, "poisson", scale=50.0)
    _, g = data.value_and_grad(x)
    assert rel_err(g, numeric_grad(lambda: data.value(x), x)) <= 1e-6
    with pytest.raises(ValueError):
        DataTerm(A, y[:2], "l2")
    with pytest.raises(ValueError):
        DataTerm(A, y, "huber")


# ---------------------------------------------------------------- traces


def test_run_trace_best_and_ordering():
    tr = RunTrace()
    for t, p in ((25, 10.0), (50, 12.0), (75, 11.0)):
        tr.add(TraceRecord(t, p, 0.5, 1.0, 2.0), np.full((2, 2), t))
    assert tr.best_t == 50 and tr.best.psnr == 12.0 == tr.column("psnr").max()
    assert tr.best_image[0, 0] == 50 and tr.final.t == 75
    with pytest.raises(ValueError):
        tr.add(TraceRecord(75, 1.0, 0, 0, 0), np.zeros((2, 2)))
    assert [r["t"] for r in tr.rows()] == [25, 50, 75]


def test_solver_config_validation():
    for bad in (dict(rho=0), dict(lam=-1), dict(num_codes=0), dict(iterations=0), dict(fidelity="l1"),
                dict(base_lr=0), dict(record_every=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# ---------------------------------------------------------------- loops


def test_dip_noise_free_fidelity_drops_100x():
    x, data = small_instance(32, angles=30)
    cfg = SolverConfig(iterations=2000, record_every=25)
    _, trace = run_dip(data, cfg, truth=x)
    p = gen.init_params(gen.GeneratorConfig.for_image(32), 0)
    g0 = gen.image_of(gen.dip_forward(gen.sample_codes(gen.GeneratorConfig.for_image(32), 1, 0), p))
    assert trace.final.fidelity <= data.value(g0) / 100
    assert len(trace.records) == math.ceil(2000 / 25)


def test_trace_length_and_cadence():
    x, data = small_instance(16, angles=10)
    _, trace = run_pnp_dip(data, SolverConfig(iterations=60, record_every=25, lam=0.001), truth=x)
    assert [r.t for r in trace.records] == [25, 50, 60]
    assert all(math.isfinite(r.lagrangian) for r in trace.records)


def test_runs_are_deterministic():
    x, data = small_instance(16, angles=10, sigma=0.01)
    cfg = SolverConfig(iterations=40, record_every=10, num_codes=3, lam=0.002)
    a = run_mcdip_admm(data, cfg, truth=x)
    b = run_mcdip_admm(data, cfg, truth=x)
    assert a[1].rows() == b[1].rows()
    np.testing.assert_array_equal(a[0], b[0])
    c = run_mcdip_admm(data, SolverConfig(iterations=40, record_every=10, num_codes=3, lam=0.002, seed=1), truth=x)
    assert c[1].rows() != a[1].rows()


def test_first_dual_update():
    _, data = small_instance(16, angles=10)
    cfg = SolverConfig(iterations=1, lam=0.01)
    gcfg = gen.GeneratorConfig.for_image(16)
    p0 = gen.init_params(gcfg, 0)
    g0 = gen.image_of(gen.dip_forward(gen.sample_codes(gcfg, 1, 0), p0))
    seen = {}
    run_pnp_dip(data, cfg, callback=lambda t, x, g, u: seen.update(x=x, g=g, u=u))
    np.testing.assert_allclose(seen["x"], prox_tv(g0, 0.01, 1 / 16), atol=1e-12)
    np.testing.assert_allclose(seen["u"], seen["x"] - seen["g"], atol=1e-15)


def test_reduction_to_pnp_dip():
    x, data = small_instance(16, angles=10, sigma=0.01)
    cfg = SolverConfig(iterations=50, record_every=1, num_codes=1, lam=0.003, freeze_alphas=True)
    xs_pnp, xs_mc = [], []
    run_pnp_dip(data, cfg, callback=lambda t, x, g, u: xs_pnp.append(x.copy()))
    run_mcdip_admm(data, cfg, callback=lambda t, x, g, u: xs_mc.append(x.copy()))
    assert max(np.abs(a - b).max() for a, b in zip(xs_pnp, xs_mc)) <= 1e-10


def test_pnp_without_regulariser_tracks_dip():
    x, data = small_instance(16, angles=12, sigma=0.01)
    cfg = SolverConfig(iterations=400, lam=0.0, rho=1e-4)
    dip = run_dip(data, cfg, truth=x)[1].final.psnr
    pnp = run_pnp_dip(data, cfg, truth=x)[1].final.psnr
    assert abs(dip - pnp) <= 1.0


def test_dual_residual_stays_bounded():
    x, data = small_instance(16, angles=12, sigma=0.02)
    norms = []
    run_mcdip_admm(data, SolverConfig(iterations=300, num_codes=4, lam=0.004, tv_edge_length=1.0),
                   callback=lambda t, x, g, u: norms.append(np.linalg.norm(x - g)))
    assert max(norms) <= 10 * norms[0]


def test_non_finite_data_aborts_with_diagnostic():
    x, data = small_instance(16, angles=10)
    data.y[0, 0] = np.nan
    with pytest.raises(NumericalError, match="iteration"):
        run_dip(data, SolverConfig(iterations=5), truth=x)
