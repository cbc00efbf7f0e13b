import numpy as np
import pytest

from adamuon.checks import GRAD_CHECK_SPECS, grad_check, relative_grad_error
from adamuon.densecore import ShapeError
from adamuon.optim import ShapeClass, shape_class
from adamuon.problems import (
    DivergenceError,
    ProblemKind,
    ProblemSpec,
    finite_diff_grad,
    loss_and_grad,
    make_problem,
)
from adamuon.rng import SplitMix64, derive_seed


def test_splitmix_reference_vectors():
    assert SplitMix64(0).next_u64(3).tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert int(SplitMix64(1234567).next_u64(1)[0]) == 6457827717110365317


def test_splitmix_vector_draws_match_sequential():
    a, b = SplitMix64(42), SplitMix64(42)
    batched = a.next_u64(10)
    single = np.concatenate([b.next_u64(1) for _ in range(10)])
    assert np.array_equal(batched, single) and a.state == b.state


def test_uniform_and_normal_ranges():
    rng = SplitMix64(3)
    u = rng.uniform(10_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = SplitMix64(4).normal((200, 50))
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1.0) < 0.03


def test_derive_seed_separates_streams():
    assert derive_seed(7, 1) != derive_seed(7, 2) != derive_seed(8, 1)


@pytest.mark.parametrize("kind", list(ProblemKind))
def test_make_problem_deterministic(kind):
    dims, noise = GRAD_CHECK_SPECS[kind]
    a = make_problem(ProblemSpec(kind, dims, noise, seed=11))
    b = make_problem(ProblemSpec(kind, dims, noise, seed=11))
    assert a.data.keys() == b.data.keys()
    assert all(np.array_equal(a.data[k], b.data[k]) for k in a.data)
    c = make_problem(ProblemSpec(kind, dims, noise, seed=12))
    assert not all(np.array_equal(a.data[k], c.data[k]) for k in a.data if k != "labels")


def test_quadratic_optimum_and_closed_form_gradient():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (4, 4), seed=1))
    target = p.data["target"]
    loss, grads = loss_and_grad(p, {"w": target.copy()})
    assert loss == 0.0 and not grads["w"].any()
    e = np.random.default_rng(0).standard_normal((4, 4))
    _, grads = loss_and_grad(p, {"w": target + e})
    # (t + e) - t can differ from e by an ulp of t
    assert np.abs(grads["w"] - e).max() <= 4 * np.spacing(np.abs(target).max() + np.abs(e).max())


def test_mlp2_parameter_layout():
    p = make_problem(ProblemSpec(ProblemKind.MLP2, (20, 5, 7, 3)))
    shapes = dict(p.param_shapes)
    assert shapes == {"w1": (5, 7), "b1": (1, 7), "w2": (7, 3), "b2": (1, 3)}
    classes = {name: shape_class(s) for name, s in shapes.items()}
    assert [n for n, c in classes.items() if c is ShapeClass.MATRIX_2D] == ["w1", "w2"]
    assert [n for n, c in classes.items() if c is ShapeClass.VECTOR_1D] == ["b1", "b2"]


def test_init_params_shapes_and_biases():
    p = make_problem(ProblemSpec(ProblemKind.MLP2, (20, 5, 7, 3)))
    params = p.init_params(0)
    assert not params["b1"].any() and not params["b2"].any()
    assert all(params[n].shape == s for n, s in p.param_shapes)
    assert np.array_equal(params["w1"], p.init_params(0)["w1"])


def test_problem_data_read_only():
    p = make_problem(ProblemSpec(ProblemKind.MATRIX_REGRESSION, (10, 3, 2)))
    with pytest.raises(ValueError):
        p.data["x"][0, 0] = 1.0


@pytest.mark.parametrize(
    "kind,dims",
    [
        (ProblemKind.QUADRATIC_ALIGN, (3,)),
        (ProblemKind.MATRIX_REGRESSION, (10, 0, 2)),
        (ProblemKind.MLP2, (10, 3, 4, 1)),
    ],
)
def test_invalid_dims(kind, dims):
    with pytest.raises(ValueError):
        ProblemSpec(kind, dims)


def test_param_mismatch_rejected():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (3, 3)))
    with pytest.raises(ShapeError):
        p.loss({"w": np.zeros((3, 2))})
    with pytest.raises(ShapeError):
        p.loss({"v": np.zeros((3, 3))})


def test_divergence_raised_on_overflow():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (2, 2)))
    with np.errstate(over="ignore"):
        with pytest.raises(DivergenceError):
            p.loss_and_grad({"w": np.full((2, 2), 1e300)})


def test_fd_matches_quadratic_closed_form():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (4, 5), seed=3))
    params = p.init_params(3)
    _, grads = p.loss_and_grad(params)
    fd = finite_diff_grad(p, params, 1e-5)
    assert np.abs(fd["w"] - grads["w"]).max() < 1e-7


@pytest.mark.parametrize("h", [1e-3, 0.5, 10.0])
def test_fd_exact_on_quadratic_for_any_h(h):
    # central differences are exact on polynomials of degree <= 2
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (3, 3), seed=4))
    params = {"w": np.zeros((3, 3))}
    _, grads = p.loss_and_grad(params)
    assert np.abs(finite_diff_grad(p, params, h)["w"] - grads["w"]).max() < 1e-9 * max(1.0, h)


def test_fd_rejects_nonpositive_h():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (2, 2)))
    with pytest.raises(ValueError):
        finite_diff_grad(p, p.init_params(0), 0.0)


def test_relative_grad_error_normwise():
    a = {"w": np.array([[1.0, 1e-12]])}
    n = {"w": np.array([[1.0, 2e-12]])}
    assert relative_grad_error(a, n) == pytest.approx(1e-12)


@pytest.mark.parametrize("kind", list(ProblemKind))
@pytest.mark.parametrize("seed", range(5))
def test_gradient_check(kind, seed):
    assert grad_check(kind, seed) < 1e-5


def _gd_losses(p, params, lr, steps):
    losses = []
    for _ in range(steps):
        loss, grads = p.loss_and_grad(params)
        losses.append(loss)
        params = {k: v - lr * grads[k] for k, v in params.items()}
    return losses


def test_convexity_witness_quadratic():
    p = make_problem(ProblemSpec(ProblemKind.QUADRATIC_ALIGN, (6, 4), seed=5))
    losses = _gd_losses(p, p.init_params(5), 0.1, 100)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_convexity_witness_regression():
    p = make_problem(ProblemSpec(ProblemKind.MATRIX_REGRESSION, (40, 6, 3), noise=0.1, seed=6))
    x = p.data["x"]
    assert np.linalg.matrix_rank(x) == x.shape[1]
    sigma_max = np.linalg.svd(x, compute_uv=False)[0]
    losses = _gd_losses(p, p.init_params(6), 0.1 / sigma_max**2, 200)
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]
