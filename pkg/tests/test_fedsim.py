"""Tests for fedsim module"""
import numpy as np
import polars as pl
import pytest

from fedge_energy.core.errors import DivergenceError, InvalidInputError
from fedge_energy.core.fedsim import (
    DeviceData,
    ModelParams,
    average_params,
    centralized_descent,
    device_loss_grad,
    federated_round,
    global_loss,
    local_update,
    make_synthetic_datasets,
    run_training,
    sample_loss,
    stability_threshold,
)


def test_sample_loss():
    """Test the squared error of one sample"""
    assert sample_loss(np.array([0.0]), np.array([1.0]), 2.0) == 2.0
    assert sample_loss(np.array([1.0, 1.0]), np.array([1.0, 2.0]), 3.0) == 0.0


def test_device_loss_grad_single_sample(single_sample):
    """Test loss and gradient at w = 0 for x = 1, y = 2"""
    loss, gradient = device_loss_grad(np.zeros(1), single_sample[0])
    assert loss == 2.0
    np.testing.assert_allclose(gradient, [-2.0])


def test_device_loss_grad_matches_finite_differences(synthetic_datasets):
    """Test the analytic gradient against central differences"""
    data = synthetic_datasets[0]
    w = np.array([0.3, -1.2, 0.7])
    _, gradient = device_loss_grad(w, data)
    step = 1e-6
    numeric = np.array([
        (device_loss_grad(w + step * e, data)[0] - device_loss_grad(w - step * e, data)[0]) / (2 * step)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(gradient, numeric, rtol=1e-6, atol=1e-8)


def test_global_loss_weights_by_sample_count():
    """Test that device losses are weighted by dataset size"""
    datasets = [
        DeviceData(inputs=[[1.0]], targets=[np.sqrt(8.0)]),
        DeviceData(inputs=[[1.0], [1.0], [1.0]], targets=[0.0, 0.0, 0.0]),
    ]
    assert global_loss(np.zeros(1), datasets) == pytest.approx(1.0)


def test_device_data_validation():
    """Test that datasets need matching, nonempty samples"""
    with pytest.raises(InvalidInputError, match="do not match"):
        DeviceData(inputs=[[1.0], [2.0]], targets=[1.0])
    with pytest.raises(InvalidInputError, match="empty"):
        DeviceData(inputs=np.zeros((0, 2)), targets=np.zeros(0))


def test_model_params_must_be_finite():
    """Test that non-finite parameters are rejected"""
    with pytest.raises(DivergenceError, match="finite"):
        ModelParams(np.array([1.0, np.nan]))


def test_federated_round_single_sample(single_sample):
    """Test two local steps of size 0.5 from w = 0"""
    w = federated_round(np.zeros(1), single_sample, learning_rate=0.5, local_iters=2)
    np.testing.assert_allclose(w, [1.5])


def test_federated_round_order_invariant(synthetic_datasets):
    """Test that permuting devices leaves the average unchanged"""
    w0 = np.array([0.1, 0.2, -0.3])
    forward = federated_round(w0, synthetic_datasets, 0.05, 3)
    backward = federated_round(w0, synthetic_datasets[::-1], 0.05, 3)
    np.testing.assert_array_equal(forward, backward)


def test_federated_round_rejects_bad_arguments(single_sample):
    """Test learning rate and local iteration checks"""
    with pytest.raises(InvalidInputError, match="Learning rate must be positive"):
        federated_round(np.zeros(1), single_sample, 0.0, 1)
    with pytest.raises(InvalidInputError, match="at least one local iteration"):
        federated_round(np.zeros(1), single_sample, 0.1, 0)


def test_one_local_step_equals_centralized_descent(synthetic_datasets):
    """Test that N = 1 with equal dataset sizes is plain gradient descent on the pooled data"""
    trajectory = run_training(synthetic_datasets, learning_rate=0.1, global_iters=5, local_iters=1)
    path = centralized_descent(synthetic_datasets, learning_rate=0.1, rounds=5)
    for federated, central in zip(trajectory.params, path):
        np.testing.assert_allclose(federated, central, rtol=1e-12, atol=1e-14)


def test_weighted_average():
    """Test the sample-size weighted mean"""
    averaged = average_params([np.array([1.0]), np.array([4.0])], weights=[2, 1])
    np.testing.assert_allclose(averaged, [2.0])


def test_loss_decreases_below_stability_threshold(synthetic_datasets):
    """Test monotone global loss for a small learning rate"""
    eta = 0.1 * stability_threshold(synthetic_datasets)
    trajectory = run_training(synthetic_datasets, eta, global_iters=10, local_iters=2)
    assert len(trajectory) == 11
    assert all(later < earlier for earlier, later in zip(trajectory.losses, trajectory.losses[1:]))


def test_weighted_training_on_unequal_devices():
    """Test that sample-weighted averaging also converges"""
    datasets = make_synthetic_datasets(3, [10, 30, 60], dimension=2, seed=4)
    eta = 0.1 * stability_threshold(datasets)
    trajectory = run_training(datasets, eta, global_iters=8, local_iters=2, weighted=True)
    assert trajectory.weighted
    assert trajectory.device_sizes == [10, 30, 60]
    assert trajectory.final_loss < trajectory.losses[0]


def test_zero_rounds(synthetic_datasets):
    """Test that M = 0 returns only the initial point"""
    w0 = np.array([1.0, 2.0, 3.0])
    trajectory = run_training(synthetic_datasets, 0.1, global_iters=0, local_iters=4, w0=w0)
    assert len(trajectory) == 1
    np.testing.assert_array_equal(trajectory.final_params.weights, w0)
    assert trajectory.final_loss == pytest.approx(global_loss(w0, synthetic_datasets))


def test_divergence_is_reported(single_sample):
    """Test that a learning rate far above the threshold raises"""
    with pytest.raises(DivergenceError, match="diverged"):
        run_training(single_sample, learning_rate=1e3, global_iters=1, local_iters=200)


def test_local_update_divergence_names_device(single_sample):
    """Test that the local step which left the finite range is reported with its device"""
    with pytest.raises(DivergenceError, match="Device 3 diverged at local step") as excinfo:
        local_update(np.zeros(1), single_sample[0], learning_rate=1e3, local_iters=200, device=3)
    assert isinstance(excinfo.value.__cause__, DivergenceError)
    assert "finite" in str(excinfo.value.__cause__)


def test_mismatched_dimensions():
    """Test that devices must share the input dimension"""
    datasets = [DeviceData(inputs=[[1.0]], targets=[1.0]), DeviceData(inputs=[[1.0, 2.0]], targets=[1.0])]
    with pytest.raises(InvalidInputError, match="share the input dimension"):
        run_training(datasets, 0.1, 1, 1)


def test_synthetic_datasets_are_reproducible():
    """Test the fixed-seed generator"""
    first = make_synthetic_datasets(2, [5, 7], dimension=4, seed=11)
    second = make_synthetic_datasets(2, [5, 7], dimension=4, seed=11)
    assert [d.size for d in first] == [5, 7]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.targets, b.targets)
    with pytest.raises(InvalidInputError, match="nonempty dataset"):
        make_synthetic_datasets(2, [5], seed=1)


def test_trajectory_frame_and_csv(synthetic_datasets, tmp_path):
    """Test the trajectory table and its CSV file"""
    trajectory = run_training(synthetic_datasets, 0.05, global_iters=3, local_iters=2)
    frame = trajectory.to_frame()
    assert frame.columns == ["round", "global_loss", "w_0", "w_1", "w_2"]
    assert frame["round"].to_list() == [0, 1, 2, 3]

    path = trajectory.write_csv(tmp_path / "trajectory.csv")
    loaded = pl.read_csv(path)
    assert loaded.height == 4
    np.testing.assert_allclose(loaded["global_loss"].to_numpy(), trajectory.losses)
