"""
Federated batch gradient descent on linear regression

Each global round broadcasts the parameters, runs N full-batch descent
steps on every device and averages the uploaded parameters. The M x N
schedule is the one the energy model prices.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import polars as pl
from loguru import logger

from .errors import DivergenceError, InvalidInputError


@dataclass(frozen=True)
class DeviceData:
    """Samples held by one device: inputs of shape (n, d) and targets of shape (n,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.atleast_1d(np.asarray(self.targets, dtype=float))
        if inputs.shape[0] == 0:
            raise InvalidInputError("Device dataset is empty")
        if targets.shape != (inputs.shape[0],):
            raise InvalidInputError(f"Targets {targets.shape} do not match {inputs.shape[0]} samples")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def size(self) -> int:
        return int(self.targets.size)

    @property
    def dimension(self) -> int:
        return int(self.inputs.shape[1])


Dataset = Sequence[DeviceData]


@dataclass(frozen=True)
class ModelParams:
    """Global or local parameter vector; construction rejects non-finite weights."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not np.all(np.isfinite(weights)):
            raise DivergenceError("Model parameters must be finite")
        object.__setattr__(self, "weights", weights)


@dataclass
class TrainingTrajectory:
    """Global parameters and loss after every round, round 0 being the initial point."""

    params: List[np.ndarray]
    losses: List[float]
    learning_rate: float
    global_iters: int
    local_iters: int
    weighted: bool = False
    device_sizes: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.params)

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def final_params(self) -> ModelParams:
        return ModelParams(self.params[-1])

    def to_frame(self) -> pl.DataFrame:
        """Columns round, global_loss, w_0, w_1, ..."""
        stacked = np.vstack(self.params)
        data = {"round": list(range(len(self.params))), "global_loss": self.losses}
        for j in range(stacked.shape[1]):
            data[f"w_{j}"] = stacked[:, j]
        return pl.DataFrame(data, schema_overrides={"round": pl.Int64, "global_loss": pl.Float64})

    def write_csv(self, file_path: Union[str, Path]) -> Path:
        from .io_handlers import _validate_output_path

        file_path = _validate_output_path(Path(file_path))
        self.to_frame().write_csv(file_path)
        logger.info(f"Wrote {len(self)} trajectory rows to {file_path}")
        return file_path


def _check_weights(w: np.ndarray, dimension: int) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (dimension,):
        raise InvalidInputError(f"Parameters of shape {w.shape} do not match input dimension {dimension}")
    return w


def sample_loss(w: np.ndarray, x: np.ndarray, y: float) -> float:
    """Squared error 1/2 (y - w^T x)^2 of one sample."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = _check_weights(w, x.size)
    residual = float(y) - float(w @ x)
    return 0.5 * residual * residual


def device_loss_grad(w: np.ndarray, data: DeviceData) -> Tuple[float, np.ndarray]:
    """
    Average loss of a device and its gradient.

    Returns:
        (loss, gradient) with gradient = mean of -(y_i - w^T x_i) x_i
    """
    w = _check_weights(w, data.dimension)
    residuals = data.targets - data.inputs @ w
    loss = 0.5 * float(residuals @ residuals) / data.size
    gradient = -(data.inputs.T @ residuals) / data.size
    return loss, gradient


def global_loss(w: np.ndarray, datasets: Dataset) -> float:
    """Sample-weighted mean of device losses."""
    if not datasets:
        raise InvalidInputError("At least one device dataset is required")
    sizes = [d.size for d in datasets]
    weighted = [d.size * device_loss_grad(w, d)[0] for d in datasets]
    return math.fsum(weighted) / sum(sizes)


def local_update(w: np.ndarray, data: DeviceData, learning_rate: float, local_iters: int, device: int = 0) -> np.ndarray:
    """
    N full-batch descent steps from ``w`` on one device.

    Raises:
        DivergenceError: If the parameters become non-finite
    """
    w = _check_weights(w, data.dimension).copy()
    for step in range(local_iters):
        _, gradient = device_loss_grad(w, data)
        try:
            w = ModelParams(w - learning_rate * gradient).weights
        except DivergenceError as e:
            raise DivergenceError(f"Device {device} diverged at local step {step + 1}") from e
    return w


def average_params(params: Sequence[np.ndarray], weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Coordinate-wise (weighted) mean with exactly rounded sums.

    The result does not depend on the order of ``params``.
    """
    stacked = np.vstack(params)
    if weights is None:
        return np.array([math.fsum(column) for column in stacked.T]) / stacked.shape[0]
    weights = np.asarray(weights, dtype=float)
    total = math.fsum(weights)
    return np.array([math.fsum(column * weights) for column in stacked.T]) / total


def federated_round(
    w_global: np.ndarray,
    datasets: Dataset,
    learning_rate: float,
    local_iters: int,
    weighted: bool = False,
) -> np.ndarray:
    """
    One global iteration: broadcast, N local descent steps per device, average.

    Averaging is unweighted unless ``weighted`` asks for sample-size weights.
    """
    if not learning_rate > 0:
        raise InvalidInputError(f"Learning rate must be positive, got {learning_rate}")
    if local_iters < 1:
        raise InvalidInputError(f"Need at least one local iteration, got {local_iters}")
    if not datasets:
        raise InvalidInputError("At least one device dataset is required")
    uploads = [local_update(w_global, data, learning_rate, local_iters, device=k) for k, data in enumerate(datasets)]
    sizes = [d.size for d in datasets] if weighted else None
    return ModelParams(average_params(uploads, sizes)).weights


def run_training(
    datasets: Dataset,
    learning_rate: float,
    global_iters: int,
    local_iters: int,
    w0: Optional[np.ndarray] = None,
    weighted: bool = False,
) -> TrainingTrajectory:
    """Apply federated_round M times, recording the global loss after every round."""
    if not datasets:
        raise InvalidInputError("At least one device dataset is required")
    if global_iters < 0:
        raise InvalidInputError(f"Global iterations must be non-negative, got {global_iters}")
    dimension = datasets[0].dimension
    if any(d.dimension != dimension for d in datasets):
        raise InvalidInputError("All devices must share the input dimension")
    w = np.zeros(dimension) if w0 is None else _check_weights(w0, dimension).copy()

    params = [w]
    losses = [global_loss(w, datasets)]
    for round_index in range(global_iters):
        w = federated_round(w, datasets, learning_rate, local_iters, weighted=weighted)
        params.append(w)
        losses.append(global_loss(w, datasets))
        logger.debug(f"Round {round_index + 1}/{global_iters}: global loss {losses[-1]:.6e}")
    logger.info(f"Federated training finished: {global_iters} rounds, final loss {losses[-1]:.6e}")
    return TrainingTrajectory(
        params=params,
        losses=losses,
        learning_rate=learning_rate,
        global_iters=global_iters,
        local_iters=local_iters,
        weighted=weighted,
        device_sizes=[d.size for d in datasets],
    )


def centralized_descent(
    datasets: Dataset,
    learning_rate: float,
    rounds: int,
    w0: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """Plain gradient descent on the pooled data, one step per round."""
    pooled = DeviceData(
        inputs=np.vstack([d.inputs for d in datasets]),
        targets=np.concatenate([d.targets for d in datasets]),
    )
    w = np.zeros(pooled.dimension) if w0 is None else _check_weights(w0, pooled.dimension).copy()
    path = [w]
    for _ in range(rounds):
        w = w - learning_rate * device_loss_grad(w, pooled)[1]
        path.append(w)
    return path


def stability_threshold(datasets: Dataset) -> float:
    """1 / L with L the largest eigenvalue of X^T X / n over all devices."""
    largest = max(float(np.linalg.eigvalsh(d.inputs.T @ d.inputs / d.size)[-1]) for d in datasets)
    return 1.0 / largest


def make_synthetic_datasets(
    num_devices: int,
    samples: Union[int, Sequence[int]],
    dimension: int = 3,
    noise: float = 0.1,
    seed: int = 0,
) -> List[DeviceData]:
    """
    Fixed-seed linear model y = theta^T x + noise, split across devices.

    ``samples`` is either one count for every device or one per device.
    """
    if num_devices < 1:
        raise InvalidInputError(f"Need at least one device, got {num_devices}")
    counts = [samples] * num_devices if isinstance(samples, int) else list(samples)
    if len(counts) != num_devices or any(c < 1 for c in counts):
        raise InvalidInputError(f"Sample counts {counts} do not give a nonempty dataset per device")
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=dimension)
    datasets = []
    for count in counts:
        inputs = rng.normal(size=(count, dimension))
        targets = inputs @ theta + noise * rng.normal(size=count)
        datasets.append(DeviceData(inputs=inputs, targets=targets))
    return datasets
