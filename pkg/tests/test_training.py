import numpy as np
import pytest

from src.imaging.coils import CoilSet
from src.imaging.masks import generate_vdrs_mask
from src.imaging.operator import ImagingOperator
from src.networks.checkpoint import restore_generator
from src.training.dataset import BatchQueue, ImageDataset
from src.training.selection import select_checkpoint, validation_acquisitions
from src.training.trainer import LOSS_LOG, LossRecord, Trainer, read_loss_log
from src.utils.config import Config, InferenceConfig
from src.utils.errors import ConfigError, ContractError


@pytest.fixture
def dataset(config) -> ImageDataset:
    return ImageDataset.build(config.dataset, config.synthesizer.final_resolution, np.random.default_rng(0))


def test_dataset_build(config, dataset):
    assert dataset.images.shape == (4, 16, 16)
    assert dataset.validation.shape == (1, 16, 16)
    assert dataset.images.dtype == np.complex64


def test_dataset_pads_smaller_images(config):
    small = config.dataset.model_copy(update={"image_size": 8, "kind": "brain"})
    dataset = ImageDataset.build(small, 16, np.random.default_rng(0))
    assert dataset.resolution == 16
    assert np.all(dataset.images[:, :4, :] == 0)
    with pytest.raises(ConfigError):
        ImageDataset.build(config.dataset.model_copy(update={"image_size": 32}), 16, np.random.default_rng(0))


def test_batch_queue_is_deterministic():
    queue = BatchQueue(10, 3, seed=7)
    first = [b.tolist() for b in queue.epoch(0)]
    assert first == [b.tolist() for b in BatchQueue(10, 3, seed=7).epoch(0)]
    assert len(first) == 3
    assert len({i for batch in first for i in batch}) == 9
    assert first != [b.tolist() for b in queue.epoch(1)]
    with pytest.raises(ConfigError):
        BatchQueue(0, 3, seed=0)


def test_loss_record_line_format():
    record = LossRecord(3, 0.5, 1.25, 0.125)
    assert record.to_line() == "step=3 g_loss=0.500000 d_loss=1.250000 penalty=0.125000"
    assert LossRecord.from_line(record.to_line()) == record


def test_trainer_writes_log_and_checkpoints(tmp_path, config, dataset):
    result = Trainer(config, dataset, tmp_path).train()
    assert result.steps == 2
    assert [p.name for p in result.checkpoints] == ["step_000001", "step_000002"]
    assert restore_generator(result.checkpoints[-1])[2].step == 2
    records = read_loss_log(tmp_path / LOSS_LOG)
    assert [r.step for r in records] == [1, 2]
    assert all(np.isfinite(r.generator) and np.isfinite(r.discriminator) for r in records)


def test_trainer_is_deterministic(config, dataset):
    batch = dataset.images[:2]
    first = Trainer(config, dataset).train_step(batch)
    second = Trainer(config, dataset).train_step(batch)
    assert first == second


def test_empty_batches_are_contract_errors(config, dataset):
    trainer = Trainer(config, dataset)
    with pytest.raises(ContractError):
        trainer.generator_step(0)
    with pytest.raises(ContractError):
        trainer.train_step(dataset.images[:0])
    assert trainer.step == 0


def test_zero_learning_rate_leaves_weights_alone(raw_config, dataset):
    raw_config["training"]["lr"] = 0.0
    trainer = Trainer(Config(raw_config), dataset)
    before = {**trainer.synthesizer.state_dict(), **trainer.discriminator.state_dict()}
    trainer.train_step(dataset.images[:2])
    after = {**trainer.synthesizer.state_dict(), **trainer.discriminator.state_dict()}
    for name, value in before.items():
        np.testing.assert_array_equal(after[name], value)


def test_trainer_rejects_bad_datasets(config):
    with pytest.raises(ConfigError):
        Trainer(config, ImageDataset.from_images(np.zeros((0, 16, 16))))
    with pytest.raises(ConfigError):
        Trainer(config, ImageDataset.from_images(np.zeros((2, 8, 8))))


def test_checkpoint_selection_picks_lowest_score(tmp_path, config, dataset):
    checkpoints = Trainer(config, dataset, tmp_path).train().checkpoints
    operator = ImagingOperator(generate_vdrs_mask(16, 16, 2.0, 0), CoilSet.single(16, 16))
    validation = validation_acquisitions(dataset.validation, [operator])
    selection = select_checkpoint(checkpoints, validation, InferenceConfig(), iterations=2)
    assert set(selection.scores) == set(checkpoints)
    assert selection.scores[selection.best] == min(selection.scores.values())


def test_checkpoint_selection_needs_inputs(acquisition):
    with pytest.raises(ConfigError):
        select_checkpoint([], [acquisition], InferenceConfig())
    with pytest.raises(ConfigError):
        select_checkpoint(["somewhere"], [], InferenceConfig())
