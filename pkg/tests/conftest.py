"""Shared fixtures.

The expensive trajectory runs are session-scoped so the refinement and
acceptance tests can share them instead of re-integrating.
"""
import dataclasses

import pytest

from fermibolt.config import ExperimentConfig
from fermibolt.experiment import run_experiment


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default_run")
    config = ExperimentConfig()
    return run_experiment(config, output_dir=str(out))


@pytest.fixture(scope="session")
def refined_x_run(default_run):
    config = dataclasses.replace(
        default_run.config, spatial_cells=128, dt=None, delta=default_run.config.delta
    )
    return run_experiment(config)


@pytest.fixture(scope="session")
def refined_v_run(default_run):
    config = dataclasses.replace(
        default_run.config, nodes_per_axis=128, dt=None, delta=default_run.config.delta
    )
    return run_experiment(config)


@pytest.fixture(scope="session")
def refined_t_run(default_run):
    config = dataclasses.replace(
        default_run.config, dt=default_run.dt / 2.0, delta=default_run.config.delta
    )
    return run_experiment(config)


@pytest.fixture(scope="session")
def fixed_point_run():
    # start exactly on the global equilibrium; over a thousand steps
    config = ExperimentConfig(amplitude=0.0, t_final=1.8, record_every=50)
    return run_experiment(config)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_run")
    config = ExperimentConfig(
        nodes_per_axis=8,
        spatial_cells=8,
        t_final=2.0,
        record_every=2,
    )
    return run_experiment(config, output_dir=str(out))
