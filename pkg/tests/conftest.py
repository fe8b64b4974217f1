"""Shared fixtures: a synthetic ratings file and a prepared split."""
import pytest

from vampcf.cli import main
from vampcf.synthetic import archetype_interactions, write_ratings_csv


@pytest.fixture(scope="session")
def ratings_file(tmp_path_factory):
    data = archetype_interactions(n_users=120, n_items=60, n_archetypes=2,
                                  seed=3, min_items=8, max_items=15)
    path = tmp_path_factory.mktemp("ratings") / "ratings.csv"
    write_ratings_csv(data, str(path))
    return str(path)


@pytest.fixture(scope="session")
def split_dir(tmp_path_factory, ratings_file):
    out = tmp_path_factory.mktemp("splits") / "s"
    code = main(["prepare", "--ratings", ratings_file, "--min-rating", "4",
                 "--min-items", "5", "--heldout-users", "15", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    return str(out)


TINY_MODEL_OVERRIDES = [
    "--set", "model.hidden=16", "--set", "model.d_z1=4",
    "--set", "model.d_z2=4", "--set", "model.k=3",
]

TINY_TRAIN_OVERRIDES = [
    "--set", "train.max_epochs=2", "--set", "train.batch_size=32",
    "--set", "train.eval_metric=ndcg@10",
]


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory, split_dir):
    out = tmp_path_factory.mktemp("runs") / "r"
    code = main(["train", "--data", split_dir, "--out", str(out), "--quiet",
                 *TINY_MODEL_OVERRIDES, *TINY_TRAIN_OVERRIDES])
    assert code == 0
    return str(out)
