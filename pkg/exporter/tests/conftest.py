import pytest
from eedlab.cli import dispatch


@pytest.fixture(scope="session")
def datasets(tmp_path_factory):
    """Rotated synthetic train/test datasets built through the primary CLI."""
    root = tmp_path_factory.mktemp("data")
    for tag, count, seed_img, seed_rot in [("train", 240, 11, 12),
                                           ("test", 96, 13, 14)]:
        assert dispatch(["synthesize", "--kind", "band-limited-noise",
                         "--count", str(count), "--classes", "4", "--size", "28",
                         "--seed", str(seed_img), "--out", str(root / f"{tag}_src")]) == 0
        assert dispatch(["rotate-dataset", "--src",
                         str(root / f"{tag}_src" / "dataset.json"),
                         "--group", "c8", "--seed", str(seed_rot),
                         "--out", str(root / tag)]) == 0
    return {"train": root / "train" / "dataset.json",
            "test": root / "test" / "dataset.json"}
