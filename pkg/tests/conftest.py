import pytest
from hypothesis import settings

from pseudoloop import (
    AnnotationRecord,
    BBox,
    CategoryRecord,
    Dataset,
    ImageRecord,
)

settings.register_profile("repeatable", deadline=None, derandomize=True)
settings.load_profile("repeatable")


@pytest.fixture
def tiny_dataset() -> Dataset:
    """Two images, two categories, three ground-truth boxes."""
    return Dataset(
        images=(
            ImageRecord(id=1, file_name="a.jpg", width=640, height=480),
            ImageRecord(id=2, file_name="b.jpg", width=640, height=480),
        ),
        categories=(
            CategoryRecord(id=1, name="car"),
            CategoryRecord(id=2, name="boat"),
        ),
        annotations=(
            AnnotationRecord(id=1, image_id=1, category_id=1,
                             bbox=BBox(10, 10, 50, 40)),
            AnnotationRecord(id=2, image_id=1, category_id=2,
                             bbox=BBox(100, 100, 80, 60)),
            AnnotationRecord(id=3, image_id=2, category_id=1,
                             bbox=BBox(200, 50, 60, 60)),
        ),
    )
