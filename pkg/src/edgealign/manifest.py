"""Dataset manifests: class names, RGB palette, and per-image file entries.

The manifest is the single source of class count and colors.  Paths are
stored relative to the manifest file.  Two stock palettes ship with the
package, matching the usual 20-class VOC-style and 19-class urban-scene
color codings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .containers import read_header
from .errors import InputFormatError

SBD20_CLASSES = (
    "aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair",
    "cow", "diningtable", "dog", "horse", "motorbike", "person", "pottedplant",
    "sheep", "sofa", "train", "tvmonitor",
)
SBD20_COLORS = (
    (128, 0, 0), (0, 128, 0), (128, 128, 0), (0, 0, 128), (128, 0, 128),
    (0, 128, 128), (128, 128, 128), (64, 0, 0), (192, 0, 0), (64, 128, 0),
    (192, 128, 0), (64, 0, 128), (192, 0, 128), (64, 128, 128), (192, 128, 128),
    (0, 64, 0), (128, 64, 0), (0, 192, 0), (128, 192, 0), (0, 64, 128),
)
CITYSCAPES19_CLASSES = (
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle",
)
CITYSCAPES19_COLORS = (
    (128, 64, 128), (244, 35, 232), (70, 70, 70), (102, 102, 156), (190, 153, 153),
    (153, 153, 153), (250, 170, 30), (220, 220, 0), (107, 142, 35), (152, 251, 152),
    (70, 130, 180), (220, 20, 60), (255, 0, 0), (0, 0, 142), (0, 0, 70),
    (0, 60, 100), (0, 80, 100), (0, 0, 230), (119, 11, 32),
)
PALETTES = {
    "sbd20": (SBD20_CLASSES, SBD20_COLORS),
    "cityscapes19": (CITYSCAPES19_CLASSES, CITYSCAPES19_COLORS),
}


@dataclass
class ImageEntry:
    id: str
    height: int
    width: int
    labels: str
    prob: str | None = None
    image: str | None = None
    labels_true: str | None = None
    labels_refined: str | None = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "height": self.height, "width": self.width,
               "labels": self.labels}
        for key in ("prob", "image", "labels_true", "labels_refined"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ImageEntry":
        try:
            return cls(
                id=str(d["id"]), height=int(d["height"]), width=int(d["width"]),
                labels=str(d["labels"]), prob=d.get("prob"), image=d.get("image"),
                labels_true=d.get("labels_true"), labels_refined=d.get("labels_refined"),
            )
        except KeyError as err:
            raise InputFormatError(f"manifest image entry missing field {err}") from None


@dataclass
class DatasetManifest:
    classes: list
    colors: list
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            raise InputFormatError("manifest needs at least one class")
        if len(self.colors) != len(self.classes):
            raise InputFormatError(
                f"{len(self.colors)} colors for {len(self.classes)} classes"
            )
        for color in self.colors:
            if len(color) != 3 or any(not 0 <= int(v) <= 255 for v in color):
                raise InputFormatError(f"bad RGB color {color!r}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_json(self) -> str:
        doc = {
            "classes": list(self.classes),
            "colors": [list(map(int, c)) for c in self.colors],
            "images": [e.to_dict() for e in self.entries],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as err:
            raise InputFormatError(f"manifest is not valid JSON: {err}") from None
        for key in ("classes", "colors", "images"):
            if key not in doc:
                raise InputFormatError(f"manifest missing key {key!r}")
        return cls(
            classes=[str(c) for c in doc["classes"]],
            colors=[tuple(int(v) for v in c) for c in doc["colors"]],
            entries=[ImageEntry.from_dict(d) for d in doc["images"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise InputFormatError(f"manifest {path} does not exist")
        return cls.from_json(path.read_text())

    def validate_files(self, base_dir) -> None:
        """Check that referenced containers exist and header dims match."""
        base = Path(base_dir)
        for entry in self.entries:
            for key in ("labels", "prob", "image", "labels_true", "labels_refined"):
                rel = getattr(entry, key)
                if rel is None:
                    continue
                path = base / rel
                if not path.exists():
                    raise InputFormatError(f"entry {entry.id}: missing file {path}")
                _, h, w, _ = read_header(path)
                if (h, w) != (entry.height, entry.width):
                    raise InputFormatError(
                        f"entry {entry.id}: {path} is {h}x{w}, manifest says "
                        f"{entry.height}x{entry.width}"
                    )
