"""Dataset access: a class-per-subdirectory image folder, plus torchvision
CIFAR-10 when its extra is installed. Items are enumerated in sorted order
and never shuffled, so label files stay row-aligned with embeddings."""

from __future__ import annotations

import os

from PIL import Image

from .errors import FetchError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")


def center_crop(image: Image.Image, size: int = 224) -> Image.Image:
    """Deterministic eval-style preprocessing: shortest side to `size`,
    then a central square crop."""
    image = image.convert("RGB")
    w, h = image.size
    scale = size / min(w, h)
    image = image.resize((max(size, round(w * scale)),
                          max(size, round(h * scale))), Image.BICUBIC)
    w, h = image.size
    left = (w - size) // 2
    top = (h - size) // 2
    return image.crop((left, top, left + size, top + size))


class ImageFolder:
    """(image, label) pairs from root/<class_name>/<file>; classes and files
    sorted lexicographically."""

    def __init__(self, root: str, crop_size: int = 224):
        if not os.path.isdir(root):
            raise FetchError(
                f"dataset folder {root!r} does not exist; arrange images as "
                f"<root>/<class_name>/<image>")
        self.root = root
        self.crop_size = crop_size
        self.classes = sorted(
            d for d in os.listdir(root)
            if os.path.isdir(os.path.join(root, d)))
        self.items: list[tuple[str, int]] = []
        for label, cls in enumerate(self.classes):
            cls_dir = os.path.join(root, cls)
            for fname in sorted(os.listdir(cls_dir)):
                if fname.lower().endswith(IMAGE_SUFFIXES):
                    self.items.append((os.path.join(cls_dir, fname), label))
        if not self.items:
            raise FetchError(f"no images found under {root!r}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self):
        return [label for _, label in self.items]

    def load_batch(self, start: int, stop: int):
        return [center_crop(Image.open(path), self.crop_size)
                for path, _ in self.items[start:stop]]


class Cifar10:
    """CIFAR-10 via torchvision; downloads on first use."""

    def __init__(self, root: str, split: str = "test", crop_size: int = 224):
        try:
            from torchvision.datasets import CIFAR10
        except ImportError as e:
            raise FetchError("CIFAR-10 needs torchvision: "
                             "pip install 'tac-extractor[datasets]'") from e
        try:
            self._ds = CIFAR10(root, train=(split == "train"), download=True)
        except Exception as e:
            raise FetchError(
                f"could not download CIFAR-10 into {root!r}; fetch "
                f"cifar-10-python.tar.gz on a connected machine and place it "
                f"there ({e})") from e
        self.classes = list(self._ds.classes)
        self.crop_size = crop_size

    def __len__(self) -> int:
        return len(self._ds)

    @property
    def labels(self):
        return [int(t) for t in self._ds.targets]

    def load_batch(self, start: int, stop: int):
        return [center_crop(self._ds[i][0], self.crop_size)
                for i in range(start, stop)]
