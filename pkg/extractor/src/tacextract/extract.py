"""Extraction jobs: image embeddings with aligned labels, prompted noun
embeddings, and the WordNet noun list export."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .backbones import get_backbone
from .datasets import Cifar10, ImageFolder
from .errors import FetchError, ParameterError
from .tace import (normalize_rows, write_labels, write_manifest,
                   write_noun_list, write_tace)

CLASS_TOKEN = "[CLASS]"
DEFAULT_PROMPT = "A photo of [CLASS]"


@dataclass
class ExtractionJob:
    dataset: str                  # folder path, or "cifar10"
    out_dir: str
    split: str = "test"
    backbone: str = "clip-vit-b32"
    prompt: str = DEFAULT_PROMPT
    batch_size: int = 64
    device: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.prompt.count(CLASS_TOKEN) != 1:
            raise ParameterError(
                f"prompt must contain exactly one {CLASS_TOKEN} placeholder, "
                f"got {self.prompt!r}")


def _open_dataset(job: ExtractionJob, data_root: str | None = None):
    if job.dataset == "cifar10":
        return Cifar10(data_root or os.path.join(job.out_dir, "data"),
                       split=job.split)
    return ImageFolder(job.dataset)


def extract_images(job: ExtractionJob, backbone=None, dataset=None,
                   data_root: str | None = None) -> dict:
    """One unit-normalized row per image, dataset order, labels aligned.

    Writes images.tace, labels.txt, the prompted class-name vocabulary
    (classes.txt + classes.tace) and a manifest the engine loads directly.
    Returns the written paths.
    """
    backbone = backbone or get_backbone(job.backbone, device=job.device)
    dataset = dataset or _open_dataset(job, data_root)
    os.makedirs(job.out_dir, exist_ok=True)

    rows = []
    for start in range(0, len(dataset), job.batch_size):
        batch = dataset.load_batch(start, min(start + job.batch_size,
                                              len(dataset)))
        rows.append(backbone.encode_images(batch))
    matrix = normalize_rows(np.concatenate(rows))

    paths = {
        "images": os.path.join(job.out_dir, "images.tace"),
        "labels": os.path.join(job.out_dir, "labels.txt"),
        "manifest": os.path.join(job.out_dir, "manifest.txt"),
    }
    write_tace(paths["images"], matrix)
    write_labels(paths["labels"], dataset.labels)

    # class names double as the zero-shot vocabulary
    noun_paths = extract_nouns(dataset.classes, job.prompt, backbone,
                               job.out_dir, stem="classes")
    paths.update(noun_paths)
    write_manifest(paths["manifest"], name=job.name or os.path.basename(
        job.dataset.rstrip("/")) or "dataset",
        images="images.tace", nouns="classes.txt",
        k=len(dataset.classes), split=job.split, labels="labels.txt")
    return paths


def extract_nouns(nouns, prompt: str, backbone, out_dir: str,
                  stem: str = "nouns") -> dict:
    """Prompted embedding per noun, order-aligned with the text file."""
    if prompt.count(CLASS_TOKEN) != 1:
        raise ParameterError(
            f"prompt must contain exactly one {CLASS_TOKEN} placeholder")
    nouns = [n.strip() for n in nouns if n.strip()]
    if not nouns:
        raise ParameterError("noun list is empty")
    seen = {}
    for noun in nouns:
        key = " ".join(noun.split()).lower()
        if key in seen:
            warnings.warn(f"duplicate noun {noun!r} dropped", stacklevel=2)
            continue
        seen[key] = noun
    unique = list(seen.values())

    prompted = [prompt.replace(CLASS_TOKEN, noun) for noun in unique]
    matrix = normalize_rows(backbone.encode_texts(prompted))

    os.makedirs(out_dir, exist_ok=True)
    txt_path = os.path.join(out_dir, f"{stem}.txt")
    tace_path = os.path.join(out_dir, f"{stem}.tace")
    write_noun_list(txt_path, unique)
    write_tace(tace_path, matrix)
    return {"nouns": txt_path, "noun_embeddings": tace_path}


def dump_wordnet_nouns(out_path: str) -> int:
    """All WordNet noun lemmas, one per line, underscores as spaces.

    Needs the nltk wordnet corpus; raises FetchError with instructions when
    it is absent."""
    try:
        from nltk.corpus import wordnet
    except ImportError as e:
        raise FetchError(
            "WordNet export needs nltk: pip install 'tac-extractor[wordnet]' "
            "then python -m nltk.downloader wordnet") from e
    try:
        lemmas = sorted({lemma.replace("_", " ")
                         for lemma in wordnet.all_lemma_names("n")})
    except LookupError as e:
        raise FetchError(
            "nltk is installed but the wordnet corpus is missing: run "
            "python -m nltk.downloader wordnet") from e
    write_noun_list(out_path, lemmas)
    return len(lemmas)
