"""Shared synthetic fixtures.

The bimodal fixture mimics the production setting: the image modality
carries class signal in a few directions plus dominant class-irrelevant
nuisance variance (what makes plain k-means on embeddings fail), while the
text modality is a cleaner mixture over its own directions. Both are
row-normalized, like all embeddings consumed by the engine.
"""

import numpy as np
import pytest

from tac.core import normalize_rows
from tac.store import write_embeddings, write_labels, write_manifest


def bimodal_fixture(n=2000, d=32, k=4, sigma_img=0.4, sigma_txt=0.15,
                    seed=0, signal=1.7, nuisance_dims=4, nuisance_std=1.2):
    """Returns (images, texts, labels): two row-normalized modalities over
    the same balanced class assignment."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), n // k)
    frame, _ = np.linalg.qr(rng.normal(size=(d, k + nuisance_dims)))
    mu_img = frame[:, :k].T * signal
    nuisance = frame[:, k:k + nuisance_dims]
    mu_txt = normalize_rows(rng.normal(size=(k, d)))
    images = (mu_img[labels]
              + rng.normal(size=(n, nuisance_dims)) @ (nuisance.T * nuisance_std)
              + sigma_img * rng.normal(size=(n, d)))
    texts = mu_txt[labels] + sigma_txt * rng.normal(size=(n, d))
    return (normalize_rows(images).astype(np.float32),
            normalize_rows(texts).astype(np.float32),
            labels)


def noun_cloud_fixture(n=400, d=32, k=4, nouns_per_class=12, distractors=20,
                       sigma_noun=0.2, seed=3):
    """Bimodal fixture plus a noun vocabulary living near the image class
    directions, so retrieval by image-noun cosine denoises the images."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), n // k)
    frame, _ = np.linalg.qr(rng.normal(size=(d, k + 4)))
    mu_img = frame[:, :k].T * 1.7
    nuisance = frame[:, k:]
    images = (mu_img[labels]
              + rng.normal(size=(n, 4)) @ (nuisance.T * 1.2)
              + 0.4 * rng.normal(size=(n, d)))
    noun_rows = []
    noun_names = []
    for c in range(k):
        for j in range(nouns_per_class):
            noun_rows.append(mu_img[c] + sigma_noun * rng.normal(size=d))
            noun_names.append(f"class{c}_noun{j}")
    for j in range(distractors):
        noun_rows.append(rng.normal(size=d))
        noun_names.append(f"distractor{j}")
    return (normalize_rows(images).astype(np.float32),
            labels,
            noun_names,
            normalize_rows(np.asarray(noun_rows)).astype(np.float32))


def write_fixture_dataset(dirpath, images, labels, noun_names, noun_embeddings,
                          k, name="fixture"):
    """Materialize a manifest-addressable dataset under dirpath."""
    dirpath = str(dirpath)
    import os
    write_embeddings(os.path.join(dirpath, "images.tace"), images)
    write_labels(os.path.join(dirpath, "labels.txt"), labels)
    with open(os.path.join(dirpath, "nouns.txt"), "w") as f:
        for noun in noun_names:
            f.write(noun + "\n")
    write_embeddings(os.path.join(dirpath, "nouns.tace"), noun_embeddings)
    manifest_path = os.path.join(dirpath, "manifest.txt")
    write_manifest(manifest_path, name=name, images="images.tace",
                   nouns="nouns.txt", k=k, split="test", labels="labels.txt")
    return manifest_path


@pytest.fixture(scope="session")
def bimodal():
    return bimodal_fixture()


@pytest.fixture(scope="session")
def noun_cloud():
    return noun_cloud_fixture()
