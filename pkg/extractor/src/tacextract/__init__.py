"""Offline embedding extraction for the clustering engine: image and
prompted-noun embeddings in the TACE format, plus the WordNet noun export."""

from .backbones import ClipBackbone, HashBackbone, get_backbone
from .errors import ExtractError, FetchError, ParameterError
from .extract import (DEFAULT_PROMPT, ExtractionJob, dump_wordnet_nouns,
                      extract_images, extract_nouns)

__version__ = "0.1.0"
