import importlib.util

import pytest

from tacextract.errors import FetchError
from tacextract.extract import dump_wordnet_nouns

_HAS_NLTK = importlib.util.find_spec("nltk") is not None
if _HAS_NLTK:
    try:
        from nltk.corpus import wordnet
        next(iter(wordnet.all_lemma_names("n")))
        _HAS_WORDNET = True
    except Exception:
        _HAS_WORDNET = False
else:
    _HAS_WORDNET = False


@pytest.mark.skipif(_HAS_WORDNET, reason="wordnet present; fetch path untestable")
def test_missing_database_raises_fetch_error(tmp_path):
    with pytest.raises(FetchError) as err:
        dump_wordnet_nouns(str(tmp_path / "nouns.txt"))
    assert "nltk" in str(err.value)


@pytest.mark.skipif(not _HAS_WORDNET, reason="wordnet corpus not installed")
def test_dump_contents(tmp_path):
    path = str(tmp_path / "nouns.txt")
    count = dump_wordnet_nouns(path)
    lines = open(path, encoding="utf-8").read().splitlines()
    assert "dog" in lines
    assert len(lines) == len(set(lines))  # no duplicates
    assert count == len(lines)
    assert count > 50_000
    assert not any("_" in line for line in lines)
