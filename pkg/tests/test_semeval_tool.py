from __future__ import annotations

import importlib.util
from pathlib import Path

from rwlab.corpus import compute_stats, load_corpus

TOOL = Path(__file__).resolve().parents[1] / "tools" / "semeval_xml_to_jsonl.py"
spec = importlib.util.spec_from_file_location("semeval_tool", TOOL)
tool = importlib.util.module_from_spec(spec)
spec.loader.exec_module(tool)

XML = """<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="1"><text>The screen is good but not the battery.</text>
    <aspectTerms>
      <aspectTerm term="screen" polarity="positive" from="4" to="10"/>
      <aspectTerm term="battery" polarity="negative" from="31" to="38"/>
    </aspectTerms>
  </sentence>
  <sentence id="2"><text>Battery life is great, and the OS-X setup works.</text>
    <aspectTerms>
      <aspectTerm term="Battery life" polarity="positive" from="0" to="12"/>
      <aspectTerm term="OS-X setup" polarity="conflict" from="31" to="41"/>
    </aspectTerms>
  </sentence>
  <sentence id="3"><text>I bought it in May.</text></sentence>
</sentences>
"""


def test_conversion(tmp_path):
    src = tmp_path / "in.xml"
    src.write_text(XML)
    out = tmp_path / "out.jsonl"
    summary = tool.convert(src, out)
    assert summary == {"sentences": 3, "aspects": 3, "conflict_dropped": 1}
    corpus = load_corpus(out)
    terms = [e.aspect_term for e in corpus.examples]
    assert terms == [("screen",), ("battery",), ("battery", "life")]
    assert corpus.examples[1].text[corpus.examples[1].aspect_span[1]] == "."
    stats = compute_stats(corpus)
    assert (stats.n_sentences, stats.n_sentences_with_aspect, stats.n_contrastive_sentences) == (3, 2, 1)


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.xml"
    bad.write_text("<sentences><sentence")
    assert tool.main([str(bad), str(tmp_path / "o.jsonl")]) == 2
