import json

import numpy as np
import pytest

from docqa.corpus import (
    AnswerStringSet,
    DatasetParseError,
    DatasetSchemaError,
    Paragraph,
    Token,
    load_dataset,
    make_pair,
    normalize_string,
    save_dataset,
    tokenize,
)


class TestNormalizeString:
    def test_punctuation_and_case(self):
        assert normalize_string("Joan Rivers.") == "joan rivers"

    def test_leading_article_and_whitespace(self):
        assert normalize_string("the Mount  Helicon") == "mount helicon"

    def test_empty(self):
        assert normalize_string("") == ""

    def test_repeated_articles_stripped(self):
        assert normalize_string("a a the an cat") == "cat"

    def test_interior_article_kept(self):
        assert normalize_string("war of the worlds") == "war of the worlds"

    def test_all_articles_yield_empty(self):
        assert normalize_string("The A An") == ""

    def test_idempotent_on_random_strings(self):
        """Normalizing twice must equal normalizing once."""
        rng = np.random.default_rng(42)
        alphabet = list("abcdef XY.,!?'\"-()the an a  \t")
        for _ in range(500):
            n = int(rng.integers(0, 30))
            text = "".join(alphabet[i] for i in rng.integers(0, len(alphabet), n))
            once = normalize_string(text)
            assert normalize_string(once) == once

    def test_never_leads_with_article(self):
        rng = np.random.default_rng(7)
        words = ["a", "an", "the", "cat", "dog", "thé"]
        for _ in range(200):
            text = " ".join(words[i] for i in rng.integers(0, len(words), 5))
            out = normalize_string(text)
            if out:
                assert out.split()[0] not in {"a", "an", "the"}


class TestTokenize:
    def test_collapses_whitespace(self):
        assert [t.text for t in tokenize(" a  b ")] == ["a", "b"]

    def test_keeps_articles(self):
        assert [t.text for t in tokenize("The Cat")] == ["the", "cat"]

    def test_drops_pure_punctuation(self):
        assert tokenize("...  !!") == []

    def test_tokens_are_valid(self):
        for token in tokenize("Some-Text, with;  Punctuation!"):
            assert token.text
            assert not any(c.isspace() for c in token.text)


class TestTypes:
    def test_token_rejects_whitespace(self):
        with pytest.raises(ValueError):
            Token("a b")
        with pytest.raises(ValueError):
            Token("")

    def test_paragraph_needs_tokens(self):
        with pytest.raises(ValueError):
            Paragraph(index=0, tokens=())

    def test_answer_set_normalizes_and_dedupes(self):
        answers = AnswerStringSet.from_strings(["The Beatles", "beatles!", "Queen"])
        assert answers.normalized == ("beatles", "queen")
        assert len(answers) == 2
        assert "beatles" in answers

    def test_span_text(self):
        pair = make_pair("x", "q", ["alpha beta gamma"], ["beta"])
        assert pair.paragraphs[0].text(1, 2) == "beta gamma"


class TestLoadDataset:
    def write(self, tmp_path, records):
        path = tmp_path / "data.jsonl"
        with open(path, "w") as handle:
            for record in records:
                handle.write(json.dumps(record) + "\n")
        return path

    def record(self, **kwargs):
        base = {
            "id": "d0",
            "question": "who sang",
            "paragraphs": ["first paragraph here", "second one"],
            "answers": ["Someone"],
        }
        base.update(kwargs)
        return base

    def test_basic_load(self, tmp_path):
        pairs = load_dataset(self.write(tmp_path, [self.record()]))
        assert len(pairs) == 1
        assert pairs[0].id == "d0"
        assert [t.text for t in pairs[0].question] == ["who", "sang"]
        assert pairs[0].paragraph_lengths() == (3, 2)

    def test_paragraph_cap_drops_in_order(self, tmp_path):
        record = self.record(paragraphs=[f"token{i}" for i in range(10)])
        pairs = load_dataset(self.write(tmp_path, [record]))
        assert len(pairs[0].paragraphs) == 8
        assert pairs[0].paragraphs[7].text() == "token7"

    def test_token_cap_keeps_prefix(self, tmp_path):
        words = " ".join(f"w{i}" for i in range(450))
        record = self.record(paragraphs=[words])
        pairs = load_dataset(self.write(tmp_path, [record]))
        assert len(pairs[0].paragraphs[0]) == 400
        assert pairs[0].paragraphs[0].tokens[399].text == "w399"

    def test_empty_paragraphs_removed_and_reindexed(self, tmp_path):
        record = self.record(paragraphs=["one", "...", "three"])
        pairs = load_dataset(self.write(tmp_path, [record]))
        assert [p.index for p in pairs[0].paragraphs] == [0, 1]
        assert pairs[0].paragraphs[1].text() == "three"

    def test_cap_applies_before_empty_removal(self, tmp_path):
        paragraphs = ["..."] * 8 + ["real content"]
        record = self.record(paragraphs=paragraphs)
        pairs = load_dataset(self.write(tmp_path, [record]))
        assert pairs[0].paragraphs == ()

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(self.record()) + "\nnot json{\n")
        with pytest.raises(DatasetParseError) as err:
            load_dataset(path)
        assert err.value.line_number == 2
        assert "line 2" in str(err.value)

    def test_schema_error_on_missing_field(self, tmp_path):
        record = self.record()
        del record["answers"]
        with pytest.raises(DatasetSchemaError) as err:
            load_dataset(self.write(tmp_path, [record]))
        assert "answers" in str(err.value)

    def test_schema_error_on_wrong_type(self, tmp_path):
        record = self.record(paragraphs="not a list")
        with pytest.raises(DatasetSchemaError):
            load_dataset(self.write(tmp_path, [record]))

    def test_round_trip(self, tmp_path):
        records = [
            self.record(),
            self.record(id="d1", paragraphs=["More, text! here"], answers=["A", "B"]),
        ]
        first = load_dataset(self.write(tmp_path, records))
        out = tmp_path / "round.jsonl"
        save_dataset(first, out)
        second = load_dataset(out)
        assert first == second
