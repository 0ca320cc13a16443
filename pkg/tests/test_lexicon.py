import pytest

from negspace.errors import (
    DuplicateLabelError,
    EmptyLexiconError,
    FormatError,
    TemplateError,
)
from negspace.lexicon import (
    PromptTemplate,
    apply_template,
    filter_categories,
    from_texts,
    load_labels,
    save_labels,
)


class TestLoadLabels:
    def test_lines(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("cat\ndog\n")
        labels = load_labels(path, "lines")
        assert [e.id for e in labels.entries] == [0, 1]
        assert labels.texts() == ["cat", "dog"]

    def test_jsonl_with_categories(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text(
            '{"text": "salmon", "category": "noun.animal"}\n'
            '{"text": "bread", "category": "noun.food"}\n'
            '{"text": "sky"}\n'
        )
        labels = load_labels(path, "jsonl")
        assert [e.category for e in labels.entries] == ["noun.animal", "noun.food", None]

    def test_duplicate_reports_both_lines(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("cat\ncat\n")
        with pytest.raises(DuplicateLabelError) as exc:
            load_labels(path, "lines")
        assert exc.value.first_line == 1 and exc.value.second_line == 2

    def test_duplicate_after_whitespace_normalization(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("polar bear\npolar  bear\n")
        with pytest.raises(DuplicateLabelError):
            load_labels(path, "lines")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("")
        with pytest.raises(EmptyLexiconError):
            load_labels(path, "lines")

    def test_bad_jsonl_line_number(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"text": "ok"}\nnot json\n')
        with pytest.raises(FormatError, match=":2:"):
            load_labels(path, "jsonl")

    def test_round_trip_preserves_text_and_category(self, tmp_path, rng):
        texts = ["café au lait", "naïve idea", "plain"]
        cats = ["noun.food", None, "adj.all"]
        labels = from_texts(texts, cats)
        for fmt in ("jsonl",):
            path = tmp_path / f"x.{fmt}"
            save_labels(labels, path, fmt)
            back = load_labels(path, fmt)
            assert back.texts() == texts
            assert [e.category for e in back.entries] == cats

    def test_lines_round_trip(self, tmp_path):
        labels = from_texts(["alpha", "beta"])
        path = tmp_path / "x.txt"
        save_labels(labels, path, "lines")
        assert load_labels(path, "lines").texts() == ["alpha", "beta"]


class TestTemplates:
    def test_photo_prompt(self):
        t = PromptTemplate("a photo of a {}")
        labels = from_texts(["dog"])
        assert apply_template(t, labels) == ["a photo of a dog"]

    def test_identity_template(self):
        assert PromptTemplate("{}").render("dog") == "dog"

    def test_order_preserved(self):
        t = PromptTemplate("x {} y")
        out = apply_template(t, from_texts(["a", "b", "c"]))
        assert out == ["x a y", "x b y", "x c y"]

    def test_placeholder_required(self):
        with pytest.raises(TemplateError):
            PromptTemplate("no placeholder")
        with pytest.raises(TemplateError):
            PromptTemplate("{} twice {}")


class TestFilterCategories:
    def test_empty_blocklist_is_identity(self):
        labels = from_texts(["a", "b"], ["x", "y"])
        assert filter_categories(labels, set()) is labels

    def test_blocklist_removes_and_recompacts(self):
        labels = from_texts(["ant", "rice", "fern"], ["animal", "food", "plant"])
        out = filter_categories(labels, {"animal", "food"})
        assert out.texts() == ["fern"]
        assert [e.id for e in out.entries] == [0]

    def test_missing_category_never_filtered(self):
        labels = from_texts(["a", "b"], [None, "food"])
        out = filter_categories(labels, {"food"})
        assert out.texts() == ["a"]

    def test_union_equals_sequential_filtering(self, rng):
        cats = ["c0", "c1", "c2", "c3", None]
        labels = from_texts(
            [f"w{i}" for i in range(40)],
            [cats[int(rng.integers(0, len(cats)))] for _ in range(40)],
        )
        a, b = {"c0", "c3"}, {"c1"}
        combined = filter_categories(labels, a | b)
        sequential = filter_categories(filter_categories(labels, a), b)
        assert combined.texts() == sequential.texts()
