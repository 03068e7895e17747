from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, strategies as st

from eltforge.providers import ScriptedProvider
from eltforge.tools import (
    Capability,
    Catalog,
    CatalogError,
    ParamSpec,
    RetrievalQuery,
    SynthesisMalformed,
    SynthesisRejected,
    ToolInterface,
    ToolSpec,
    retrieve,
    score,
    synthesize_tool,
    tokenize,
)


def make_tool(tool_id: str, description: str, tags=(), capability="read_only", role="transform"):
    return ToolSpec(
        id=tool_id,
        description=description,
        tags=tuple(tags),
        interface=ToolInterface(role=role),
        capability=Capability.parse(capability),
    )


@pytest.fixture()
def three_tool_catalog() -> Catalog:
    return Catalog(
        [
            make_tool("load_csv", "load csv files into the object store", ()),
            make_tool("fetch_http", "fetch documents over http", ()),
            make_tool("dedupe_rows", "drop duplicate rows from a dataset", ()),
        ]
    )


class TestScore:
    def test_verbatim_description_scores_one(self, three_tool_catalog):
        tool = three_tool_catalog.get("load_csv")
        assert score("load csv files into the object store", tool, three_tool_catalog) == pytest.approx(1.0)

    def test_zero_token_overlap_scores_zero(self, three_tool_catalog):
        tool = three_tool_catalog.get("load_csv")
        assert score("giraffe weather report", tool, three_tool_catalog) == 0.0

    def test_ranking_matches_hand_computed_tfidf_cosine(self, three_tool_catalog):
        """Independent recomputation of the binary TF-IDF cosine for the fixed fixture."""
        query = "load csv to object store"
        docs = {
            "load_csv": "load csv files into the object store",
            "fetch_http": "fetch documents over http",
            "dedupe_rows": "drop duplicate rows from a dataset",
        }
        n = len(docs)
        df: dict[str, int] = {}
        for text in docs.values():
            for token in set(tokenize(text)):
                df[token] = df.get(token, 0) + 1

        def idf(token: str) -> float:
            return math.log((1 + n) / (1 + df.get(token, 0))) + 1.0

        def cosine(q: str, d: str) -> float:
            qv = {t: idf(t) for t in set(tokenize(q))}
            dv = {t: idf(t) for t in set(tokenize(d))}
            dot = sum(w * dv[t] for t, w in qv.items() if t in dv)
            if dot == 0:
                return 0.0
            nq = math.sqrt(sum(w * w for w in qv.values()))
            nd = math.sqrt(sum(w * w for w in dv.values()))
            return dot / (nq * nd)

        for tool_id, text in docs.items():
            got = score(query, three_tool_catalog.get(tool_id), three_tool_catalog)
            assert got == pytest.approx(cosine(query, text), abs=1e-12)
        ranked = retrieve(RetrievalQuery(query, k=3), three_tool_catalog)
        expected_order = sorted(docs, key=lambda t: (-cosine(query, docs[t]), t))
        assert [t.id for t in ranked] == expected_order
        assert ranked[0].id == "load_csv"

    def test_matching_tag_never_lowers_score_under_frozen_idf(self, three_tool_catalog):
        query = "drop duplicate csv rows"
        base = three_tool_catalog.get("dedupe_rows")
        before = score(query, base, three_tool_catalog)
        # same catalog IDF, one extra query-matching tag on the tool
        tagged = make_tool("dedupe_rows", base.description, tags=("csv",))
        after = score(query, tagged, three_tool_catalog)
        assert after >= before

    @given(
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6),
        st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6),
        st.sampled_from("abcdef"),
    )
    def test_matching_tag_monotonicity_property(self, query_tokens, doc_tokens, extra):
        catalog = Catalog([make_tool("t1", " ".join(doc_tokens))])
        query = " ".join(query_tokens + [extra])
        base = make_tool("t1", " ".join(doc_tokens))
        tagged = make_tool("t1", " ".join(doc_tokens), tags=(extra,))
        assert score(query, tagged, catalog) >= score(query, base, catalog) - 1e-12


class TestRetrieve:
    def test_unique_max_with_k1(self, three_tool_catalog):
        out = retrieve(RetrievalQuery("drop duplicate rows", k=1), three_tool_catalog)
        assert [t.id for t in out] == ["dedupe_rows"]

    def test_equal_scores_break_ties_by_id(self):
        catalog = Catalog(
            [
                make_tool("b_tool", "shared words here"),
                make_tool("a_tool", "shared words here"),
            ]
        )
        out = retrieve(RetrievalQuery("shared words", k=2), catalog)
        assert [t.id for t in out] == ["a_tool", "b_tool"]

    def test_k_larger_than_catalog_returns_everything(self, three_tool_catalog):
        out = retrieve(RetrievalQuery("anything", k=10), three_tool_catalog)
        assert len(out) == 3

    def test_disjoint_vocabulary_orders_by_id(self, three_tool_catalog):
        out = retrieve(RetrievalQuery("zzz qqq", k=3), three_tool_catalog)
        assert [t.id for t in out] == ["dedupe_rows", "fetch_http", "load_csv"]

    def test_empty_catalog_returns_empty(self):
        assert retrieve(RetrievalQuery("anything", k=3), Catalog()) == []

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            RetrievalQuery("x", k=0)

    def test_retrieval_is_deterministic(self, three_tool_catalog):
        q = RetrievalQuery("load rows over http", k=3)
        first = [t.id for t in retrieve(q, three_tool_catalog)]
        for _ in range(5):
            assert [t.id for t in retrieve(q, three_tool_catalog)] == first


class TestCatalog:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(CatalogError):
            Catalog([make_tool("same", "a"), make_tool("same", "b")])

    def test_synthesized_tools_may_not_be_unrestricted(self):
        with pytest.raises(CatalogError):
            ToolSpec(
                id="bad",
                description="x",
                tags=(),
                interface=ToolInterface(role="transform"),
                capability=Capability("unrestricted"),
                origin="synthesized",
            )

    def test_curated_catalog_covers_every_declared_kind(self, catalog):
        for kind in ("local_dir", "http_url", "git_fixture", "dataset_fixture"):
            assert catalog.tools_with("extractor", kind), kind
        for kind in ("object_store_dir", "table_store", "local_dir"):
            assert catalog.tools_with("loader", kind), kind
        for op in ("select", "rename", "filter", "cast", "dedupe", "aggregate"):
            assert catalog.tools_with("transform", op), op
        assert catalog.tools_with("validator")


class TestSynthesis:
    def _catalog(self):
        return Catalog([make_tool("transform_select", "keep columns", tags=("select",))])

    def test_valid_candidate_registers_as_synthesized(self, tmp_path):
        catalog = self._catalog()
        provider = ScriptedProvider(
            [
                json.dumps(
                    {
                        "id": "uppercase_region",
                        "description": "uppercase a column",
                        "tags": ["map"],
                        "body": {"op": "rename", "params": {"mapping": {"region": "REGION"}}},
                    }
                )
            ]
        )
        overlay = tmp_path / "overlay.yaml"
        tool = synthesize_tool("uppercase a column", provider, catalog, "sess1/", overlay)
        assert tool.origin == "synthesized"
        assert tool.capability.mode == "scoped_write"
        assert catalog.get(tool.id) is tool
        assert overlay.exists() and "uppercase_region" in overlay.read_text()

    def test_destructive_body_is_rejected(self):
        catalog = self._catalog()
        provider = ScriptedProvider(
            [
                json.dumps(
                    {
                        "id": "evil",
                        "description": "cleanup",
                        "body": {"op": "filter", "params": {"column": "x", "op": "=", "value": "DROP TABLE users; DELETE FROM t"}},
                    }
                )
            ]
        )
        with pytest.raises(SynthesisRejected) as exc_info:
            synthesize_tool("cleanup", provider, catalog, "sess1/")
        assert exc_info.value.findings
        assert catalog.get("evil") is None

    def test_invalid_json_is_malformed(self):
        provider = ScriptedProvider(["{not json"])
        with pytest.raises(SynthesisMalformed):
            synthesize_tool("gap", provider, self._catalog(), "sess1/")

    def test_non_dsl_op_is_malformed(self):
        provider = ScriptedProvider([json.dumps({"id": "x", "body": {"op": "shell"}})])
        with pytest.raises(SynthesisMalformed):
            synthesize_tool("gap", provider, self._catalog(), "sess1/")

    def test_overlay_reloads_with_curated_catalog(self, tmp_path):
        catalog = self._catalog()
        provider = ScriptedProvider(
            [json.dumps({"id": "synth1", "description": "d", "body": {"op": "dedupe", "params": {}}})]
        )
        curated_path = tmp_path / "curated.yaml"
        import yaml

        with curated_path.open("w") as fh:
            yaml.safe_dump(catalog.get("transform_select").to_dict(), fh)
        overlay = tmp_path / "overlay.yaml"
        synthesize_tool("gap", provider, catalog, "sess1/", overlay)
        reloaded = Catalog.load(curated_path, overlay)
        assert reloaded.get("synth1") is not None
        assert reloaded.get("synth1").origin == "synthesized"
