import pytest

from docboost.models import ApiRecord, SectionKind, SourceDoc, SourceKind


@pytest.fixture
def tanh_api() -> ApiRecord:
    return ApiRecord(
        library_name="torch",
        api_name="torch.nn.Tanh",
        doc_sections={
            SectionKind.FUNCTIONALITY: "Applies the hyperbolic tangent function element-wise.",
            SectionKind.PARAMETERS: "min_val: lower bound of the output.\nmax_val: upper bound of the output.",
            SectionKind.NOTES: "Saturates for large magnitude inputs.",
        },
    )


def make_doc(kind: SourceKind = SourceKind.ANSWER_POST, source_id: str = "a1",
             body: str = "", score: int = 3) -> SourceDoc:
    return SourceDoc(source_kind=kind, source_id=source_id,
                     url=f"https://example.test/{source_id}",
                     score=score, raw_body=body,
                     fetched_at="2024-01-01T00:00:00Z")


@pytest.fixture
def doc_factory():
    return make_doc
