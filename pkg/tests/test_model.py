import io
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repoaffil.errors import ConfigError
from repoaffil.model import (
    AFFILIATION_DEFINITION,
    InstitutionProfile,
    LabelRecord,
    Prediction,
    affiliation_definition_text,
    dump_institution_profiles,
    load_institution_profiles,
    parse_institution_profiles,
)


class TestDefaultConfig:
    def test_ten_profiles(self, profiles):
        assert len(profiles) == 10
        assert [p.id for p in profiles] == [
            "ucb", "ucd", "uci", "ucla", "ucm", "ucr", "ucsb", "ucsc", "ucsd", "ucsf",
        ]

    def test_ucsc_row(self, ucsc):
        assert ucsc.name == "University of California, Santa Cruz"
        assert ucsc.acronym == "UCSC"
        assert ucsc.domain == "ucsc.edu"
        assert ucsc.alternates == ("UC Santa Cruz",)

    def test_all_profiles_valid(self, profiles):
        for p in profiles:
            assert p.domain.islower() and "." in p.domain
            assert p.acronym and not any(ch.isspace() for ch in p.acronym)
            assert len(p.alternates) >= 1


class TestProfileLoading:
    def test_empty_document_is_config_error(self):
        with pytest.raises(ConfigError):
            parse_institution_profiles("")

    def test_missing_domain_names_field(self):
        text = (
            "institutions:\n"
            "  - id: x\n"
            "    name: X University\n"
            "    acronym: XU\n"
            "    alternates: [XU West]\n"
        )
        with pytest.raises(ConfigError, match="domain"):
            parse_institution_profiles(text)

    def test_bad_domain_names_profile(self):
        text = (
            "institutions:\n"
            "  - id: x\n"
            "    name: X University\n"
            "    acronym: XU\n"
            "    domain: NODOTS\n"
            "    alternates: [XU West]\n"
        )
        with pytest.raises(ConfigError, match="x"):
            parse_institution_profiles(text)

    def test_duplicate_id_rejected(self):
        text = dump_institution_profiles(
            [
                InstitutionProfile("x", "X University", "XU", "x.edu", ("XU West",)),
                InstitutionProfile("x", "X College", "XC", "xc.edu", ("XC East",)),
            ]
        )
        with pytest.raises(ConfigError, match="duplicate"):
            parse_institution_profiles(text)

    def test_load_from_stream(self, profiles):
        text = dump_institution_profiles(profiles)
        assert load_institution_profiles(io.StringIO(text)) == profiles

    def test_declaration_order_preserved(self):
        text = (
            "institutions:\n"
            "  - {id: b, name: B University, acronym: BU, domain: b.edu, alternates: [B U]}\n"
            "  - {id: a, name: A University, acronym: AU, domain: a.edu, alternates: [A U]}\n"
        )
        assert [p.id for p in parse_institution_profiles(text)] == ["b", "a"]


_name_text = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" "),
    min_size=1,
    max_size=30,
).filter(lambda s: s.strip())


@settings(max_examples=50)
@given(
    ids=st.lists(
        st.text(alphabet="abcdefghij", min_size=1, max_size=8),
        min_size=1,
        max_size=5,
        unique=True,
    ),
    names=st.data(),
)
def test_profile_round_trip_identity(ids, names):
    profiles = [
        InstitutionProfile(
            id=i,
            name=names.draw(_name_text),
            acronym=names.draw(_name_text).replace(" ", "") or "AC",
            domain=f"{i}.edu",
            alternates=tuple(names.draw(st.lists(_name_text, min_size=1, max_size=3))),
        )
        for i in ids
    ]
    assert parse_institution_profiles(dump_institution_profiles(profiles)) == profiles


class TestAffiliationDefinition:
    def test_mentions_research_group_affiliation(self):
        assert "Research Group Affiliation" in affiliation_definition_text()

    def test_exactly_five_numbered_criteria(self):
        numbered = re.findall(r"^\d+\.", affiliation_definition_text(), re.MULTILINE)
        assert numbered == ["1.", "2.", "3.", "4.", "5."]
        assert "Educational Outreach" in affiliation_definition_text()

    def test_pure_constant(self):
        assert affiliation_definition_text() == affiliation_definition_text()
        assert affiliation_definition_text() is AFFILIATION_DEFINITION


class TestRecordInvariants:
    def test_label_must_be_binary(self):
        with pytest.raises(ValueError):
            LabelRecord(repo_id="a/b", institution_id="ucsc", label=2)

    def test_prediction_probability_range(self):
        with pytest.raises(ValueError):
            Prediction("a/b", "ucsc", "sbc", "t", probability=1.5)

    def test_prediction_classifier_kind(self):
        with pytest.raises(ValueError):
            Prediction("a/b", "ucsc", "forest", "t", probability=0.5)

    def test_acronym_whitespace_rejected(self):
        with pytest.raises(ValueError):
            InstitutionProfile("x", "X", "X U", "x.edu", ("XU",))

    def test_domain_must_be_lowercase_dotted(self):
        with pytest.raises(ValueError):
            InstitutionProfile("x", "X", "XU", "X.EDU", ("XU",))
