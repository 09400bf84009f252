import pytest

from repoaffil.model import (
    CommunityFlags,
    ContributorRecord,
    OrgRecord,
    RepoRecord,
    default_institution_profiles,
)
from repoaffil.store import Store


@pytest.fixture(scope="session")
def profiles():
    return default_institution_profiles()


@pytest.fixture(scope="session")
def ucsc(profiles):
    return next(p for p in profiles if p.id == "ucsc")


@pytest.fixture()
def store(tmp_path):
    db = Store(tmp_path / "store.db")
    yield db
    db.close()


def make_repo(
    repo_id="owner/project",
    description="",
    homepage="",
    readme_text="",
    name=None,
    **kwargs,
) -> RepoRecord:
    """RepoRecord factory with coherent community flags."""
    flags = kwargs.pop(
        "community",
        CommunityFlags(
            has_description=bool(description),
            has_readme=bool(readme_text),
            **{
                k: kwargs.pop(k)
                for k in list(kwargs)
                if k.startswith("has_") and k not in ("has_description", "has_readme")
            },
        ),
    )
    kwargs.setdefault("matched_queries", (("ucsc", "description", "UCSC"),))
    return RepoRecord(
        repo_id=repo_id,
        name=name if name is not None else repo_id.split("/", 1)[1],
        description=description,
        homepage=homepage,
        readme_text=readme_text,
        community=flags,
        **kwargs,
    )


def make_contributor(repo_id="owner/project", username="alice", rank=1, **kwargs):
    return ContributorRecord(repo_id=repo_id, username=username, rank=rank, **kwargs)


def make_org(login="some-org", **kwargs):
    return OrgRecord(login=login, **kwargs)
