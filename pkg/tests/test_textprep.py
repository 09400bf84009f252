from repoaffil.textprep import assemble_text

from conftest import make_contributor, make_org, make_repo


class TestAssembleText:
    def test_readme_truncated_to_limit(self):
        repo = make_repo(readme_text="x" * 12_000)
        assembled = assemble_text(repo, None, [], field_limit=10_000)
        readme_line = next(
            line for line in assembled.text.splitlines()
            if line.startswith("repository readme: ")
        )
        assert len(readme_line) - len("repository readme: ") == 10_000

    def test_all_empty_gives_stable_skeleton(self):
        repo = make_repo()
        a = assemble_text(repo, None, [])
        b = assemble_text(repo, None, [])
        assert a.text == b.text
        lines = a.text.splitlines()
        assert len(lines) == 8 + 7 + 8 + 8  # repo, org, contributor 1, contributor 2
        assert lines[0] == "repository full_name: owner/project"
        assert "organization login: " in lines
        assert "contributor 2 twitter: " in lines

    def test_field_order_documented(self):
        repo = make_repo(description="d", readme_text="r")
        org = make_org(login="lab", email="lab@x.org")
        top2 = [
            make_contributor(username="a", rank=1, bio="bio-a"),
            make_contributor(username="b", rank=2, bio="bio-b"),
        ]
        text = assemble_text(repo, org, top2).text
        order = [
            "repository full_name:",
            "repository readme:",
            "organization login:",
            "contributor 1 username:",
            "contributor 2 username:",
        ]
        positions = [text.index(marker) for marker in order]
        assert positions == sorted(positions)

    def test_contributors_placed_by_rank_not_list_order(self):
        top2 = [
            make_contributor(username="second", rank=2),
            make_contributor(username="first", rank=1),
        ]
        text = assemble_text(make_repo(), None, top2).text
        assert "contributor 1 username: first" in text
        assert "contributor 2 username: second" in text

    def test_identical_bytes_for_identical_inputs(self):
        repo = make_repo(description="desc", readme_text="body")
        assert (
            assemble_text(repo, None, []).text
            == assemble_text(repo, None, []).text
        )

    def test_every_field_within_limit(self):
        repo = make_repo(description="d" * 500, readme_text="r" * 500)
        assembled = assemble_text(repo, None, [], field_limit=100)
        for line in assembled.text.splitlines():
            label, _, value = line.partition(": ")
            assert len(value) <= 100, label
