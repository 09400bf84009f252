"""Command-line pipeline driver: one store, one subcommand per stage.

Exit codes: 1 configuration/usage, 2 network/service, 3 store/data. Every
subcommand is safe to rerun; long phases resume where they stopped.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path
from typing import Optional

import click

from . import evaluation, insights, pipeline
from .embedding import EmbeddingClient
from .errors import ConfigError, NetworkError, RepoAffilError
from .github import DEFAULT_BASE_URL, TOKEN_ENV_VAR, GitHubClient, RateBudget
from .llm import ChatClient, ModelParams
from .model import (
    InstitutionProfile,
    LabelRecord,
    default_config_path,
    load_institution_profiles,
)
from .runlog import RunLog
from .sbc import score_repository
from .store import EXPORT_TABLES, Store
from .svm import SvmModel, train_svm
from .textprep import assemble_text

STORE_ENV_VAR = "REPOAFFIL_STORE"
GITHUB_URL_ENV_VAR = "REPOAFFIL_GITHUB_URL"
EMBED_URL_ENV_VAR = "EMBEDDINGS_BASE_URL"
EMBED_KEY_ENV_VAR = "EMBEDDINGS_API_KEY"
EMBED_MODEL_ENV_VAR = "EMBEDDINGS_MODEL"
LLM_URL_ENV_VAR = "LLM_BASE_URL"
LLM_KEY_ENV_VAR = "LLM_API_KEY"


class PipelineGroup(click.Group):
    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except RepoAffilError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)


@click.group(cls=PipelineGroup)
def cli() -> None:
    """Discover, classify, and analyze institution-affiliated repositories."""


def _store_path(store: Optional[str]) -> Path:
    path = store or os.environ.get(STORE_ENV_VAR)
    if not path:
        raise ConfigError(
            f"no store path: pass --store or set {STORE_ENV_VAR}"
        )
    return Path(path)


def _open_store(store: Optional[str]) -> Store:
    return Store(_store_path(store))


def _load_profiles(config: Optional[str]) -> list[InstitutionProfile]:
    return load_institution_profiles(config or default_config_path())


def _pick_profile(profiles: list[InstitutionProfile], institution: str) -> InstitutionProfile:
    for profile in profiles:
        if profile.id == institution:
            return profile
    known = ", ".join(p.id for p in profiles)
    raise ConfigError(f"unknown institution {institution!r}; config defines: {known}")


def _github_client(store_path: Path, min_interval: float) -> tuple[GitHubClient, RunLog]:
    token = os.environ.get(TOKEN_ENV_VAR)
    if not token:
        raise ConfigError(f"missing API token: set the {TOKEN_ENV_VAR} environment variable")
    base_url = os.environ.get(GITHUB_URL_ENV_VAR, DEFAULT_BASE_URL)
    run_log = RunLog(store_path.with_suffix(store_path.suffix + ".runlog.jsonl"))
    budget = RateBudget(remaining=5000, min_interval=min_interval)
    return GitHubClient(base_url=base_url, token=token, budget=budget, run_log=run_log), run_log


def _embedding_client() -> EmbeddingClient:
    base_url = os.environ.get(EMBED_URL_ENV_VAR)
    if not base_url:
        raise ConfigError(f"missing embeddings endpoint: set {EMBED_URL_ENV_VAR}")
    model = os.environ.get(EMBED_MODEL_ENV_VAR, "text-embedding-3-small")
    return EmbeddingClient(
        base_url=base_url, model=model, api_key=os.environ.get(EMBED_KEY_ENV_VAR)
    )


def _chat_client(run_log=None) -> ChatClient:
    base_url = os.environ.get(LLM_URL_ENV_VAR)
    if not base_url:
        raise ConfigError(f"missing chat endpoint: set {LLM_URL_ENV_VAR}")
    return ChatClient(
        base_url=base_url, api_key=os.environ.get(LLM_KEY_ENV_VAR), run_log=run_log
    )


def _histogram(probabilities: list[float], width: int = 40) -> str:
    bins = [0] * 10
    for p in probabilities:
        bins[min(int(p * 10), 9)] += 1
    top = max(bins) or 1
    lines = []
    for i, count in enumerate(bins):
        low, high = i / 10, (i + 1) / 10
        bar = "#" * round(count / top * width)
        lines.append(f"[{low:.1f},{high:.1f}{']' if i == 9 else ')'} {count:>6} {bar}")
    return "\n".join(lines)


# ----------------------------------------------------------------- discovery


@cli.command()
@click.option("--institution", required=True, help="Profile id from the config.")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--store", type=click.Path(), default=None)
@click.option("--date-slicing", is_flag=True, default=False,
              help="Split capped queries into created-date windows.")
@click.option("--min-interval", type=float, default=0.0,
              help="Minimum seconds between API requests.")
@click.option("--parallelism", type=int, default=4)
def discover(institution, config, store, date_slicing, min_interval, parallelism):
    """Search, enrich, and persist candidate repositories for one institution."""
    profiles = _load_profiles(config)
    profile = _pick_profile(profiles, institution)
    store_path = _store_path(store)
    client, run_log = _github_client(store_path, min_interval)
    with _open_store(str(store_path)) as db:
        summary = pipeline.discover(
            client, db, profile, date_slicing=date_slicing, parallelism=parallelism
        )
    click.echo(f"discovery for {profile.id}: {len(summary.query_counts)} queries")
    for rendered, count in summary.query_counts:
        click.echo(f"  {count:>6}  {rendered}")
    for rendered in summary.truncated_queries:
        click.echo(f"  WARNING: results truncated at service cap for {rendered}")
    click.echo(
        f"raw matches: {summary.raw_matches}  unique repos: {summary.unique_repos}"
        + (f"  skipped (gone): {summary.skipped}" if summary.skipped else "")
    )
    run_log.close()


@cli.command()
@click.option("--phase", type=click.Choice(["contributors", "orgs"]), required=True)
@click.option("--store", type=click.Path(), default=None)
@click.option("--top-n", type=int, default=2,
              help="Contributors to profile in full, by commit rank.")
@click.option("--limit", type=int, default=None)
@click.option("--min-interval", type=float, default=0.0)
def enrich(phase, store, top_n, limit, min_interval):
    """Fetch contributor or owner-organization data for stored repos (resumable)."""
    store_path = _store_path(store)
    client, run_log = _github_client(store_path, min_interval)
    with _open_store(str(store_path)) as db:
        if phase == "contributors":
            processed, failed = pipeline.enrich_contributors(
                client, db, top_n=top_n, limit=limit
            )
            click.echo(f"contributors: processed {processed} repos, {failed} failures")
        else:
            processed, orgs_found = pipeline.enrich_orgs(client, db, limit=limit)
            click.echo(f"orgs: processed {processed} repos, {orgs_found} org records")
    run_log.close()


# -------------------------------------------------------------- classification


@cli.command()
@click.option("--method", type=click.Choice(["sbc", "svm", "llm"]), required=True)
@click.option("--institution", required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--store", type=click.Path(), default=None)
@click.option("--model", default=None,
              help="svm: trained model file path; llm: model name.")
@click.option("--seed", type=int, default=None, help="llm: request seed.")
@click.option("--limit", type=int, default=None)
def classify(method, institution, config, store, model, seed, limit):
    """Write affiliation probabilities for the institution's repositories."""
    profiles = _load_profiles(config)
    profile = _pick_profile(profiles, institution)
    store_path = _store_path(store)
    with _open_store(str(store_path)) as db:
        if limit == 0:
            click.echo("limit 0: nothing to classify")
            return
        if method == "sbc":
            predictions = pipeline.classify_sbc(db, profile, limit=limit)
        elif method == "svm":
            if not model:
                raise ConfigError("svm classification needs --model <trained model file>")
            if not Path(model).exists():
                raise ConfigError(f"model file not found: {model}")
            svm_model = SvmModel.load(model)
            predictions = pipeline.classify_svm(
                db, profile, svm_model, _embedding_client(), limit=limit
            )
        else:
            run_log = RunLog(store_path.with_suffix(store_path.suffix + ".runlog.jsonl"))
            params = ModelParams(model=model or "gpt-4o", seed=seed)
            predictions, needs_review = pipeline.classify_with_llm(
                db, profile, _chat_client(run_log), params, limit=limit, run_log=run_log
            )
            if needs_review:
                click.echo(f"{len(needs_review)} repos need review (unparseable verdicts):")
                for repo_id in needs_review:
                    click.echo(f"  {repo_id}")
            run_log.close()
    click.echo(f"{method} wrote {len(predictions)} predictions for {profile.id}")
    if predictions:
        click.echo(_histogram([p.probability for p in predictions]))


@cli.command()
@click.option("--institution", required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--store", type=click.Path(), default=None)
@click.option("--n", type=int, default=200, help="Training sample size.")
@click.option("--seed", type=int, default=0)
@click.option("--c", "c_value", type=float, default=1.0, help="SVM regularization C.")
@click.option("--model-out", type=click.Path(), default=None)
def train(institution, config, store, n, seed, c_value, model_out):
    """Sample labeled repos, embed them, and train the SVM classifier."""
    profiles = _load_profiles(config)
    profile = _pick_profile(profiles, institution)
    store_path = _store_path(store)
    with _open_store(str(store_path)) as db:
        pool = db.effective_labels(profile.id)
        sample = evaluation.sample_training_set(pool, profile.id, n=n, seed=seed)
        client = _embedding_client()
        assembled = []
        labels_by_repo = {}
        for record in sample:
            repo = db.get_repo(record.repo_id)
            if repo is None:
                continue
            org = db.org_for_repo(record.repo_id)
            top2 = db.contributors_for(record.repo_id, max_rank=2)
            assembled.append(assemble_text(repo, org, top2))
            labels_by_repo[record.repo_id] = record.label
        from .embedding import embed as embed_batch

        vectors = embed_batch(assembled, client, db)
        examples = [(v, labels_by_repo[v.repo_id]) for v in vectors]
        model = train_svm(examples, c=c_value, seed=seed)
    out_path = Path(model_out) if model_out else store_path.parent / f"svm-{profile.id}.json"
    model.save(out_path)
    manifest = model.training_manifest
    click.echo(
        f"trained {model.model_tag}: {manifest['n_positive']}+/{manifest['n_negative']}- "
        f"examples, dim {manifest['dim']}, saved to {out_path}"
    )


@cli.command()
@click.option("--institution", required=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--store", type=click.Path(), default=None)
@click.option("--classifier", type=click.Choice(["sbc", "svm", "llm"]), required=True)
@click.option("--model", default=None,
              help="svm: trained model file; llm: model name.")
@click.option("--seed", type=int, default=0)
@click.option("--n-per-class", type=int, default=50)
@click.option("--out", type=click.Path(), default=None, help="EvalReport JSON path.")
@click.option("--roc-csv", type=click.Path(), default=None)
def evaluate(institution, config, store, classifier, model, seed, n_per_class, out, roc_csv):
    """Build the balanced test set, score it, and report ROC/AUC/threshold metrics."""
    profiles = _load_profiles(config)
    profile = _pick_profile(profiles, institution)
    store_path = _store_path(store)
    with _open_store(str(store_path)) as db:
        pool = db.effective_labels(profile.id)
        exclude: list[str] = []
        svm_model = None
        if classifier == "svm":
            if not model:
                raise ConfigError("svm evaluation needs --model <trained model file>")
            if not Path(model).exists():
                raise ConfigError(f"model file not found: {model}")
            svm_model = SvmModel.load(model)
            exclude = list(svm_model.training_manifest.get("training_repo_ids", []))
        test_set = evaluation.build_balanced_test_set(
            pool, profile.id, n_per_class=n_per_class, seed=seed, exclude_repo_ids=exclude
        )
        repo_ids = [record.repo_id for record in test_set]

        if classifier == "sbc":
            scores = {}
            for repo_id in repo_ids:
                repo = db.get_repo(repo_id)
                if repo is None:
                    continue
                org = db.org_for_repo(repo_id)
                top2 = db.contributors_for(repo_id, max_rank=2)
                scores[repo_id] = score_repository(repo, org, top2, profile).total
            model_tag = "table-default"
        elif classifier == "svm":
            scores = pipeline.svm_scores(db, svm_model, repo_ids, _embedding_client())
            model_tag = svm_model.model_tag
        else:
            params = ModelParams(model=model or "gpt-4o", seed=seed)
            client = _chat_client()
            scores = {}
            from .llm import build_prompt, classify_llm

            for repo_id in repo_ids:
                repo = db.get_repo(repo_id)
                if repo is None:
                    continue
                org = db.org_for_repo(repo_id)
                top2 = db.contributors_for(repo_id, max_rank=2)
                verdict = classify_llm(build_prompt(repo, org, top2, profile, params), client)
                scores[repo_id] = verdict.probability
            model_tag = params.tag

        scored = evaluation.ScoredSet.join(test_set, scores)
        report = evaluation.evaluate_scored_set(
            scored, institution_id=profile.id, classifier=classifier, model_tag=model_tag
        )
    out_path = Path(out) if out else store_path.parent / f"eval-{profile.id}-{classifier}.json"
    out_path.write_text(report.to_json(), encoding="utf-8")
    if roc_csv:
        Path(roc_csv).write_text(report.roc_csv(), encoding="utf-8")
    click.echo(report.to_text())
    click.echo(f"report written to {out_path}")


# ------------------------------------------------------------------- analysis


@cli.command()
@click.option("--institution", default=None, help="Default: all institutions in the store.")
@click.option("--store", type=click.Path(), default=None)
@click.option("--classifier", type=click.Choice(["sbc", "svm", "llm"]), required=True)
@click.option("--threshold", type=float, default=0.5,
              help="Use the optimal threshold from `evaluate`.")
@click.option("--format", "fmt", type=click.Choice(["json", "text", "csv"]), default="text")
@click.option("--out", type=click.Path(), default=None)
def report(institution, store, classifier, threshold, fmt, out):
    """Affiliation rates plus language/license/community-file distributions."""
    with _open_store(store) as db:
        institution_ids = (
            [institution] if institution else [p.id for p in db.institutions()]
        )
        retrieved = {inst: db.unique_repo_count(inst) for inst in institution_ids}
        predictions = [
            p
            for inst in institution_ids
            for p in db.predictions(institution_id=inst, classifier=classifier)
        ]
        rates = insights.affiliation_rates(predictions, retrieved, classifier, threshold)

        affiliated_repo_ids = sorted(
            {
                repo_id
                for inst in institution_ids
                for repo_id, prob in db.latest_probability_by_repo(inst, classifier).items()
                if prob >= threshold
            }
        )
        repos = [r for rid in affiliated_repo_ids if (r := db.get_repo(rid))]
        languages = insights.language_distribution(repos)
        licenses = insights.license_distribution(repos)
        community = insights.community_standards_report(repos)

    if fmt == "json":
        rendered = insights.report_to_json(rates, languages, licenses, community)
    elif fmt == "csv":
        rendered = insights.report_to_csv(rates, languages, licenses, community)
    else:
        rendered = "\n\n".join(
            (
                insights.rates_to_text(rates),
                insights.distribution_to_text(languages, "Language"),
                insights.distribution_to_text(licenses, "License"),
                insights.flags_to_text(community),
            )
        )
    if out:
        Path(out).write_text(rendered + "\n", encoding="utf-8")
        click.echo(f"report written to {out}")
    else:
        click.echo(rendered)


@cli.command()
@click.option("--table", type=click.Choice(list(EXPORT_TABLES)), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), required=True)
@click.option("--dest", type=click.Path(), required=True)
@click.option("--store", type=click.Path(), default=None)
def export(table, fmt, dest, store):
    """Dump one store table as CSV (RFC 4180) or JSON lines."""
    with _open_store(store) as db:
        count = db.export_table(table, fmt, dest)
    click.echo(f"wrote {count} rows to {dest}")


@cli.command("import-labels")
@click.option("--file", "path", type=click.Path(exists=True), required=True,
              help="CSV with header repo_id,institution_id,label[,labeler]")
@click.option("--store", type=click.Path(), default=None)
@click.option("--labeler", default="import")
def import_labels(path, store, labeler):
    """Bulk-load ground-truth labels (e.g. a scripted oracle or an export)."""
    loaded = 0
    with _open_store(store) as db, open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            db.add_label(
                LabelRecord(
                    repo_id=row["repo_id"],
                    institution_id=row["institution_id"],
                    label=int(row["label"]),
                    labeler=row.get("labeler") or labeler,
                )
            )
            loaded += 1
    click.echo(f"imported {loaded} labels")


@cli.command()
@click.option("--model-tag", required=True)
@click.option("--avg-chars", type=int, required=True)
@click.option("--output-tokens", type=int, default=0)
@click.option("--price-in", type=float, required=True, help="Price per 1K input tokens.")
@click.option("--price-out", type=float, default=0.0, help="Price per 1K output tokens.")
@click.option("--n-items", type=int, required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="text")
def cost(model_tag, avg_chars, output_tokens, price_in, price_out, n_items, fmt):
    """Project token counts and API cost for a classification run."""
    estimate = evaluation.estimate_cost(
        model_tag, avg_chars, output_tokens, price_in, price_out, n_items
    )
    click.echo(estimate.to_json() if fmt == "json" else estimate.to_text())


# -------------------------------------------------------------------- serving


@cli.command()
@click.option("--port", type=int, default=8790)
@click.option("--host", default="127.0.0.1")
@click.option("--store", type=click.Path(), default=None)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--static-dir", type=click.Path(exists=True), default=None,
              help="Serve the labeling UI from this directory.")
def serve(port, host, store, config, static_dir):
    """Run the labeling service until interrupted."""
    import uvicorn

    from .service import create_app

    profiles = _load_profiles(config)
    db = _open_store(store)
    app = create_app(
        db,
        profiles=profiles,
        auth_token=os.environ.get("LABEL_AUTH_TOKEN"),
        static_dir=static_dir,
    )
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (OSError, SystemExit) as exc:
        if isinstance(exc, SystemExit) and not exc.code:
            return
        raise NetworkError(f"cannot serve on {host}:{port}: {exc}") from exc
    finally:
        db.close()


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except RepoAffilError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
