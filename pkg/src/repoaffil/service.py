"""HTTP API behind the labeling UI: review queue, label intake, progress.

JSON over HTTP under /api; labels are committed to the store before the 201
acknowledgment leaves, so a restart never loses an acked label.
"""

from __future__ import annotations

import random
from dataclasses import asdict
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .errors import NotFoundError
from .model import (
    InstitutionProfile,
    LabelRecord,
    affiliation_definition_text,
)
from .store import Store

STRATEGIES = ("random", "lowest_confidence", "highest_confidence")


def _repo_payload(store: Store, repo_id: str) -> Optional[dict]:
    repo = store.get_repo(repo_id)
    if repo is None:
        return None
    doc = asdict(repo)
    doc["community"] = asdict(repo.community)
    doc["topics"] = list(repo.topics)
    doc["matched_queries"] = [list(m) for m in repo.matched_queries]
    return doc


def create_app(
    store: Store,
    profiles: Optional[list[InstitutionProfile]] = None,
    auth_token: Optional[str] = None,
    session_seed: int = 0,
    default_classifier: str = "sbc",
    static_dir: Optional[str] = None,
) -> FastAPI:
    """Build the labeling service over an open store.

    `profiles` (when given) are registered so the UI can highlight keywords;
    `auth_token` (when given) must arrive in the X-Auth-Token header.
    """
    app = FastAPI(title="repoaffil labeling service")
    if profiles:
        store.register_institutions(profiles)

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if auth_token and request.url.path.startswith("/api"):
            if request.headers.get("X-Auth-Token") != auth_token:
                return JSONResponse({"detail": "missing or bad token"}, status_code=401)
        return await call_next(request)

    @app.get("/api/institutions")
    def institutions() -> JSONResponse:
        rows = []
        for profile in store.institutions():
            summary = store.label_summary(profile.id)
            rows.append(
                {
                    "id": profile.id,
                    "name": profile.name,
                    "acronym": profile.acronym,
                    "domain": profile.domain,
                    "alternates": list(profile.alternates),
                    **summary,
                }
            )
        return JSONResponse(rows)

    @app.get("/api/next")
    def next_repo(
        institution: str,
        strategy: Optional[str] = None,
        labeler: str = "anonymous",
        classifier: Optional[str] = None,
    ):
        classifier = classifier or default_classifier
        try:
            candidates = store.query_candidates(institution)
        except NotFoundError:
            return JSONResponse({"detail": f"unknown institution {institution!r}"}, 404)
        already = {l.repo_id for l in store.labels(institution_id=institution, labeler=labeler)}
        candidates = [rid for rid in candidates if rid not in already]
        if not candidates:
            return Response(status_code=204)

        probs = store.latest_probability_by_repo(institution, classifier)
        if strategy is None:
            strategy = "lowest_confidence" if probs else "random"
        if strategy not in STRATEGIES:
            return JSONResponse({"detail": f"unknown strategy {strategy!r}"}, 400)

        if strategy == "random":
            rng = random.Random(f"{session_seed}:{institution}:{labeler}:{len(already)}")
            repo_id = rng.choice(candidates)
        else:
            reverse = strategy == "highest_confidence"
            # repos without predictions queue after predicted ones, by repo_id
            predicted = sorted(
                (rid for rid in candidates if rid in probs),
                key=lambda rid: (probs[rid], rid),
                reverse=reverse,
            )
            unpredicted = [rid for rid in candidates if rid not in probs]
            ordered = predicted + unpredicted
            repo_id = ordered[0]

        profile_doc = None
        for profile in store.institutions():
            if profile.id == institution:
                profile_doc = {
                    "id": profile.id,
                    "name": profile.name,
                    "acronym": profile.acronym,
                    "domain": profile.domain,
                    "alternates": list(profile.alternates),
                }
        bundle = {
            "repo": _repo_payload(store, repo_id),
            "org": (asdict(org) if (org := store.org_for_repo(repo_id)) else None),
            "contributors": [asdict(c) for c in store.contributors_for(repo_id, max_rank=2)],
            "predictions": [
                asdict(p)
                for p in store.predictions(institution_id=institution)
                if p.repo_id == repo_id
            ],
            "definition_text": affiliation_definition_text(),
            "institution": profile_doc,
            "remaining": len(candidates),
        }
        return JSONResponse(bundle)

    @app.post("/api/label")
    async def post_label(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"detail": "body must be JSON"}, 400)
        repo_id = body.get("repo_id")
        institution_id = body.get("institution_id")
        label = body.get("label")
        labeler = body.get("labeler") or "anonymous"
        if not repo_id or not institution_id:
            return JSONResponse({"detail": "repo_id and institution_id required"}, 400)
        if label not in (0, 1):
            return JSONResponse({"detail": f"label must be 0 or 1, got {label!r}"}, 400)
        record = LabelRecord(
            repo_id=str(repo_id),
            institution_id=str(institution_id),
            label=int(label),
            labeler=str(labeler),
        )
        try:
            outcome = store.add_label(record)
        except NotFoundError as exc:
            return JSONResponse({"detail": str(exc)}, 404)
        stored = store.labels(institution_id=record.institution_id, labeler=record.labeler)
        saved = next(l for l in stored if l.repo_id == record.repo_id)
        return JSONResponse({"outcome": outcome, "label": asdict(saved)}, status_code=201)

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
