"""HTTP service hosting DCR studies.

State lives in an append-only newline-delimited JSON log per study (one
event object per line, fsync'd before the request is acknowledged), so a
killed process replays to exactly the set of accepted ratings. Handlers
never expose model labels or gold status: stimulus audio is addressed by
per-(stimulus, role) content-derived aliases, so even a gold pair's two
URLs differ.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .study import (
    RatingRecord,
    StimulusPair,
    StudyConfig,
    build_groups,
    compute_dmos,
    ratings_to_csv,
    screen_participant,
)


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    data_dir: str = "./study-data"
    study_seed: int = 0


def parse_service_config(path) -> ServiceConfig:
    """Read the flat key=value (TOML-subset) service config file.

    Recognized keys: ``bind`` ("host:port" string), ``data_dir`` (string),
    ``study_seed`` (integer).
    """
    values: dict[str, object] = {}
    for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"cannot parse config line: {raw_line!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if value.startswith('"') and value.endswith('"') and len(value) >= 2:
            values[key] = value[1:-1]
        elif value in ("true", "false"):
            values[key] = value == "true"
        else:
            values[key] = int(value)

    host, port = ServiceConfig.host, ServiceConfig.port
    bind = values.pop("bind", None)
    if bind is not None:
        host, _, port_text = str(bind).rpartition(":")
        port = int(port_text)
    known = {"data_dir", "study_seed"}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return ServiceConfig(
        host=host,
        port=port,
        data_dir=str(values.get("data_dir", ServiceConfig.data_dir)),
        study_seed=int(values.get("study_seed", ServiceConfig.study_seed)),
    )


# --- durable store ------------------------------------------------------------

@dataclass
class SessionState:
    session_id: str
    study_id: str
    participant_id: str
    group_id: int
    trial_order: list[str]
    cursor: int = 0


@dataclass
class StudyState:
    study_id: str
    config: StudyConfig
    groups: list[list[StimulusPair]]
    pairs_by_id: dict[str, StimulusPair]
    audio_aliases: dict[str, str] = field(default_factory=dict)  # alias -> path
    stimulus_urls: dict[str, tuple[str, str]] = field(default_factory=dict)
    sessions: dict[str, SessionState] = field(default_factory=dict)
    ratings: list[RatingRecord] = field(default_factory=list)
    session_count: int = 0

    def rating_counts_per_group(self) -> dict[int, int]:
        counts = {g: 0 for g in range(len(self.groups))}
        for record in self.ratings:
            counts[record.group_id] += 1
        return counts

    def gold_ids(self) -> frozenset[str]:
        return frozenset(
            pair.id for pair in self.pairs_by_id.values() if pair.is_gold
        )

    def retained_flags(self) -> dict[str, bool]:
        gold = self.gold_ids()
        gold_ratings: dict[str, list[int]] = {}
        participants = set()
        for record in self.ratings:
            participants.add(record.participant_id)
            if record.stimulus_id in gold:
                gold_ratings.setdefault(record.participant_id, []).append(
                    record.rating
                )
        return {
            participant: screen_participant(gold_ratings.get(participant, []))
            for participant in participants
        }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def _content_alias(content_hash: str, study_seed: int, stimulus_id: str,
                   role: str) -> str:
    token = f"{content_hash}:{study_seed}:{stimulus_id}:{role}".encode()
    return hashlib.sha256(token).hexdigest()[:24] + ".wav"


class StudyStore:
    """All study state plus the write-ahead log behind it.

    Mutations are serialized through one lock and appended to the study's
    log file with flush+fsync before returning; reads work on the in-memory
    snapshot reconstructed by :meth:`replay`.
    """

    def __init__(self, data_dir, study_seed: int = 0):
        self.data_dir = Path(data_dir)
        self.study_seed = study_seed
        self.studies: dict[str, StudyState] = {}
        self.audio_index: dict[str, str] = {}
        self._lock = threading.RLock()
        (self.data_dir / "studies").mkdir(parents=True, exist_ok=True)
        self.replay()

    # -- persistence --

    def _log_path(self, study_id: str) -> Path:
        return self.data_dir / "studies" / f"{study_id}.jsonl"

    def _append(self, study_id: str, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":")) + "\n"
        with open(self._log_path(study_id), "a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())

    def replay(self) -> None:
        with self._lock:
            self.studies.clear()
            self.audio_index.clear()
            for log_file in sorted((self.data_dir / "studies").glob("*.jsonl")):
                with open(log_file, encoding="utf-8") as handle:
                    for line in handle:
                        line = line.strip()
                        if not line:
                            continue
                        try:
                            event = json.loads(line)
                        except json.JSONDecodeError:
                            # torn tail write from a crash; everything acked
                            # was fsync'd as a complete line, so stop here
                            break
                        self._apply(event)

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "study_created":
            pairs = {
                p["id"]: StimulusPair(**p) for p in event["pairs"]
            }
            config = StudyConfig(
                stimuli=tuple(
                    pairs[i] for i in event["config"]["stimulus_ids"]
                ),
                group_count=event["config"]["group_count"],
                gold_per_group=event["config"]["gold_per_group"],
                ratings_per_stimulus_target=event["config"][
                    "ratings_per_stimulus_target"
                ],
                rng_seed=event["config"]["rng_seed"],
            )
            state = StudyState(
                study_id=event["study_id"],
                config=config,
                groups=[[pairs[i] for i in group] for group in event["groups"]],
                pairs_by_id=pairs,
                audio_aliases=dict(event["audio"]),
                stimulus_urls={
                    k: tuple(v) for k, v in event["stimulus_urls"].items()
                },
            )
            self.studies[state.study_id] = state
            self.audio_index.update(state.audio_aliases)
        elif kind == "session_created":
            study = self.studies[event["study_id"]]
            session = SessionState(
                session_id=event["session_id"],
                study_id=event["study_id"],
                participant_id=event["participant_id"],
                group_id=event["group_id"],
                trial_order=list(event["trial_order"]),
            )
            study.sessions[session.session_id] = session
            study.session_count += 1
        elif kind == "rating_accepted":
            study = self.studies[event["study_id"]]
            session = study.sessions[event["session_id"]]
            study.ratings.append(
                RatingRecord(
                    participant_id=session.participant_id,
                    stimulus_id=event["stimulus_id"],
                    rating=event["rating"],
                    timestamp=event["timestamp"],
                    group_id=session.group_id,
                )
            )
            session.cursor += 1

    # -- operations --

    def create_study(self, stimuli: list[StimulusPair], group_count: int,
                     gold_per_group: int, ratings_per_stimulus_target: int,
                     rng_seed: int | None) -> str:
        with self._lock:
            config = StudyConfig(
                stimuli=tuple(stimuli),
                group_count=group_count,
                gold_per_group=gold_per_group,
                ratings_per_stimulus_target=ratings_per_stimulus_target,
                rng_seed=self.study_seed if rng_seed is None else rng_seed,
            )
            assignment = build_groups(config)
            study_id = uuid.uuid4().hex

            pairs: dict[str, StimulusPair] = {}
            for group in assignment.groups:
                for pair in group:
                    pairs[pair.id] = pair

            content_hashes: dict[str, str] = {}
            for pair in pairs.values():
                for path in (pair.reference_path, pair.test_path):
                    if path not in content_hashes:
                        file_path = Path(path)
                        if not file_path.is_file():
                            raise FileNotFoundError(path)
                        content_hashes[path] = hashlib.sha256(
                            file_path.read_bytes()
                        ).hexdigest()

            aliases: dict[str, str] = {}
            stimulus_urls: dict[str, tuple[str, str]] = {}
            for pair in pairs.values():
                ref_alias = _content_alias(
                    content_hashes[pair.reference_path], config.rng_seed,
                    pair.id, "reference",
                )
                test_alias = _content_alias(
                    content_hashes[pair.test_path], config.rng_seed,
                    pair.id, "test",
                )
                aliases[ref_alias] = pair.reference_path
                aliases[test_alias] = pair.test_path
                stimulus_urls[pair.id] = (ref_alias, test_alias)

            event = {
                "event": "study_created",
                "study_id": study_id,
                "config": {
                    "stimulus_ids": [s.id for s in config.stimuli],
                    "group_count": config.group_count,
                    "gold_per_group": config.gold_per_group,
                    "ratings_per_stimulus_target":
                        config.ratings_per_stimulus_target,
                    "rng_seed": config.rng_seed,
                },
                "pairs": [
                    {
                        "id": p.id,
                        "reference_path": p.reference_path,
                        "test_path": p.test_path,
                        "model_label": p.model_label,
                        "model_type": p.model_type,
                    }
                    for p in pairs.values()
                ],
                "groups": [[s.id for s in group] for group in assignment.groups],
                "audio": aliases,
                "stimulus_urls": stimulus_urls,
                "created_at": _utc_now(),
            }
            self._append(study_id, event)
            self._apply(event)
            return study_id

    def create_session(self, study_id: str, participant_id: str) -> SessionState:
        with self._lock:
            study = self._study(study_id)
            done_groups = {
                s.group_id
                for s in study.sessions.values()
                if s.participant_id == participant_id
            }
            candidates = [
                g for g in range(len(study.groups)) if g not in done_groups
            ]
            if not candidates:
                raise SequencingError(
                    "participant already has a session in every group"
                )
            counts = study.rating_counts_per_group()
            least = min(counts[g] for g in candidates)
            tied = [g for g in candidates if counts[g] == least]
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    [self.study_seed, study.config.rng_seed, study.session_count]
                )
            )
            group_id = int(tied[rng.integers(0, len(tied))])
            order = [pair.id for pair in study.groups[group_id]]
            order = [order[i] for i in rng.permutation(len(order))]
            session_id = uuid.uuid4().hex
            event = {
                "event": "session_created",
                "study_id": study_id,
                "session_id": session_id,
                "participant_id": participant_id,
                "group_id": group_id,
                "trial_order": order,
                "created_at": _utc_now(),
            }
            self._append(study_id, event)
            self._apply(event)
            return study.sessions[session_id]

    def submit_rating(self, session_id: str, trial_index: int, rating: int) -> None:
        with self._lock:
            study, session = self._session(session_id)
            if trial_index != session.cursor or session.cursor >= len(
                session.trial_order
            ):
                raise SequencingError(
                    f"expected trial_index {session.cursor}, got {trial_index}"
                )
            event = {
                "event": "rating_accepted",
                "study_id": study.study_id,
                "session_id": session_id,
                "stimulus_id": session.trial_order[trial_index],
                "trial_index": trial_index,
                "rating": rating,
                "timestamp": _utc_now(),
            }
            self._append(study.study_id, event)
            self._apply(event)

    def next_trial(self, session_id: str):
        study, session = self._session(session_id)
        if session.cursor >= len(session.trial_order):
            return None
        stimulus_id = session.trial_order[session.cursor]
        ref_alias, test_alias = study.stimulus_urls[stimulus_id]
        return {
            "trial_index": session.cursor,
            "reference_url": f"/audio/{ref_alias}",
            "test_url": f"/audio/{test_alias}",
            "is_last": session.cursor == len(session.trial_order) - 1,
        }

    def export_csv(self, study_id: str) -> str:
        study = self._study(study_id)
        return ratings_to_csv(
            study.ratings, study.pairs_by_id, retained_flags=study.retained_flags()
        )

    def dmos(self, study_id: str) -> list[dict]:
        study = self._study(study_id)
        flags = study.retained_flags()
        retained = {p for p, keep in flags.items() if keep}
        records = [r for r in study.ratings if r.participant_id in retained]
        summaries = compute_dmos(
            records, retained, gold_ids=study.gold_ids(),
            rng_seed=study.config.rng_seed,
        )
        return [
            {
                "stimulus_id": s.stimulus_id,
                "dmos": s.dmos,
                "n": s.n,
                "median": s.median,
                "ci_low": s.ci_low,
                "ci_high": s.ci_high,
            }
            for s in summaries
        ]

    # -- lookups --

    def _study(self, study_id: str) -> StudyState:
        try:
            return self.studies[study_id]
        except KeyError:
            raise UnknownId(f"unknown study {study_id}") from None

    def _session(self, session_id: str) -> tuple[StudyState, SessionState]:
        for study in self.studies.values():
            if session_id in study.sessions:
                return study, study.sessions[session_id]
        raise UnknownId(f"unknown session {session_id}")

    def audio_file(self, alias: str) -> Path:
        try:
            return Path(self.audio_index[alias])
        except KeyError:
            raise UnknownId(f"unknown audio {alias}") from None


class UnknownId(KeyError):
    pass


class SequencingError(RuntimeError):
    pass


# --- HTTP layer ---------------------------------------------------------------

class StimulusPayload(BaseModel):
    id: str
    reference_path: str
    test_path: str
    model_label: str
    model_type: str


class StudyPayload(BaseModel):
    stimuli: list[StimulusPayload]
    group_count: int = Field(default=3, ge=1)
    gold_per_group: int = Field(default=5, ge=0)
    ratings_per_stimulus_target: int = Field(default=12, ge=1)
    rng_seed: int | None = None


class SessionPayload(BaseModel):
    participant_id: str = Field(min_length=1)


class RatingPayload(BaseModel):
    trial_index: int = Field(ge=0)
    rating: int = Field(ge=1, le=5)


def create_app(store: StudyStore) -> FastAPI:
    app = FastAPI(title="sepeval study service")

    @app.post("/studies", status_code=201)
    def create_study(payload: StudyPayload):
        try:
            stimuli = [
                StimulusPair(
                    id=s.id,
                    reference_path=s.reference_path,
                    test_path=s.test_path,
                    model_label=s.model_label,
                    model_type=s.model_type,
                )
                for s in payload.stimuli
            ]
            study_id = store.create_study(
                stimuli,
                group_count=payload.group_count,
                gold_per_group=payload.gold_per_group,
                ratings_per_stimulus_target=payload.ratings_per_stimulus_target,
                rng_seed=payload.rng_seed,
            )
        except FileNotFoundError as exc:
            raise HTTPException(422, f"audio file not found: {exc}") from exc
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        except Exception as exc:  # NotEnoughGoldCandidates etc.
            raise HTTPException(422, str(exc)) from exc
        return {"study_id": study_id}

    @app.post("/studies/{study_id}/sessions", status_code=201)
    def create_session(study_id: str, payload: SessionPayload):
        try:
            session = store.create_session(study_id, payload.participant_id)
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc
        except SequencingError as exc:
            raise HTTPException(409, str(exc)) from exc
        return {
            "session_id": session.session_id,
            "group_id": session.group_id,
            "trial_count": len(session.trial_order),
        }

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str):
        try:
            trial = store.next_trial(session_id)
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc
        if trial is None:
            return Response(status_code=204)
        return trial

    @app.post("/sessions/{session_id}/ratings", status_code=201)
    def submit_rating(session_id: str, payload: RatingPayload):
        try:
            store.submit_rating(session_id, payload.trial_index, payload.rating)
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc
        except SequencingError as exc:
            raise HTTPException(409, str(exc)) from exc
        return {"accepted": True}

    @app.get("/studies/{study_id}/export")
    def export(study_id: str):
        try:
            csv_text = store.export_csv(study_id)
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc
        return Response(content=csv_text, media_type="text/csv")

    @app.get("/studies/{study_id}/dmos")
    def dmos(study_id: str):
        try:
            return JSONResponse(store.dmos(study_id))
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc

    @app.get("/audio/{alias}")
    def audio(alias: str):
        try:
            path = store.audio_file(alias)
        except UnknownId as exc:
            raise HTTPException(404, str(exc)) from exc
        return FileResponse(
            path,
            media_type="audio/wav",
            headers={"Cache-Control": "public, max-age=31536000, immutable"},
        )

    return app


def run_service(config: ServiceConfig) -> None:
    import uvicorn

    store = StudyStore(config.data_dir, study_seed=config.study_seed)
    app = create_app(store)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
