import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sepeval.audio import AudioBuffer, load_wav, write_wav
from sepeval.loudness import integrated_loudness, normalize_loudness
from sepeval.service import (
    ServiceConfig,
    StudyStore,
    create_app,
    parse_service_config,
)

from conftest import make_noise

SR = 44100


@pytest.fixture
def audio_dir(tmp_path):
    directory = tmp_path / "audio"
    directory.mkdir()
    rng = np.random.default_rng(99)
    for song in range(6):
        reference = AudioBuffer(0.1 * rng.standard_normal(SR // 2), SR)
        estimate = AudioBuffer(
            reference.samples + 0.02 * rng.standard_normal(SR // 2), SR
        )
        write_wav(directory / f"ref{song}.wav", reference)
        write_wav(directory / f"est{song}.wav", estimate)
    return directory


def study_payload(audio_dir, n=6, group_count=2, gold_per_group=1, seed=5):
    labels = [
        ("HTDemucs", "discriminative"),
        ("SGMSVS", "generative"),
    ]
    stimuli = []
    for i in range(n):
        label, model_type = labels[i % 2]
        stimuli.append(
            {
                "id": f"s{i}",
                "reference_path": str(audio_dir / f"ref{i}.wav"),
                "test_path": str(audio_dir / f"est{i}.wav"),
                "model_label": label,
                "model_type": model_type,
            }
        )
    return {
        "stimuli": stimuli,
        "group_count": group_count,
        "gold_per_group": gold_per_group,
        "rng_seed": seed,
    }


@pytest.fixture
def client(tmp_path, audio_dir):
    store = StudyStore(tmp_path / "data", study_seed=3)
    return TestClient(create_app(store))


def create_study(client, audio_dir, **kwargs):
    response = client.post("/studies", json=study_payload(audio_dir, **kwargs))
    assert response.status_code == 201, response.text
    return response.json()["study_id"]


def run_full_session(client, study_id, participant, rating=4):
    response = client.post(
        f"/studies/{study_id}/sessions", json={"participant_id": participant}
    )
    assert response.status_code == 201
    session = response.json()
    done = 0
    while True:
        trial = client.get(f"/sessions/{session['session_id']}/next")
        if trial.status_code == 204:
            break
        data = trial.json()
        ok = client.post(
            f"/sessions/{session['session_id']}/ratings",
            json={"trial_index": data["trial_index"], "rating": rating},
        )
        assert ok.status_code == 201
        done += 1
    assert done == session["trial_count"]
    return session


class TestStudyLifecycle:
    def test_create_returns_id(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        assert len(study_id) == 32

    def test_missing_audio_rejected(self, client, tmp_path):
        payload = study_payload(tmp_path, n=1, group_count=1)
        response = client.post("/studies", json=payload)
        assert response.status_code == 422

    def test_unknown_study_404(self, client):
        assert client.get("/studies/nope/export").status_code == 404
        assert client.get("/studies/nope/dmos").status_code == 404

    def test_session_assignment_balances_groups(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        groups = set()
        for participant in ("a", "b"):
            response = client.post(
                f"/studies/{study_id}/sessions",
                json={"participant_id": participant},
            )
            groups.add(response.json()["group_id"])
        assert groups == {0, 1}

    def test_participant_cannot_repeat_group(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        for _ in range(2):
            response = client.post(
                f"/studies/{study_id}/sessions", json={"participant_id": "p"}
            )
            assert response.status_code == 201
        third = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        )
        assert third.status_code == 409


class TestTrialSequencing:
    def test_next_never_reveals_labels(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        response = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        )
        session_id = response.json()["session_id"]
        trial = client.get(f"/sessions/{session_id}/next").json()
        assert set(trial) == {"trial_index", "reference_url", "test_url",
                              "is_last"}
        blob = json.dumps(trial)
        for secret in ("HTDemucs", "SGMSVS", "gold", "GOLD"):
            assert secret not in blob

    def test_gold_pair_urls_differ(self, client, audio_dir):
        study_id = create_study(client, audio_dir, n=2, group_count=1,
                                gold_per_group=1)
        response = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        )
        session_id = response.json()["session_id"]
        while True:
            trial = client.get(f"/sessions/{session_id}/next")
            if trial.status_code == 204:
                break
            data = trial.json()
            assert data["reference_url"] != data["test_url"]
            client.post(
                f"/sessions/{session_id}/ratings",
                json={"trial_index": data["trial_index"], "rating": 5},
            )

    def test_rating_out_of_scale_422(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        session_id = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        ).json()["session_id"]
        response = client.post(
            f"/sessions/{session_id}/ratings",
            json={"trial_index": 0, "rating": 6},
        )
        assert response.status_code == 422

    def test_out_of_order_and_duplicate_409(self, client, audio_dir):
        study_id = create_study(client, audio_dir)
        session_id = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        ).json()["session_id"]
        assert client.post(
            f"/sessions/{session_id}/ratings",
            json={"trial_index": 1, "rating": 3},
        ).status_code == 409
        assert client.post(
            f"/sessions/{session_id}/ratings",
            json={"trial_index": 0, "rating": 3},
        ).status_code == 201
        # duplicate of the accepted trial
        assert client.post(
            f"/sessions/{session_id}/ratings",
            json={"trial_index": 0, "rating": 3},
        ).status_code == 409

    def test_204_after_last_trial(self, client, audio_dir):
        study_id = create_study(client, audio_dir, n=2, group_count=1,
                                gold_per_group=0)
        session = run_full_session(client, study_id, "p")
        assert (
            client.get(f"/sessions/{session['session_id']}/next").status_code
            == 204
        )

    def test_nth_rating_has_trial_index_n_minus_1(self, client, audio_dir, tmp_path):
        study_id = create_study(client, audio_dir, n=4, group_count=1)
        session_id = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        ).json()["session_id"]
        accepted = []
        for n in range(3):
            trial = client.get(f"/sessions/{session_id}/next").json()
            assert trial["trial_index"] == n
            client.post(
                f"/sessions/{session_id}/ratings",
                json={"trial_index": trial["trial_index"], "rating": 2},
            )
            accepted.append(trial["trial_index"])
        assert accepted == [0, 1, 2]


class TestExportAndDmos:
    def test_export_row_count_matches_session(self, client, audio_dir):
        study_id = create_study(client, audio_dir, n=6, group_count=1,
                                gold_per_group=2)
        session = run_full_session(client, study_id, "p0")
        csv_text = client.get(f"/studies/{study_id}/export").text
        lines = csv_text.strip().splitlines()
        assert lines[0].endswith(",retained")
        assert len(lines) - 1 == session["trial_count"] == 8

    def test_dmos_excludes_gold_and_applies_screening(self, client, audio_dir):
        study_id = create_study(client, audio_dir, n=6, group_count=1,
                                gold_per_group=4)
        run_full_session(client, study_id, "good", rating=5)
        # four gold ratings below 4 cross the screening threshold
        run_full_session(client, study_id, "bad", rating=1)
        export = client.get(f"/studies/{study_id}/export").text
        flags = {
            line.split(",")[3]: line.rsplit(",", 1)[1]
            for line in export.strip().splitlines()[1:]
        }
        assert flags == {"good": "true", "bad": "false"}
        summaries = client.get(f"/studies/{study_id}/dmos").json()
        assert len(summaries) == 6
        assert all(s["dmos"] == 5.0 for s in summaries)  # bad is screened out
        assert all(s["n"] == 1 for s in summaries)
        assert all("gold" not in s["stimulus_id"] for s in summaries)

    def test_served_audio_is_loudness_normalized(self, client, tmp_path):
        audio = tmp_path / "norm"
        audio.mkdir()
        for name in ("ref0", "est0"):
            noise = make_noise(1.0, amplitude=0.3,
                               seed=hash(name) % 2**31)
            normalized, _ = normalize_loudness(noise, -18.0)
            write_wav(audio / f"{name}.wav", normalized)
        study_id = create_study(client, audio, n=1, group_count=1,
                                gold_per_group=0)
        session_id = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        ).json()["session_id"]
        trial = client.get(f"/sessions/{session_id}/next").json()
        for url in (trial["reference_url"], trial["test_url"]):
            body = client.get(url).content
            wav_path = tmp_path / "fetched.wav"
            wav_path.write_bytes(body)
            (buffer,) = load_wav(wav_path)
            lufs = integrated_loudness(buffer).integrated_lufs
            assert lufs == pytest.approx(-18.0, abs=0.2)


class TestDurability:
    def test_replay_restores_all_accepted_ratings(self, tmp_path, audio_dir):
        data_dir = tmp_path / "data"
        store = StudyStore(data_dir, study_seed=3)
        client = TestClient(create_app(store))
        study_id = create_study(client, audio_dir, n=6, group_count=1,
                                gold_per_group=1)
        session_id = client.post(
            f"/studies/{study_id}/sessions", json={"participant_id": "p"}
        ).json()["session_id"]
        for n in range(4):
            trial = client.get(f"/sessions/{session_id}/next").json()
            client.post(
                f"/sessions/{session_id}/ratings",
                json={"trial_index": trial["trial_index"], "rating": 3},
            )
        before = client.get(f"/studies/{study_id}/export").text

        # new process simulation: fresh store over the same directory
        reborn = TestClient(create_app(StudyStore(data_dir, study_seed=3)))
        after = reborn.get(f"/studies/{study_id}/export").text
        assert after == before
        # the session resumes at the server cursor
        trial = reborn.get(f"/sessions/{session_id}/next").json()
        assert trial["trial_index"] == 4

    def test_torn_tail_line_is_ignored(self, tmp_path, audio_dir):
        data_dir = tmp_path / "data"
        store = StudyStore(data_dir, study_seed=3)
        client = TestClient(create_app(store))
        study_id = create_study(client, audio_dir, n=4, group_count=1)
        log_file = next((data_dir / "studies").glob("*.jsonl"))
        with open(log_file, "a", encoding="utf-8") as handle:
            handle.write('{"event": "rating_acce')  # simulated torn write
        reborn = StudyStore(data_dir, study_seed=3)
        assert study_id in reborn.studies


class TestServiceConfig:
    def test_parse(self, tmp_path):
        config_file = tmp_path / "svc.toml"
        config_file.write_text(
            '# comment\nbind = "0.0.0.0:9000"\ndata_dir = "/tmp/x"\n'
            "study_seed = 17\n",
            encoding="utf-8",
        )
        config = parse_service_config(config_file)
        assert config == ServiceConfig(
            host="0.0.0.0", port=9000, data_dir="/tmp/x", study_seed=17
        )

    def test_defaults(self, tmp_path):
        config_file = tmp_path / "svc.toml"
        config_file.write_text("", encoding="utf-8")
        assert parse_service_config(config_file) == ServiceConfig()

    def test_unknown_key(self, tmp_path):
        config_file = tmp_path / "svc.toml"
        config_file.write_text("nope = 1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            parse_service_config(config_file)
