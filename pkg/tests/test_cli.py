"""CLI entry points, exercised in-process through ``main(argv)``."""

from __future__ import annotations

import json
import re

import pytest
import yaml

from homeconsult.bench.corpus import generate_corpus, write_corpus
from homeconsult.bench.runner import ArtifactError
from homeconsult.bench.scenarios import load_scenarios, save_scenarios
from homeconsult.cli import _build_engine_from_config, _load_server_config, main
from homeconsult.generation import NoisyBackend
from homeconsult.router import RouterFeatures, RouterModel


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory, bench_corpus, bench_scenarios, bench_router):
    """A benchmark data directory seeded from the shared session world."""
    d = tmp_path_factory.mktemp("cli_data")
    write_corpus(bench_corpus, str(d), seed=7)
    # both classes must be present (and inside the training split) for
    # train-router to fit
    cx = [sc for sc in bench_scenarios if sc.klass == "complex"][:2]
    sm = [sc for sc in bench_scenarios if sc.klass == "simple"][:6]
    mixed = [cx[0], *sm[:3], cx[1], *sm[3:]]
    save_scenarios(str(d / "scenarios.jsonl"), mixed)
    bench_router.save(str(d / "router.json"))
    return d


@pytest.fixture(scope="module")
def tiny_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny_corpus")
    write_corpus(generate_corpus(5, 40), str(d), seed=5)
    return d


class TestParser:
    def test_subcommand_is_required(self):
        with pytest.raises(SystemExit):
            main([])
        with pytest.raises(SystemExit):
            main(["eval"])


class TestGenCorpus:
    def test_writes_listings_amenities_meta(self, tmp_path, capsys):
        out = tmp_path / "world"
        rc = main(["eval", "gen-corpus", "--seed", "9", "--n", "30", "--out", str(out)])
        assert rc == 0
        assert "wrote 30 listings" in capsys.readouterr().out
        assert len((out / "listings.jsonl").read_text().splitlines()) == 30
        assert json.loads((out / "corpus_meta.json").read_text())["seed"] == 9

    def test_rejects_empty_corpus(self, tmp_path):
        with pytest.raises(ValueError):
            main(["eval", "gen-corpus", "--n", "0", "--out", str(tmp_path / "x")])


class TestKbStats:
    def test_prints_per_label_counts(self, data_dir, capsys):
        rc = main([
            "kb", "stats",
            "--listings", str(data_dir / "listings.jsonl"),
            "--amenities", str(data_dir / "amenities.jsonl"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "nodes:" in out and "edges:" in out
        assert re.search(r"total: \d+ nodes, \d+ edges", out)


class TestGenScenarios:
    def test_generates_and_saves(self, bench_corpus, tmp_path, capsys):
        d = tmp_path / "data"
        write_corpus(bench_corpus, str(d), seed=7)
        rc = main(["eval", "gen-scenarios", "--seed", "31", "--data", str(d), "--n", "4"])
        assert rc == 0
        assert re.search(r"wrote 4 scenarios \(\d+ complex\)", capsys.readouterr().out)
        back = load_scenarios(str(d / "scenarios.jsonl"))
        assert [sc.scenario_id for sc in back] == [f"sc{i:03d}" for i in range(4)]
        assert all(len(sc.turns) == 3 for sc in back)

    def test_missing_artifacts_are_named(self, tmp_path):
        with pytest.raises(ArtifactError, match="listings.jsonl"):
            main(["eval", "gen-scenarios", "--data", str(tmp_path)])


class TestTrainRouter:
    def test_fits_and_saves_weights(self, data_dir, tmp_path, capsys):
        out = tmp_path / "weights.json"
        rc = main(["train-router", "--data", str(data_dir), "--out", str(out)])
        assert rc == 0
        msg = capsys.readouterr().out
        assert re.search(r"trained on \d+ rows \(held out \d+, recall \d\.\d{3}\)", msg)
        model = RouterModel.load(str(out))
        decision = model.predict(RouterFeatures(2, 1, 0.1, 0))
        assert decision.route in ("dense", "graph")


class TestEvalRun:
    def test_single_preset_writes_report_but_fails_assertions(
        self, data_dir, tmp_path, capsys
    ):
        out_dir = tmp_path / "out"
        rc = main([
            "eval", "run", "--preset", "b2", "--data", str(data_dir),
            "--out", str(out_dir), "--seed", "99", "--assert",
        ])
        captured = capsys.readouterr()
        # a one-arm sweep cannot satisfy the cross-preset orderings
        assert rc == 1
        assert "assert mode needs every preset" in captured.err
        assert "overall (all turns)" in captured.out
        assert "report ->" in captured.out
        report = json.loads((out_dir / "report.json").read_text())
        assert report["preset_order"] == ["b2"]
        assert report["scenarios"]["total"] == 8
        assert report["variants"]["b2"]["all"]["turns"] == 24
        assert len((out_dir / "turns.jsonl").read_text().splitlines()) == 24
        assert (out_dir / "tables.txt").exists()


class TestServeConfig:
    def test_engine_built_from_yaml(self, tiny_dir, tmp_path):
        cfg_path = tmp_path / "server.yaml"
        cfg_path.write_text(yaml.safe_dump({
            "listings": str(tiny_dir / "listings.jsonl"),
            "amenities": str(tiny_dir / "amenities.jsonl"),
            "backend": "noisy",
            "clock": "simulated",
            "bundle_size": 7,
        }))
        engine = _build_engine_from_config(_load_server_config(str(cfg_path)))
        assert len(engine.kg.property_ids()) == 40
        assert engine.bundle_size == 7
        assert engine.clock_mode == "simulated"
        assert isinstance(engine.default_backend, NoisyBackend)
        assert engine.router is None

    def test_missing_required_key(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("listings: somewhere.jsonl\n")
        with pytest.raises(SystemExit, match="missing required key 'amenities'"):
            _load_server_config(str(p))

    def test_non_mapping_config(self, tmp_path):
        p = tmp_path / "list.yaml"
        p.write_text("- 1\n- 2\n")
        with pytest.raises(SystemExit, match="must be a mapping"):
            _load_server_config(str(p))

    def test_unknown_backend(self, tiny_dir):
        cfg = {
            "listings": str(tiny_dir / "listings.jsonl"),
            "amenities": str(tiny_dir / "amenities.jsonl"),
            "backend": "oracle",
        }
        with pytest.raises(SystemExit, match="unknown backend"):
            _build_engine_from_config(cfg)

    def test_unknown_clock(self, tiny_dir):
        cfg = {
            "listings": str(tiny_dir / "listings.jsonl"),
            "amenities": str(tiny_dir / "amenities.jsonl"),
            "clock": "lunar",
        }
        with pytest.raises(SystemExit, match="unknown clock"):
            _build_engine_from_config(cfg)
