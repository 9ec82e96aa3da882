import json
import os
import warnings

import numpy as np
import pytest

from dialectid import corpus, ctc, pipeline
from dialectid.checkpoint import load_checkpoint
from dialectid.errors import DataFault, IncompatibleCheckpoint, InvalidShape
from dialectid.models import ModelConfig
from dialectid.pipeline import (FeatureProvider, TrainConfig, edit_distance,
                                split_train_val)

MC = ModelConfig(scale="micro", vocab_size=12, n_dialects=4)


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    spec = corpus.SynthSpec(n_dialects=4, vocab_size=12, train_per_dialect=3,
                            test_per_dialect=2, duration_range=(1.0, 3.5), seed=21)
    train, test = corpus.synth_corpus(spec, root)
    return str(root), train, test


@pytest.fixture(scope="module")
def trained_am(tmp_path_factory):
    """50 train utterances, full 30-epoch budget; reused by the
    convergence, decode and alignment checks."""
    root = tmp_path_factory.mktemp("am50")
    spec = corpus.SynthSpec(n_dialects=4, vocab_size=12, train_per_dialect=13,
                            test_per_dialect=1, duration_range=(1.0, 3.5), seed=33)
    train, _ = corpus.synth_corpus(spec, root)
    train = corpus.Manifest(train.records[:50], "train")
    features = FeatureProvider(root)
    cfg = TrainConfig.for_stage("am", max_epochs=30, patience=30, seed=0,
                                val_fraction=0.0)
    logs = []

    class Log:
        def write(self, obj):
            logs.append(obj)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ckpt = pipeline.train_am_ctc(train, MC, cfg, features, logger=Log())
    return root, train, features, ckpt, logs


class TestHelpers:
    def test_edit_distance(self):
        assert edit_distance([1, 2, 3], [1, 2, 3]) == 0
        assert edit_distance([1, 2, 3], [1, 3]) == 1
        assert edit_distance([], [1, 2]) == 2
        assert edit_distance([1, 2], [2, 1]) == 2

    def test_split_train_val_deterministic(self, tiny):
        _, train, _ = tiny
        a1, v1 = split_train_val(train, 0.25, seed=5)
        a2, v2 = split_train_val(train, 0.25, seed=5)
        assert [r.utt_id for r in v1] == [r.utt_id for r in v2]
        assert len(v1) == 3
        assert {r.utt_id for r in a1} | {r.utt_id for r in v1} == \
               {r.utt_id for r in train}

    def test_stage_defaults(self):
        assert TrainConfig.for_stage("am").dropout == 0.0
        assert TrainConfig.for_stage("lid").dropout == 0.5
        with pytest.raises(InvalidShape):
            TrainConfig(stage="am", dropout=0.5)


class TestAmTraining:
    def test_loss_halves_over_30_epochs(self, trained_am):
        _, _, _, _, logs = trained_am
        losses = [e["train_loss"] for e in logs if e["stage"] == "am"]
        assert len(losses) == 30
        assert losses[-1] < 0.5 * losses[0]

    def test_greedy_decode_after_convergence(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        am_cfg = ModelConfig.from_dict(ckpt.meta["model_config"])
        from dialectid.models import AmModel
        am = AmModel(am_cfg, store=ckpt.store)
        err = 0
        total = 0
        for record in list(train)[:10]:
            lattice, _ = am.forward(features.get(record), train_mode=False)
            hyp = ctc.ctc_greedy_decode(lattice.data)
            err += edit_distance(hyp, record.labels)
            total += len(record.labels)
        assert 1.0 - err / total >= 0.8

    def test_infeasible_utterance_skipped(self, tiny):
        root, train, _ = tiny
        records = [corpus.UtteranceRecord(r.utt_id, r.path, r.duration, r.dialect,
                                          list(r.labels)) for r in train.records[:4]]
        # 1 s of audio gives ~25 lattice frames; 40 labels cannot fit
        records[0].labels = [1, 2] * 20
        bad = corpus.Manifest(records, "train")
        features = FeatureProvider(root)
        cfg = TrainConfig.for_stage("am", max_epochs=1, seed=0, val_fraction=0.0)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            ckpt = pipeline.train_am_ctc(bad, MC, cfg, features)
        assert ckpt.meta["skipped"] == 1
        assert any("skipped" in str(w.message) for w in caught)


class TestAlignment:
    def test_alignments_collapse_and_have_lattice_length(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        subset = corpus.Manifest(train.records[:8], "train")
        rows, skipped = pipeline.align_corpus(subset, ckpt, features)
        assert skipped == 0
        by_id = dict(rows)
        for record in subset:
            alignment = by_id[record.utt_id]
            n_frames = features.get(record).shape[0]
            assert len(alignment) == -(-n_frames // 4)
            assert ctc.collapse(alignment) == record.labels

    def test_rerun_identical(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        subset = corpus.Manifest(train.records[:4], "train")
        a, _ = pipeline.align_corpus(subset, ckpt, features)
        b, _ = pipeline.align_corpus(subset, ckpt, features)
        assert a == b


class TestLidStage:
    def test_freeze_contract_and_overfit(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        eight = corpus.Manifest(train.records[:8], "train")
        before = ckpt.store.state_bytes()
        cfg = TrainConfig.for_stage("lid", max_epochs=200, patience=200, seed=0,
                                    val_fraction=0.0, batch_size=8, lr=3e-3,
                                    min_improve=0.0)
        lid = pipeline.train_lid_on_intermediate(eight, ckpt, MC, cfg, features)
        assert ckpt.store.state_bytes() == before
        assert max(lid.meta["history"]) == 1.0  # training accuracy reaches 100%

    def test_vocab_hash_mismatch(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        from dialectid.checkpoint import Checkpoint
        doctored = Checkpoint(ckpt.store, dict(ckpt.meta, vocab_hash="deadbeef"))
        cfg = TrainConfig.for_stage("lid", max_epochs=1, seed=0)
        with pytest.raises(IncompatibleCheckpoint):
            pipeline.train_lid_on_intermediate(train, doctored, MC, cfg, features)


class TestFrameCeStage:
    def test_frame_accuracy_beats_chance(self, trained_am):
        root, train, features, ckpt, _ = trained_am
        subset = corpus.Manifest(train.records[:16], "train")
        rows, _ = pipeline.align_corpus(subset, ckpt, features)
        cfg = TrainConfig.for_stage("frame_ce", max_epochs=10, patience=10,
                                    seed=0, val_fraction=0.0)
        cnn = pipeline.train_frame_ce_cnn(subset, dict(rows), MC, cfg, features)
        chance = 1.0 / (MC.vocab_size + 1)
        assert max(cnn.meta["history"]) >= 3.0 * chance

    def test_wrong_alignment_length_is_data_fault(self, tiny):
        root, train, _ = tiny
        features = FeatureProvider(root)
        record = train.records[0]
        subset = corpus.Manifest([record], "train")
        bad = {record.utt_id: [0, 1, 2]}  # wrong length
        cfg = TrainConfig.for_stage("frame_ce", max_epochs=1, seed=0,
                                    val_fraction=0.0)
        with pytest.raises(DataFault):
            pipeline.train_frame_ce_cnn(subset, bad, MC, cfg, features)


class TestDrivers:
    def run_all(self, root, train, out, seed):
        features = FeatureProvider(root)
        kw = dict(max_epochs=2, patience=2, seed=seed, val_fraction=0.25)
        two = pipeline.run_two_stage(
            root, train, MC,
            {"am": TrainConfig.for_stage("am", **kw),
             "lid": TrainConfig.for_stage("lid", **kw)},
            os.path.join(out, "two"), features=features)
        base = pipeline.run_baseline(
            root, train, MC, TrainConfig.for_stage("baseline", **kw),
            os.path.join(out, "base"), features=features)
        three = pipeline.run_three_stage(
            root, train, MC,
            {"am": TrainConfig.for_stage("am", **kw),
             "frame_ce": TrainConfig.for_stage("frame_ce", **kw),
             "lid": TrainConfig.for_stage("lid", **kw)},
            os.path.join(out, "three"), features=features,
            am_checkpoint=two.checkpoints["am"])
        return two, base, three

    def test_stage_counts_and_artifacts(self, tiny, tmp_path):
        root, train, _ = tiny
        two, base, three = self.run_all(root, train, str(tmp_path), seed=1)
        assert len(base.convergence.stages) == 1
        assert len(two.convergence.stages) == 2
        assert len(three.convergence.stages) == 3
        assert [s for s, _ in three.convergence.stages] == ["am", "frame_ce", "lid"]
        for d, names in [(two.out_dir, ["am.ckpt", "lid.ckpt"]),
                         (base.out_dir, ["baseline.ckpt"]),
                         (three.out_dir, ["am.ckpt", "cnn.ckpt", "lid.ckpt",
                                          "align.tsv"])]:
            for name in names + ["system.json", "train_log.jsonl"]:
                assert os.path.exists(os.path.join(d, name)), (d, name)

    def test_training_log_is_jsonl(self, tiny, tmp_path):
        root, train, _ = tiny
        features = FeatureProvider(root)
        out = tmp_path / "b"
        pipeline.run_baseline(root, train, MC,
                              TrainConfig.for_stage("baseline", max_epochs=2,
                                                    seed=0, val_fraction=0.25),
                              str(out), features=features)
        lines = (out / "train_log.jsonl").read_text().splitlines()
        assert lines
        for line in lines:
            obj = json.loads(line)
            assert {"stage", "epoch", "val_metric"} <= set(obj)

    def test_rerun_same_seed_identical(self, tiny, tmp_path):
        root, train, _ = tiny
        features = FeatureProvider(root)
        cfgs = {"am": TrainConfig.for_stage("am", max_epochs=2, seed=3,
                                            val_fraction=0.25),
                "lid": TrainConfig.for_stage("lid", max_epochs=2, seed=3,
                                             val_fraction=0.25)}
        a = pipeline.run_two_stage(root, train, MC, cfgs, str(tmp_path / "a"),
                                   features=features)
        b = pipeline.run_two_stage(root, train, MC, cfgs, str(tmp_path / "b"),
                                   features=features)
        for name in ("am", "lid"):
            ha = a.checkpoints[name].meta["history"]
            hb = b.checkpoints[name].meta["history"]
            assert ha == hb
        bytes_a = (tmp_path / "a" / "lid.ckpt").read_bytes()
        bytes_b = (tmp_path / "b" / "lid.ckpt").read_bytes()
        assert bytes_a == bytes_b

    def test_am_checkpoint_frozen_through_stage2(self, tiny, tmp_path):
        root, train, _ = tiny
        features = FeatureProvider(root)
        out = tmp_path / "frozen"
        res = pipeline.run_two_stage(
            root, train, MC,
            {"am": TrainConfig.for_stage("am", max_epochs=2, seed=4,
                                         val_fraction=0.25),
             "lid": TrainConfig.for_stage("lid", max_epochs=2, seed=4,
                                          val_fraction=0.25)},
            str(out), features=features)
        saved = load_checkpoint(out / "am.ckpt")
        assert saved.store.state_bytes() == res.checkpoints["am"].store.state_bytes()
