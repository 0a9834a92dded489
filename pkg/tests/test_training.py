import numpy as np
import pytest

import dgif.model as model_mod
from dgif.checkpoint import decode_params, encode_params, load_checkpoint, save_checkpoint
from dgif.config import TrainConfig, config_text, load_config, parse_config_text
from dgif.data_io import SyntheticSpec, generate_synthetic, parse_text
from dgif.errors import ContractError, DataError, DivergenceError
from dgif.evaluation import evaluate
from dgif.model import ablate
from dgif.training import COMPONENTS, Adam, build_model, joint_loss, sample_targets, train

SMALL = dict(d=8, heads=2, blocks=1, ff_dim=8, pool_dim=4, max_len=24)


def small(**kw):
    return TrainConfig(**{**SMALL, **kw})


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(SyntheticSpec(intents=3, slot_types_per_intent=2, samples=12, max_intents=2,
                                            seed=4)).samples


def unit(R):
    return R / np.linalg.norm(R, axis=1, keepdims=True)


def scalar_loss(model, batch, cfg):
    """Joint objective recomputed with plain numpy from forward outputs."""
    spaces = model.label_spaces()
    Ri, Rs = spaces[0].basis.data, spaces[1].basis.data
    acc = {k: 0.0 for k in COMPONENTS}
    for s in batch:
        gi = [model.intents.names.index(x) for x in s.intents]
        gs = [model.slots.names.index(x) for x in s.slots]
        f = model.forward(s.tokens, spaces, gi)
        z = f.intent_logits.data
        y = np.zeros_like(z)
        y[gi] = 1
        p = 1 / (1 + np.exp(-z))
        acc["l_id"] += np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p)))
        L = f.slot_logits.data
        logp = L - np.log(np.exp(L).sum(axis=1, keepdims=True))
        acc["l_sf"] += -np.mean([logp[t, g] for t, g in enumerate(gs)])
        c = f.count_logits.data
        acc["l_ind"] += -(c[len(gi) - 1] - np.log(np.exp(c).sum()))
        ui, us = unit(Ri), unit(Rs)
        inter_i = 1 + np.mean([ui[a] @ ui[b] for a in gi for b in range(len(Ri))])
        intra_i = np.mean([np.sum((f.r_hat.data - Ri[a]) ** 2) for a in gi])
        acc["l_re_i"] += inter_i + cfg.lam * intra_i
        distinct = list(dict.fromkeys(gs))
        inter_s = 1 + np.mean([us[a] @ us[b] for a in distinct for b in range(len(Rs))])
        intra_s = np.mean([np.sum((f.tokens_hat.data[t] - Rs[g]) ** 2) for t, g in enumerate(gs)])
        acc["l_re_s"] += inter_s + cfg.lam * intra_s
    m = {k: v / len(batch) for k, v in acc.items()}
    a, b, g = cfg.alpha, cfg.beta, cfg.gamma
    return a * (m["l_id"] + g * m["l_re_i"]) + b * (m["l_sf"] + g * m["l_re_s"]) + (1 - a) * m["l_ind"], m


class TestJointLoss:
    def test_two_sample_scalar_oracle(self, corpus):
        cfg = small()
        m = build_model(corpus, cfg)
        batch = corpus[:2]
        expect, parts = scalar_loss(m, batch, cfg)
        got = joint_loss(batch, m)
        assert abs(got.total.item() - expect) < 1e-10
        for k in COMPONENTS:
            assert abs(got.parts[k] - parts[k]) < 1e-10, k

    def test_gamma_zero_switch_off(self, corpus):
        m = build_model(corpus, small(gamma=0.0))
        out = joint_loss(corpus[:3], m)
        p = out.parts
        assert abs(p["total"] - (0.6 * p["l_id"] + p["l_sf"] + 0.4 * p["l_ind"])) < 1e-12

    def test_gamma_linearity(self, corpus):
        batch = corpus[:3]
        rest = []
        for g in (0.3, 0.6):
            m = build_model(corpus, small(gamma=g))
            p = joint_loss(batch, m).parts
            rest.append(p["total"] - 0.6 * p["l_id"] - p["l_sf"] - 0.4 * p["l_ind"])
        assert abs(rest[1] - 2 * rest[0]) < 1e-9

    def test_perfect_predictions(self):
        samples = parse_text("a O\nb O\nPlay\n\nb O\nPlay\n")
        m = build_model(samples, small())
        for k in ("intent.w_i", "slot.w", "count.w"):
            m.params[k].data[:] = 0.0
        m.params["intent.b_i"].data[:] = 60.0
        m.params["slot.b"].data[:] = 60.0
        m.params["count.b"].data[:] = [60.0, 0.0, 0.0]
        p = joint_loss(samples, m).parts
        assert max(p["l_id"], p["l_sf"], p["l_ind"]) <= 1e-9

    def test_empty_batch(self, corpus):
        with pytest.raises(DataError):
            joint_loss([], build_model(corpus, small()))


class TestTargets:
    def test_too_many_intents_names_the_sample(self, corpus):
        m = build_model(corpus, small(max_intents=1))
        two = next(s for s in corpus if len(s.intents) == 2)
        with pytest.raises(DataError, match=" ".join(two.tokens[:2])):
            sample_targets(m, two)

    def test_unknown_label(self, corpus):
        m = build_model(corpus, small())
        with pytest.raises(DataError):
            sample_targets(m, parse_text("x O\nNeverSeen\n")[0])


class TestTrain:
    def test_loss_decreases_within_one_epoch(self, corpus):
        four = corpus[:4]
        cfg = small(epochs=1, batch_size=1)
        before = joint_loss(four, build_model(four, cfg)).parts["total"]
        res = train(four, cfg, val_samples=four)
        assert len(res.log[0].step_losses) == 4
        assert joint_loss(four, res.model).parts["total"] < before

    def test_single_token_utterance_trains(self):
        samples = parse_text("hi O\nGreet\n\nbye B-x\nLeave\n")
        res = train(samples, small(epochs=1))
        f = res.model.forward(("hi",), res.model.label_spaces())
        assert f.graph.intent_slot == set()

    def test_runs_are_bit_identical(self, corpus):
        cfg = small(epochs=2, batch_size=4)
        a, b = train(corpus, cfg), train(corpus, cfg)
        assert a.log_text() == b.log_text()
        assert encode_params(a.model.params) == encode_params(b.model.params)

    def test_best_epoch_weights_are_kept(self, corpus):
        res = train(corpus, small(epochs=3, batch_size=4), val_samples=corpus[:5])
        assert res.best_overall == max(e.val.overall_acc for e in res.log)
        assert evaluate(corpus[:5], res.model.predict(corpus[:5])).overall_acc == res.best_overall

    def test_divergence_aborts_with_finite_checkpoint(self, corpus, tmp_path):
        with np.errstate(all="ignore"), pytest.raises(DivergenceError):
            train(corpus, small(epochs=3, batch_size=2, lr=1e300), checkpoint_dir=tmp_path)
        saved = load_checkpoint(tmp_path)
        assert all(np.all(np.isfinite(p.data)) for p in saved.params.values())

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            train([], small())


class TestAblation:
    def test_no_flags_is_identity(self):
        arch = ablate(TrainConfig())
        assert (arch.gamma, arch.use_lar, arch.use_lsi, arch.use_gil) == (0.3, True, True, True)

    def test_disable_lar_reports_zero_gamma(self):
        assert ablate(TrainConfig(disable_lar=True)).gamma == 0.0

    def test_disable_lar_zeroes_regularizer_terms(self, corpus):
        p = joint_loss(corpus[:2], build_model(corpus, small(disable_lar=True))).parts
        assert p["l_re_i"] == p["l_re_s"] == 0.0

    def test_disable_gil_never_builds_the_graph(self, corpus, monkeypatch):
        def boom(*a, **k):
            raise AssertionError("graph used")
        monkeypatch.setattr(model_mod, "build_graph", boom)
        monkeypatch.setattr(model_mod, "gat_forward", boom)
        m = build_model(corpus, small(disable_gil=True))
        f = m.forward(corpus[0].tokens, m.label_spaces())
        assert f.graph is None and f.attention is not None
        assert np.allclose(f.attention.data.sum(axis=1), 1.0)

    def test_disable_lsi_uses_raw_representations(self, corpus):
        m = build_model(corpus, small(disable_lsi=True))
        f = m.forward(corpus[0].tokens, m.label_spaces())
        assert np.array_equal(f.r_hat.data, f.pooled.vector.data)
        assert np.array_equal(f.tokens_hat.data, f.hidden.tokens.data)

    def test_all_ablations_smoke(self, corpus):
        res = train(corpus, small(epochs=1, disable_lar=True, disable_lsi=True, disable_gil=True))
        assert 0.0 <= res.log[0].val.overall_acc <= 1.0


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, corpus, tmp_path):
        res = train(corpus, small(epochs=1, batch_size=4), overrides={"o": "outside"})
        save_checkpoint(tmp_path, res.model)
        back = load_checkpoint(tmp_path)
        assert list(back.params) == list(res.model.params)
        for k, v in res.model.params.items():
            assert np.array_equal(back.params[k].data, v.data) and back.params[k].shape == v.shape
        assert back.config == res.model.config and back.overrides == {"o": "outside"}
        before = evaluate(corpus, res.model.predict(corpus))
        after = evaluate(corpus, back.predict(corpus))
        assert before.key_values() == after.key_values()

    def test_corrupt_payloads(self, corpus):
        blob = encode_params(build_model(corpus, small()).params)
        with pytest.raises(ContractError):
            decode_params(b"NOTACKPT" + blob[8:])
        with pytest.raises(ContractError):
            decode_params(blob + b"\0")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ContractError):
            load_checkpoint(tmp_path / "nope")


def test_adam_first_step_moves_by_lr():
    from dgif.numerics import Tensor
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    Adam({"p": p}, lr=0.1).step()
    assert np.allclose(p.data, [0.9, -1.9], atol=1e-8)


class TestConfig:
    def test_text_round_trip(self):
        cfg = TrainConfig(alpha=0.5, delta=0.2, disable_gil=True, gat_activation="sigmoid")
        assert TrainConfig(**parse_config_text(config_text(cfg))) == cfg
        assert TrainConfig(**parse_config_text(config_text(TrainConfig()))) == TrainConfig()

    def test_overrides_beat_file(self, tmp_path):
        (tmp_path / "c.cfg").write_text("# comment\nepochs = 7\nlr=0.01  # inline\n")
        cfg = load_config(tmp_path / "c.cfg", {"epochs": 3, "seed": None})
        assert (cfg.epochs, cfg.lr, cfg.seed) == (3, 0.01, 0)

    @pytest.mark.parametrize("text", ["epochs", "nope=1", "epochs=two", "disable_lar=maybe"])
    def test_malformed(self, text):
        with pytest.raises(ContractError):
            parse_config_text(text)

    @pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(gamma=-1), dict(epochs=0), dict(delta=1.0),
                                    dict(window=-1), dict(slot_intra="x"), dict(d=10, heads=4)])
    def test_invariants(self, kw):
        with pytest.raises(ContractError):
            TrainConfig(**kw)
