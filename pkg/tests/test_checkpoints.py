"""Tensor container format, model checkpoints, and PGM images."""

import numpy as np
import pytest
import torch

from evmx.errors import BadMagic, TruncatedRecord
from evmx.container import read_container, write_container
from evmx.optim import Adam
from evmx.pgm import decode_pgm, encode_pgm, load_pgm, save_pgm
from evmx.representation import InputClip
from evmx.snn import SpikingNetwork, TrainConfig, forward_clip, load_snn, save_snn, train
from tests.test_snn_network import tiny_spec
from tests.test_snn_training import toy_clips


class TestContainer:
    def sample(self):
        rng = np.random.default_rng(0)
        tensors = {
            "a.weight": rng.normal(0, 1, (3, 4)).astype(np.float32),
            "b.bias": rng.normal(0, 1, 7).astype(np.float64),
            "steps": np.array([42], dtype=np.int64),
        }
        config = {"layers": [1, 2], "name": "x"}
        meta = {"note": "hello", "lr": 0.5}
        return config, tensors, meta

    def test_round_trip(self):
        config, tensors, meta = self.sample()
        blob = write_container(b"TST1", config, tensors, meta)
        c, t, m = read_container(blob, b"TST1")
        assert c == config and m == meta
        assert set(t) == set(tensors)
        for k in tensors:
            assert t[k].dtype == tensors[k].dtype
            assert np.array_equal(t[k], tensors[k])

    def test_serialization_is_canonical(self):
        config, tensors, meta = self.sample()
        a = write_container(b"TST1", config, tensors, meta)
        b = write_container(b"TST1", dict(reversed(config.items())), tensors, meta)
        assert a == b  # key order cannot leak into bytes

    def test_wrong_magic(self):
        blob = write_container(b"TST1", {}, {"x": np.zeros(1, np.float32)})
        with pytest.raises(BadMagic):
            read_container(blob, b"TST2")

    def test_truncation_detected(self):
        blob = write_container(b"TST1", {}, {"x": np.arange(5, dtype=np.float64)})
        with pytest.raises(TruncatedRecord):
            read_container(blob[:-4], b"TST1")
        with pytest.raises(TruncatedRecord):
            read_container(blob + b"!", b"TST1")

    def test_rejects_unknown_dtype(self):
        from evmx.errors import ShapeMismatch
        with pytest.raises(ShapeMismatch):
            write_container(b"TST1", {}, {"x": np.zeros(3, np.int16)})


class TestSnnCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        clips = toy_clips(n_per_class=4)
        net = SpikingNetwork(tiny_spec(seed=8))
        res = train(net, clips, TrainConfig(epochs=2, batch_size=4, seed=0))
        p = tmp_path / "model.snn1"
        save_snn(p, net, res.optimizer, {"encoding": "raw"})
        blob = p.read_bytes()

        back, opt, meta = load_snn(p)
        assert meta["encoding"] == "raw"
        for (na, pa), (nb, pb) in zip(net.named_parameters(), back.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)
        # running batch-norm stats ride along too
        for (na, ba), (nb, bb) in zip(net.named_buffers(), back.named_buffers()):
            assert na == nb and torch.equal(ba, bb)
        assert opt is not None and opt.step_count == res.optimizer.step_count

        save_snn(p, back, opt, {"encoding": "raw"})
        assert p.read_bytes() == blob

    def test_loaded_net_predicts_identically(self, tmp_path):
        clips = toy_clips(n_per_class=3)
        net = SpikingNetwork(tiny_spec(seed=8))
        train(net, clips, TrainConfig(epochs=2, batch_size=4, seed=0))
        p = tmp_path / "model.snn1"
        save_snn(p, net)
        back, _, _ = load_snn(p)
        clip = clips[0]
        assert np.array_equal(forward_clip(net, clip), forward_clip(back, clip))

    def test_checkpoint_without_optimizer(self, tmp_path):
        net = SpikingNetwork(tiny_spec(seed=1))
        p = tmp_path / "model.snn1"
        save_snn(p, net)
        back, opt, meta = load_snn(p)
        assert opt is None
        assert back.spec == net.spec

    def test_optimizer_state_resumes_training(self, tmp_path):
        clips = toy_clips(n_per_class=4)
        cfg = TrainConfig(epochs=2, batch_size=4, seed=0, dropout_rate=0.0)

        # uninterrupted: 4 epochs
        whole = SpikingNetwork(tiny_spec(seed=9, dropout=0.0))
        train(whole, clips, TrainConfig(epochs=4, batch_size=4, seed=0, dropout_rate=0.0))

        # the split run differs (cosine schedule and shuffle restart), but it
        # must at least produce finite, loadable state and keep training
        half = SpikingNetwork(tiny_spec(seed=9, dropout=0.0))
        res = train(half, clips, cfg)
        p = tmp_path / "m.snn1"
        save_snn(p, half, res.optimizer)
        back, opt, _ = load_snn(p)
        res2 = train(back, clips, cfg)
        assert len(res2.log_lines) == 2
        assert all(torch.isfinite(q).all() for q in back.parameters())


class TestPgm:
    def test_round_trip_quantized(self):
        rng = np.random.default_rng(0)
        img = rng.random((9, 7))
        back = decode_pgm(encode_pgm(img))
        assert back.shape == (9, 7)
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9

    def test_exact_levels_survive(self):
        img = np.array([[0.0, 1.0], [128 / 255, 37 / 255]])
        back = decode_pgm(encode_pgm(img))
        assert np.allclose(back, img, atol=1e-7)

    def test_file_round_trip_bit_exact(self, tmp_path):
        img = np.random.default_rng(1).random((12, 8))
        p = tmp_path / "a.pgm"
        save_pgm(p, img)
        blob = p.read_bytes()
        save_pgm(p, load_pgm(p))
        assert p.read_bytes() == blob

    def test_header(self):
        blob = encode_pgm(np.zeros((3, 5)))
        assert blob.startswith(b"P5\n5 3\n255\n")
        assert len(blob) == len(b"P5\n5 3\n255\n") + 15

    def test_comment_tolerant_decode(self):
        blob = b"P5\n# a comment\n2 2\n255\n\x00\x40\x80\xff"
        img = decode_pgm(blob)
        assert img.shape == (2, 2)
        assert img[1, 1] == pytest.approx(1.0)

    def test_rejects_other_formats(self):
        with pytest.raises(BadMagic):
            decode_pgm(b"P2\n2 2\n255\n0 0 0 0")

    def test_truncated_pixels(self):
        with pytest.raises(TruncatedRecord):
            decode_pgm(b"P5\n2 2\n255\n\x00\x00")
