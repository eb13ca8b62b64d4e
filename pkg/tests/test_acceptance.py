"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line; the lines are repeated
in the terminal summary.
"""
import time

import numpy as np
import pytest
import torch

from dgn.checkpoint import load_checkpoint
from dgn.data.curation import DROPPED_DARK, DROPPED_DUPLICATE, KEPT, HashCode, ManifestEntry, brightness_filter, dedup, hamming, tile
from dgn.data.degradation import bicubic_upsample, degrade_sr
from dgn.data.sampling import BatchConfig
from dgn.evaluate import restore
from dgn.inter_sim import LshConfig, SparseNonLocalAttention
from dgn.intra_sim import DFE, RelPosBias, csc, ssc, window_partition
from dgn.losses import aid_loss, image_loss, total_loss
from dgn.metrics import psnr, ssim
from dgn.model import DSEBlock, build_model
from dgn.schedule import LrSchedule, lr_at
from dgn.train import read_metrics, train

from helpers import (
    aid_oracle,
    csc_oracle,
    dense_attention_oracle,
    fd_max_relative_error,
    natural_crop,
    overfit_config,
    randomize_group_convs,
    ssc_oracle,
    ssim_oracle,
    tiny_config,
    windowset,
)

INSTANCES = 100
FD_TOL = 1e-4


def _random_window_case(rng):
    win = int(rng.integers(1, 9))  # area <= 64
    d = int(rng.integers(1, 17))  # C/2 <= 16
    nw = int(rng.integers(1, 4))
    q = rng.standard_normal((nw, win * win, d))
    v = rng.standard_normal((nw, win * win, d))
    return win, q, v


def test_criterion_1_attention_oracles(criterion):
    with criterion(1, "SSC, CSC and degenerate sparse attention match brute force within 1e-6"):
        start = time.perf_counter()
        rng = np.random.default_rng(20240601)
        worst = {"ssc": 0.0, "csc": 0.0, "sparse": 0.0}
        for _ in range(INSTANCES):
            win, q, v = _random_window_case(rng)
            bias = rng.standard_normal((win * win, win * win))
            out = ssc(windowset(q, win), windowset(v, win), torch.tensor(bias)).windows.numpy()
            worst["ssc"] = max(worst["ssc"], np.abs(out - ssc_oracle(q, v, bias)).max())
        for _ in range(INSTANCES):
            win, q, v = _random_window_case(rng)
            out = csc(windowset(q, win), windowset(v, win)).windows.numpy()
            worst["csc"] = max(worst["csc"], np.abs(out - csc_oracle(q, v)).max())
        for i in range(INSTANCES):
            c = int(rng.integers(1, 17))
            h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            torch.manual_seed(i)
            # one round and one chunk covering every position: bucketing is a no-op
            m = SparseNonLocalAttention(c, LshConfig(num_rounds=1, num_buckets=4, chunk_size=64, seed=i)).double()
            x = rng.standard_normal((c, h, w))
            out = m(torch.tensor(x)[None])[0].detach().numpy()
            worst["sparse"] = max(worst["sparse"], np.abs(out - dense_attention_oracle(x, m.proj)).max())
        print(f"  max abs error over {INSTANCES} instances each: {worst}")
        assert all(e < 1e-6 for e in worst.values())
        assert time.perf_counter() - start < 60


def test_criterion_2_gradients(criterion):
    with criterion(2, "finite-difference gradient suite, relative error <= 1e-4"):
        start = time.perf_counter()
        errs = {}
        torch.manual_seed(0)
        dfe = DFE(4).double()
        x = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
        errs["dfe"] = fd_max_relative_error(lambda: dfe(x), full=[x], directional=list(dfe.parameters()))

        bias = RelPosBias(3).double()
        q = torch.randn(2, 9, 4, dtype=torch.float64, requires_grad=True)
        v = torch.randn(2, 9, 4, dtype=torch.float64, requires_grad=True)
        errs["ssc"] = fd_max_relative_error(lambda: ssc(windowset(q, 3), windowset(v, 3), bias).windows, full=[q, v, bias.table])
        errs["csc"] = fd_max_relative_error(lambda: csc(windowset(q, 3), windowset(v, 3)).windows, full=[q, v])

        torch.manual_seed(1)
        sna = SparseNonLocalAttention(4, LshConfig(num_rounds=2, num_buckets=4, chunk_size=4, seed=2)).double()
        xs = torch.randn(1, 4, 4, 8, dtype=torch.float64, requires_grad=True)
        errs["sparse"] = fd_max_relative_error(lambda: sna(xs), full=[xs], directional=list(sna.parameters()))

        torch.manual_seed(2)
        block = DSEBlock(8, 2, LshConfig(num_rounds=2, num_buckets=4, chunk_size=8)).double()
        b2 = RelPosBias(2).double()
        xb = torch.randn(1, 8, 4, 4, dtype=torch.float64, requires_grad=True)
        xd = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
        errs["dse"] = fd_max_relative_error(
            lambda: block(xb, xd, b2), full=[xb, xd], directional=list(block.parameters()) + [b2.table]
        )

        gen = torch.Generator().manual_seed(3)
        p = torch.rand(2, 1, 3, 3, generator=gen, dtype=torch.float64).expand(2, 3, 3, 3).contiguous().requires_grad_()
        t = torch.rand(2, 1, 3, 3, generator=gen, dtype=torch.float64).expand(2, 3, 3, 3).contiguous()
        errs["aid"] = fd_max_relative_error(lambda: aid_loss(p, t), full=[p])

        m = build_model(tiny_config(channels=8, num_groups=2, blocks_per_group=2), dtype=torch.float64)
        randomize_group_convs(m, std=0.1)
        xi = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        xid = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
        errs["dgn"] = fd_max_relative_error(lambda: m(xi, xid), full=[xi, xid], directional=list(m.parameters()), num_dirs=1)

        print("  " + ", ".join(f"{k}={v:.2e}" for k, v in errs.items()))
        assert all(e <= FD_TOL for e in errs.values())
        assert time.perf_counter() - start < 300


def test_criterion_3_block_conformance(criterion):
    with criterion(3, "DSE channel bookkeeping and depth-disabled invariance"):
        c, w = 16, 4
        m = build_model(tiny_config(channels=c), dtype=torch.float64)
        for g in m.groups:
            for b in g.blocks:
                assert (b.proj.in_features, b.proj.out_features) == (c, c)
                assert (b.proj_d.in_features, b.proj_d.out_features) == (c // 2, c // 2)

        torch.manual_seed(0)
        block = DSEBlock(c, w, LshConfig(num_rounds=2, num_buckets=4, chunk_size=8)).double()
        bias = RelPosBias(w).double()
        seen = {}
        block.dfe.register_forward_hook(lambda mod, i, o: seen.__setitem__("dfe", o))
        block.dfe_d.register_forward_hook(lambda mod, i, o: seen.__setitem__("dfe_d", o))
        block.inter.register_forward_hook(lambda mod, i, o: seen.__setitem__("inter", o))
        block.norm.register_forward_pre_hook(lambda mod, i: seen.__setitem__("t", i[0]))
        block.norm_d.register_forward_pre_hook(lambda mod, i: seen.__setitem__("t_d", i[0]))
        block(torch.randn(1, c, 8, 8, dtype=torch.float64), torch.randn(1, c // 2, 8, 8, dtype=torch.float64), bias)

        def win(t):
            return window_partition(t, w).windows.detach().numpy()

        dq, dd = win(seen["dfe"]), win(seen["dfe_d"])
        q, v, q_d, v_d = dq[..., : c // 4], dq[..., c // 4 :], dd[..., : c // 4], dd[..., c // 4 :]
        b = bias().detach().numpy()
        t, t_d = win(seen["t"]), win(seen["t_d"])
        assert t.shape[-1] == c and t_d.shape[-1] == c // 2
        assert np.allclose(t[..., : c // 4], csc_oracle(q, v), atol=1e-10)
        assert np.allclose(t[..., c // 4 : c // 2], ssc_oracle(q, v, b) + ssc_oracle(q_d, v, b), atol=1e-10)
        assert torch.equal(seen["t"][:, c // 2 :], seen["inter"]) and seen["inter"].shape[1] == c // 2
        assert np.allclose(t_d[..., : c // 4], csc_oracle(q_d, v_d), atol=1e-10)
        assert np.allclose(t_d[..., c // 4 :], ssc_oracle(q_d, v_d, b) + ssc_oracle(q, v_d, b), atol=1e-10)

        off = build_model(tiny_config(depth_enabled=False))
        randomize_group_convs(off)
        x = torch.rand(2, 3, 8, 8)
        y1, d1 = off(x, torch.rand(2, 3, 8, 8))
        y2, _ = off(x, torch.randn(2, 3, 8, 8) * 1e3)
        y3, _ = off(x, None)
        assert d1 is None and torch.equal(y1, y2) and torch.equal(y1, y3)


def test_criterion_4_shapes(criterion):
    with criterion(4, "sr x4 and denoise shape contracts for both branches"):
        sr = build_model(tiny_config())
        dn = build_model(tiny_config(task="denoise", scale=1))
        for b, h, w in [(1, 8, 8), (2, 12, 20), (3, 5, 7)]:
            y, y_d = sr(torch.rand(b, 3, h, w), torch.rand(b, 3, h, w))
            assert y.shape == y_d.shape == (b, 3, 4 * h, 4 * w)
            y, y_d = dn(torch.rand(b, 3, h, w), torch.rand(b, 3, h, w))
            assert y.shape == y_d.shape == (b, 3, h, w)


def test_criterion_5_overfit(criterion, tmp_path):
    with criterion(5, "tiny model overfits one 64x64 crop: beats bicubic, loss falls every 50 iterations"):
        start = time.perf_counter()
        crop = natural_crop(seed=0, size=64)
        pair = degrade_sr(crop, 4)
        state = train(
            overfit_config(),
            LrSchedule.scaled(300),
            [pair],
            tmp_path,
            BatchConfig(batch_size=1, patch_size=64, scale=4, augment=False),
            seed=0,
        )
        losses = [r["total"] for r in read_metrics(tmp_path / "metrics.jsonl")]
        assert len(losses) == 300
        windows = [float(np.mean(losses[i : i + 50])) for i in range(0, 300, 50)]
        ours = psnr(restore(state.model, pair.lq, pair.lq_depth), crop)
        base = psnr(bicubic_upsample(pair.lq, 4), crop)
        print(f"  model {ours:.3f} dB vs bicubic {base:.3f} dB; 50-iteration mean losses {[round(w, 5) for w in windows]}")
        assert ours > base
        assert all(b < a for a, b in zip(windows, windows[1:]))
        assert time.perf_counter() - start < 600


def test_criterion_6_loss_identities(criterion):
    with criterion(6, "total loss composition and AID affine invariance"):
        gen = torch.Generator().manual_seed(6)

        def depth(b=2):
            return torch.rand(b, 1, 8, 8, generator=gen, dtype=torch.float64).expand(b, 3, 8, 8).contiguous()

        y, x = torch.rand(2, 3, 8, 8, generator=gen, dtype=torch.float64), torch.rand(2, 3, 8, 8, generator=gen, dtype=torch.float64)
        yd, xd = depth(), depth()
        r = total_loss(y, x, yd, xd)
        assert torch.equal(r.total, r.image_loss + 0.01 * r.depth_l1 + 0.01 * r.depth_aid)
        assert torch.equal(r.image_loss, image_loss(y, x)) and torch.equal(r.depth_l1, image_loss(yd, xd))
        assert abs(float(r.depth_aid) - aid_oracle(yd.numpy(), xd.numpy())) < 1e-9
        rng = np.random.default_rng(6)
        worst = 0.0
        base = float(aid_loss(yd, xd))
        for _ in range(200):
            a, b = float(rng.uniform(0.01, 100)), float(rng.uniform(-100, 100))
            worst = max(worst, abs(float(aid_loss(a * yd + b, xd)) - base), abs(float(aid_loss(yd, a * xd + b)) - base))
        print(f"  max AID change under 200 affine maps per argument: {worst:.2e}")
        assert worst < 1e-7


def test_criterion_7_metrics(criterion):
    with criterion(7, "PSNR offsets, SSIM identities and scalar SSIM oracle"):
        z = torch.zeros(3, 16, 16, dtype=torch.float64)
        assert abs(psnr(z, z + 0.5) - 6.0206) < 1e-4
        assert abs(psnr(z, z + 0.1) - 20.0) < 1e-4
        gen = torch.Generator().manual_seed(7)
        a = torch.rand(3, 16, 16, generator=gen, dtype=torch.float64)
        assert abs(ssim(a, a) - 1.0) < 1e-12
        assert abs(ssim(z, torch.ones_like(z)) - 1e-4) < 1e-7
        b = 0.7 * a + 0.3 * torch.rand(3, 16, 16, generator=gen, dtype=torch.float64)
        diff = abs(ssim(a, b) - ssim_oracle(a.numpy(), b.numpy()))
        print(f"  SSIM vs scalar oracle: {diff:.2e}")
        assert diff < 1e-6


def test_criterion_8_curation(criterion):
    with criterion(8, "Hamming metric, designed dedup, brightness boundary, 12-patch tiling"):
        rng = np.random.default_rng(8)
        codes = [HashCode(int(c)) for c in rng.integers(0, 2**63, size=30, dtype=np.int64)]
        for h1 in codes[:10]:
            for h2 in codes[10:20]:
                assert hamming(h1, h2) == hamming(h2, h1) == bin(h1.bits ^ h2.bits).count("1")
                for h3 in codes[20:]:
                    assert hamming(h1, h3) <= hamming(h1, h2) + hamming(h2, h3)
            assert hamming(h1, h1) == 0

        def entry(i, bits):
            return ManifestEntry(i, "c", HashCode(bits), 100.0)

        # b is 3 bits from a; c is 20 bits from a and 17 from b
        m = dedup([entry("b", 0b111), entry("c", (1 << 20) - 1), entry("a", 0)], delta=10)
        assert [e.image_id for e in m.kept()] == ["a", "c"]
        assert m.by_id()["b"].verdict == DROPPED_DUPLICATE
        again = dedup(m.kept(), delta=10)
        assert [e.image_id for e in again.kept()] == ["a", "c"]

        assert brightness_filter(np.full((4, 4, 3), 40, dtype=np.uint8)) == KEPT
        assert brightness_filter(np.full((4, 4, 3), 39.9)) == DROPPED_DARK
        rects = tile((6159, 4131), 1535, 1151)
        assert len(rects) == 12 and all((w, h) == (1535, 1151) for _, _, w, h in rects)


def test_criterion_9_schedule_and_reproducibility(criterion, tmp_path):
    with criterion(9, "lr levels at milestones, bitwise resume, same-seed logs"):
        s = LrSchedule()
        levels = [lr_at(s, it) for it in (0, 250_000, 400_000, 450_000, 475_000)]
        assert levels == pytest.approx([3e-4, 1.5e-4, 7.5e-5, 3.75e-5, 1.875e-5], rel=1e-12)
        short = LrSchedule.scaled(40)
        assert [lr_at(short, m) for m in (0,) + short.milestones] == pytest.approx(levels, rel=1e-12)

        data = [degrade_sr(natural_crop(seed=i, size=96), 4) for i in range(2)]
        batch = BatchConfig(batch_size=2, patch_size=32, scale=4)
        full = train(tiny_config(), short, data, tmp_path / "a", batch, seed=3, checkpoint_every=20)
        train(tiny_config(), short, data, tmp_path / "b", batch, seed=3)
        resumed = train(tiny_config(), short, data, tmp_path / "c", batch, seed=3, resume_from=tmp_path / "a" / "ckpt_20.pt")
        log_a = read_metrics(tmp_path / "a" / "metrics.jsonl")
        assert log_a == read_metrics(tmp_path / "b" / "metrics.jsonl")
        assert read_metrics(tmp_path / "c" / "metrics.jsonl") == log_a[20:]
        ref, _ = load_checkpoint(tmp_path / "a" / "last.pt")
        for (k, p), (_, q) in zip(full.model.state_dict().items(), resumed.model.state_dict().items()):
            assert torch.equal(p, q), k
            assert torch.equal(p, ref.state_dict()[k]), k
