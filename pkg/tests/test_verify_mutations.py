"""The verification suite must actually catch injected defects."""

import numpy as np

from echoclutter import metrics
from echoclutter.sequence import Sequence
from echoclutter.verify import check_pooling_oracle, check_ssim


def test_wrong_pooling_tie_break_fails_oracle():
    def wrong_pool(x):
        n, c, h, w, f = x.shape
        cand = (x.reshape(n, c, h // 2, 2, w // 2, 2, f)
                 .transpose(0, 1, 2, 4, 6, 3, 5)
                 .reshape(n, c, h // 2, w // 2, f, 4))
        rev = cand[..., ::-1]
        idx_rev = rev.argmax(axis=-1)
        idx = 3 - idx_rev  # last maximum instead of first
        out = np.take_along_axis(cand, idx[..., None], axis=-1)[..., 0]
        return out, idx.astype(np.uint8)

    name, ok, detail = check_pooling_oracle(pool_fn=wrong_pool)
    assert not ok


def test_wrong_ssim_constant_fails_oracle():
    def wrong_ssim2d(ref, test, cfg=metrics.DEFAULT_SSIM, sector=None):
        bad = metrics.SsimConfig(window=cfg.window, gaussian_sigma=cfg.gaussian_sigma,
                                 k1=0.02, k2=cfg.k2, data_range=cfg.data_range)
        return metrics.ssim2d(ref, test, bad, sector)

    name, ok, detail = check_ssim(ssim2d_fn=wrong_ssim2d)
    assert not ok


def test_wrong_ssim_window_fails_oracle():
    def wrong_ssim3d(ref, test, cfg=metrics.DEFAULT_SSIM, sector=None):
        bad = metrics.SsimConfig(window=9)
        return metrics.ssim3d(ref, test, bad, sector)

    name, ok, detail = check_ssim(ssim3d_fn=wrong_ssim3d)
    assert not ok


def test_intact_implementations_pass():
    assert check_pooling_oracle()[1]
    assert check_ssim()[1]
