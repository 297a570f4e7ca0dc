"""Multi-scale + flip test-time augmentation, with a fake model.

The "model" returns a blurred, noisy copy of a disc mask at whatever
resolution it is given.  Each augmented output is mapped back to the
original frame and the maps are averaged before thresholding.

Run: python demos/02_tta_fusion.py
"""
import numpy as np

from rvoskit.geometry import Dims, hflip_prob, resize_bilinear
from rvoskit.metrics import boundary_f, jaccard
from rvoskit.tta import AugmentedOutput, enumerate_augs, fuse

rng = np.random.default_rng(0)
orig = Dims(96, 54)
yy, xx = np.mgrid[0:orig.height, 0:orig.width]
truth = ((xx - 60) ** 2 + (yy - 25) ** 2 <= 15 ** 2).astype(np.uint8)


def fake_model(size: Dims, flip: bool) -> np.ndarray:
    prob = resize_bilinear(truth.astype(np.float32), size)
    if flip:
        prob = hflip_prob(prob)
    return np.clip(prob + rng.normal(0, 0.45, prob.shape), 0, 1).astype(np.float32)


single = enumerate_augs([54], use_flip=False)
multi = enumerate_augs([36, 44, 54, 64, 80], use_flip=True)
print("augmentations:", ", ".join(s.tag for s in multi))
print("short side 36 gives", multi[0].dims_for(orig))

for name, specs in [("single scale", single), ("5 scales x flip", multi)]:
    outputs = [AugmentedOutput(s, fake_model(s.dims_for(orig), s.hflip)) for s in specs]
    mask = fuse(outputs, orig)
    print(f"{name:<16} J = {jaccard(mask, truth):.3f}  F = {boundary_f(mask, truth):.3f}")
