"""Push one procedural image through each corruption preset and save the
results side by side, so the print-and-photograph stand-in can be eyeballed.

    python3 demos/02_print_channel.py [out_dir]
"""
import sys
from pathlib import Path

import numpy as np

from newsstego.autodiff import Tensor
from newsstego.corruption import PRESETS, apply_corruption
from newsstego.evaluate import psnr
from newsstego.images import save_png, synthetic_corpus

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
out.mkdir(parents=True, exist_ok=True)

image = synthetic_corpus(1, 128, seed=4)
tiles = [image[0]]
for name, spec in PRESETS.items():
    rng = np.random.default_rng(1)
    received = apply_corruption(Tensor(image), spec, rng, differentiable=False).data
    tiles.append(received[0])
    print(f"{name:<10} PSNR vs original {psnr(image, received):6.2f} dB")

# original, then one column per preset
save_png(np.concatenate(tiles, axis=2), out / "channel.png")
print(f"wrote {out / 'channel.png'}")
