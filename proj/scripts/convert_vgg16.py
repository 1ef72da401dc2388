#!/usr/bin/env python3
"""Convert torchvision VGG16 weights into the extractor format used by the
texture loss and LPIPS metric.

The exported stack covers the first three stages up to the conv3_3 activation
(the default perceptual tap). Usage:

    pip install torch torchvision
    python3 scripts/convert_vgg16.py --out vgg16_fx.bin

The output file is consumed via `sshnet train --extractor vgg16_fx.bin ...`
and `sshnet eval --extractor vgg16_fx.bin ...`.
"""

import argparse
import json
import struct

MAGIC = b"SSHNFX01"

# torchvision vgg16.features indices up to the conv3_3 ReLU.
VGG_LAYOUT = [
    ("conv", 3, 64), ("relu", 64, 64),
    ("conv", 64, 64), ("relu", 64, 64),
    ("pool", 64, 64),
    ("conv", 64, 128), ("relu", 128, 128),
    ("conv", 128, 128), ("relu", 128, 128),
    ("pool", 128, 128),
    ("conv", 128, 256), ("relu", 256, 256),
    ("conv", 256, 256), ("relu", 256, 256),
    ("conv", 256, 256), ("relu", 256, 256),
]


def write_u64(f, v):
    f.write(struct.pack("<Q", v))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True, help="output weight file")
    args = ap.parse_args()

    import torch
    from torchvision.models import vgg16, VGG16_Weights

    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features.eval()

    meta = {
        "taps": [len(VGG_LAYOUT) - 1],  # last ReLU (conv3_3 activation)
        "mean": [0.485, 0.456, 0.406],
        "std": [0.229, 0.224, 0.225],
        "layers": [{"kind": k, "cin": cin, "cout": cout} for k, cin, cout in VGG_LAYOUT],
        "lpips_weights": [],
    }

    convs = [m for m in model if isinstance(m, torch.nn.Conv2d)]
    needed = sum(1 for k, _, _ in VGG_LAYOUT if k == "conv")

    with open(args.out, "wb") as f:
        f.write(MAGIC)
        blob = json.dumps(meta).encode()
        write_u64(f, len(blob))
        f.write(blob)
        for conv in convs[:needed]:
            w = conv.weight.detach().cpu().contiguous().float().numpy().ravel()
            b = conv.bias.detach().cpu().contiguous().float().numpy().ravel()
            write_u64(f, w.size)
            f.write(w.astype("<f4").tobytes())
            write_u64(f, b.size)
            f.write(b.astype("<f4").tobytes())
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
