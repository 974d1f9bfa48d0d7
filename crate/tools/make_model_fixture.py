#!/usr/bin/env python3
"""Regenerate the committed inference and preprocessing parity fixtures.

Builds a tiny two-block conv model with a squeeze-and-excitation gate,
exports it to ONNX and records reference outputs computed by PyTorch on
deterministic inputs. Also writes a fixture PNG and the float32 tensor
PyTorch produces when preprocessing it (bilinear resize to 224x224,
half-pixel centers, no antialiasing, ImageNet mean/std).

Usage: python3 tools/make_model_fixture.py crates/core/tests/fixtures/model
"""
import json
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from PIL import Image

SIZE = 224
N_INPUTS = 32
MEAN = [0.485, 0.456, 0.406]
STD = [0.229, 0.224, 0.225]
GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def splitmix_tensor(index: int) -> np.ndarray:
    """Counter-based splitmix64 stream mapped exactly onto f32 in [-2, 2)."""
    with np.errstate(over="ignore"):
        counter = np.arange(1, 3 * SIZE * SIZE + 1, dtype=np.uint64)
        z = (np.uint64(index) << np.uint64(32)) + counter * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    top = (z >> np.uint64(40)).astype(np.float32)
    vals = top * np.float32(2.0**-24) * np.float32(4.0) - np.float32(2.0)
    return vals.reshape(1, 3, SIZE, SIZE)


class SqueezeExcite(nn.Module):
    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def forward(self, x):
        w = F.adaptive_avg_pool2d(x, 1)
        w = torch.sigmoid(self.excite(F.relu(self.squeeze(w))))
        return x * w


class TinyBmiNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.block1 = nn.Conv2d(3, 8, kernel_size=4, stride=4)
        self.block2 = nn.Conv2d(8, 8, kernel_size=3, stride=2, padding=1)
        self.se = SqueezeExcite(8, 4)
        self.head = nn.Linear(8, 1)

    def forward(self, x):
        x = F.relu(self.block1(x))
        x = F.relu(self.block2(x))
        x = self.se(x)
        x = torch.flatten(F.adaptive_avg_pool2d(x, 1), 1)
        return self.head(x)


def fixture_image() -> np.ndarray:
    h, w = 150, 300
    yy, xx = np.mgrid[0:h, 0:w]
    r = (xx * 7 + yy * 3) % 256
    g = (xx * xx // 13 + yy * 5) % 256
    b = ((xx // 10 + yy // 10) % 2) * 200 + (yy % 50)
    return np.stack([r, g, b], axis=-1).astype(np.uint8)


def preprocess(rgb: np.ndarray) -> np.ndarray:
    t = torch.from_numpy(rgb).permute(2, 0, 1).unsqueeze(0).float() / 255.0
    t = F.interpolate(t, size=(SIZE, SIZE), mode="bilinear", align_corners=False, antialias=False)
    mean = torch.tensor(MEAN).view(1, 3, 1, 1)
    std = torch.tensor(STD).view(1, 3, 1, 1)
    return ((t - mean) / std).squeeze(0).numpy().astype("<f4")


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(7)
    model = TinyBmiNet().eval()
    with torch.no_grad():
        model.head.bias.fill_(22.0)
        model.head.weight.mul_(100.0)

    dummy = torch.zeros(1, 3, SIZE, SIZE)
    torch.onnx.export(
        model, dummy, str(out / "tiny_bmi.onnx"), opset_version=13,
        input_names=["input"], output_names=["bmi"], dynamo=False,
    )

    outputs = []
    with torch.no_grad():
        for i in range(N_INPUTS):
            x = torch.from_numpy(splitmix_tensor(i))
            outputs.append(float(model(x).item()))
        zero_output = float(model(dummy).item())

    reference = {
        "model": "tiny_bmi.onnx",
        "input_shape": [1, 3, SIZE, SIZE],
        "generator": "splitmix64-counter-f32",
        "n_inputs": N_INPUTS,
        "outputs": outputs,
        "zero_output": zero_output,
        "runtime": f"torch {torch.__version__}",
    }
    (out / "reference_outputs.json").write_text(json.dumps(reference, indent=2) + "\n")

    rgb = fixture_image()
    Image.fromarray(rgb, "RGB").save(out / "preprocess_input.png")
    preprocess(rgb).tofile(out / "preprocess_reference.f32")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/model"))
