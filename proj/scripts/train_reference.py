#!/usr/bin/env python3
"""Trains the desk-scale reference CNN and exports it as an NLXARCH1 container.

The training and held-out test sets are produced by `nlx make-dataset`, so the
C++ side can regenerate the exact same images from the seeds recorded in the
container metadata.

    python3 scripts/train_reference.py --nlx build/tools/nlx --out models/reference.nlxc
"""
import argparse
import json
import os
import struct
import subprocess
import tempfile

import numpy as np
import torch
import torch.nn as nn

CLASS_NAMES = ["basset", "coral reef", "fountain", "lakeside", "library",
               "overskirt", "palace", "prison", "volcano", "wall clock"]


def read_ppm(path):
    with open(path, "rb") as f:
        data = f.read()
    # nlx writes "P6\n<w> <h>\n255\n" followed by raw bytes
    magic, dims, maxval, pixels = data.split(b"\n", 3)
    assert magic == b"P6"
    w, h = (int(v) for v in dims.split())
    maxval = int(maxval)
    pixels = np.frombuffer(pixels[: w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3).astype(np.float32) / float(maxval)


def load_dataset(root):
    xs, ys = [], []
    entries = []
    for cls in sorted(os.listdir(root)):
        for name in sorted(os.listdir(os.path.join(root, cls))):
            entries.append((f"{cls}/{name}", cls))
    entries.sort()
    for rel, cls in entries:
        xs.append(read_ppm(os.path.join(root, rel)).transpose(2, 0, 1))
        ys.append(CLASS_NAMES.index(cls))
    return torch.tensor(np.stack(xs)), torch.tensor(ys)


class ReferenceNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.conv3 = nn.Conv2d(16, 32, 3, padding=1)
        self.fc = nn.Linear(32 * 3 * 3, len(CLASS_NAMES))

    def forward(self, x):
        x = nn.functional.max_pool2d(torch.relu(self.conv1(x)), 2)
        x = nn.functional.max_pool2d(torch.relu(self.conv2(x)), 2)
        x = nn.functional.avg_pool2d(torch.relu(self.conv3(x)), 3)
        return self.fc(torch.flatten(x, 1))


LAYERS = [
    {"name": "conv1", "type": "conv2d", "in_channels": 3, "out_channels": 8, "kernel": [3, 3], "stride": 1, "padding": 1},
    {"name": "relu1", "type": "relu"},
    {"name": "pool1", "type": "maxpool", "kernel": 2, "stride": 2},
    {"name": "conv2", "type": "conv2d", "in_channels": 8, "out_channels": 16, "kernel": [3, 3], "stride": 1, "padding": 1},
    {"name": "relu2", "type": "relu"},
    {"name": "pool2", "type": "maxpool", "kernel": 2, "stride": 2},
    {"name": "conv3", "type": "conv2d", "in_channels": 16, "out_channels": 32, "kernel": [3, 3], "stride": 1, "padding": 1},
    {"name": "relu3", "type": "relu"},
    {"name": "pool3", "type": "avgpool", "kernel": 3, "stride": 3},
    {"name": "flatten", "type": "flatten"},
    {"name": "fc", "type": "dense", "in_features": 288, "out_features": len(CLASS_NAMES)},
]


def write_container(model, path, metadata):
    tensors = []
    for name, p in sorted(model.state_dict().items()):
        tensors.append((name, list(p.shape), p.detach().cpu().numpy().astype("<f4").ravel()))
    entries, offset = [], 0
    for name, shape, values in tensors:
        entries.append({"name": name, "shape": shape, "offset": offset, "count": int(values.size)})
        offset += values.size * 4
    manifest = {
        "format": "nlx-cnn",
        "version": 1,
        "input": {"channels": 3, "height": 36, "width": 36},
        "class_names": CLASS_NAMES,
        "layers": LAYERS,
        "metadata": metadata,
        "tensors": entries,
    }
    text = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(b"NLXARCH1")
        f.write(struct.pack("<I", len(text)))
        f.write(text)
        for _, _, values in tensors:
            f.write(values.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nlx", required=True, help="path to the nlx CLI binary")
    ap.add_argument("--out", required=True)
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=50)
    ap.add_argument("--train-seed", type=int, default=1001)
    ap.add_argument("--test-seed", type=int, default=2002)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--torch-seed", type=int, default=7)
    ap.add_argument("--label-smoothing", type=float, default=0.2)
    args = ap.parse_args()

    torch.manual_seed(args.torch_seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)

    with tempfile.TemporaryDirectory() as tmp:
        train_dir, test_dir = os.path.join(tmp, "train"), os.path.join(tmp, "test")
        subprocess.run([args.nlx, "make-dataset", "--out", train_dir, "--per-class", str(args.train_per_class),
                        "--seed", str(args.train_seed)], check=True)
        subprocess.run([args.nlx, "make-dataset", "--out", test_dir, "--per-class", str(args.test_per_class),
                        "--seed", str(args.test_seed)], check=True)
        xtr, ytr = load_dataset(train_dir)
        xte, yte = load_dataset(test_dir)

    model = ReferenceNet()
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    loss_fn = nn.CrossEntropyLoss(label_smoothing=args.label_smoothing)
    gen = torch.Generator().manual_seed(args.torch_seed)
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(len(xtr), generator=gen)
        total = 0.0
        for i in range(0, len(xtr), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = loss_fn(model(xtr[idx]), ytr[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        model.eval()
        with torch.no_grad():
            acc = (model(xte).argmax(1) == yte).float().mean().item()
        print(f"epoch {epoch + 1}: loss {total / len(xtr):.4f} test acc {acc:.4f}")

    model.eval()
    with torch.no_grad():
        correct = int((model(xte).argmax(1) == yte).sum().item())
    metadata = {
        "architecture": "conv(3>8)-relu-maxpool-conv(8>16)-relu-maxpool-conv(16>32)-relu-avgpool-dense(288>10)",
        "train_seed": args.train_seed,
        "train_per_class": args.train_per_class,
        "test_seed": args.test_seed,
        "test_per_class": args.test_per_class,
        "test_correct": correct,
        "test_total": int(len(yte)),
        "test_accuracy": correct / len(yte),
        "epochs": args.epochs,
        "torch_seed": args.torch_seed,
        "label_smoothing": args.label_smoothing,
    }
    write_container(model, args.out, metadata)
    print(json.dumps(metadata, indent=2))


if __name__ == "__main__":
    main()
