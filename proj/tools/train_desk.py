"""Desk-scale training of the gradient and image denoisers.

Writes weight archives in the APNPW1 format, inference fixtures for the C++
engine and a small held-out test set.
"""

import argparse
import json
import math
import struct
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import fastcrc
import numpy as np
import skimage.data
import torch
from PIL import Image
from skimage.color import rgb2gray

WEIGHT_MAGIC = b"APNPW1\0\0"
FIXTURE_MAGIC = b"APNPF1\0\0"

TRAIN_IMAGES = [
    "astronaut", "brick", "cat", "cell", "chelsea", "coffee", "colorwheel", "grass", "gravel",
    "hubble_deep_field", "immunohistochemistry", "moon", "page", "rocket", "text",
]
TEST_IMAGES = ["camera", "coins", "clock"]


@dataclass
class TrainConfig:
    domain: str = "gradient"
    patch: int = 64
    batch: int = 32
    sigma_max: float = 71 / 255
    steps: int = 2000
    lr: float = 1e-3
    seed: int = 0
    width: int = 32

    def validate(self):
        if self.sigma_max <= 0:
            raise ValueError("noise upper bound must be positive")
        if self.patch < 16 or self.patch % 2:
            raise ValueError("patch size must be even and at least 16")


def load_gray(name):
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    else:
        img = img.astype(np.float64) / 255.0
    return np.round(img * 255.0) / 255.0


def grad(x):
    """Periodic forward differences over the last two axes: (dh, dv)."""
    dh = torch.roll(x, -1, dims=-1) - x
    dv = torch.roll(x, -1, dims=-2) - x
    return torch.cat([dh, dv], dim=1)


def architecture(channels_in, channels_out, width):
    """Layer list in archive order: 8 convolutions, one down/up stage with a skip."""
    w, w2 = width, 2 * width
    return [
        dict(type="conv2d", cin=channels_in, cout=w, k=3, s=1),
        dict(type="relu"),
        dict(type="conv2d", cin=w, cout=w, k=3, s=1),
        dict(type="relu", save_as="skip"),
        dict(type="conv2d", cin=w, cout=w2, k=2, s=2),
        dict(type="relu"),
        dict(type="conv2d", cin=w2, cout=w2, k=3, s=1),
        dict(type="relu"),
        dict(type="conv2d", cin=w2, cout=w2, k=3, s=1),
        dict(type="relu"),
        dict(type="conv_transpose2d", cin=w2, cout=w, k=2, s=2),
        dict(type="add", source="skip"),
        dict(type="relu"),
        dict(type="conv2d", cin=w, cout=w, k=3, s=1),
        dict(type="relu"),
        dict(type="conv2d", cin=w, cout=channels_out, k=3, s=1),
    ]


class LayerNet(torch.nn.Module):
    """Runs a layer list with the same semantics as the C++ engine."""

    def __init__(self, layers):
        super().__init__()
        self.layers = layers
        self.mods = torch.nn.ModuleDict()
        for n, l in enumerate(layers):
            if l["type"] == "conv2d":
                pad = (l["k"] - 1) // 2 if l["s"] == 1 else 0
                self.mods[f"l{n}"] = torch.nn.Conv2d(l["cin"], l["cout"], l["k"], l["s"], pad)
            elif l["type"] == "conv_transpose2d":
                self.mods[f"l{n}"] = torch.nn.ConvTranspose2d(l["cin"], l["cout"], l["k"], l["s"])

    def forward(self, x):
        slots = {}
        for n, l in enumerate(self.layers):
            if l["type"] == "relu":
                x = torch.relu(x)
            elif l["type"] == "add":
                x = x + slots[l["source"]]
            else:
                x = self.mods[f"l{n}"](x)
            if "save_as" in l:
                slots[l["save_as"]] = x
        return x


def archive_bytes(net, cfg, channels_in, channels_out):
    layers, tensors, payload = [], [], bytearray()

    def put(name, t):
        data = t.detach().cpu().numpy().astype("<f4").tobytes()
        tensors.append(dict(name=name, shape=list(t.shape), offset=len(payload), length=len(data)))
        payload.extend(data)

    for n, l in enumerate(net.layers):
        entry = dict(name=f"l{n}", type=l["type"])
        if l["type"] in ("conv2d", "conv_transpose2d"):
            mod = net.mods[f"l{n}"]
            entry.update(
                {"in": l["cin"], "out": l["cout"], "kernel": l["k"], "stride": l["s"],
                 "padding": mod.padding[0], "weight": f"l{n}.weight", "bias": f"l{n}.bias"})
            put(f"l{n}.weight", mod.weight)
            put(f"l{n}.bias", mod.bias)
        if l["type"] == "add":
            entry["from"] = l["source"]
        if "save_as" in l:
            entry["save_as"] = l["save_as"]
        layers.append(entry)
    header = dict(
        domain=cfg.domain, in_channels=channels_in, out_channels=channels_out,
        prediction="residual",
        metadata=dict(sigma_range=[0.0, cfg.sigma_max], normalization="intensity/255",
                      train_config=asdict(cfg)),
        layers=layers, tensors=tensors)
    return container(WEIGHT_MAGIC, header, bytes(payload))


def container(magic, header, payload):
    text = json.dumps(header).encode()
    crc = fastcrc.crc64.xz(payload)
    return magic + struct.pack("<I", len(text)) + text + payload + struct.pack("<Q", crc)


class PatchSampler:
    def __init__(self, images, patch, rng):
        self.images = [torch.from_numpy(i).float() for i in images if min(i.shape) >= patch]
        self.patch = patch
        self.rng = rng

    def __call__(self, count):
        out = torch.empty(count, 1, self.patch, self.patch)
        for b in range(count):
            img = self.images[self.rng.integers(len(self.images))]
            i = self.rng.integers(img.shape[0] - self.patch + 1)
            j = self.rng.integers(img.shape[1] - self.patch + 1)
            p = img[i:i + self.patch, j:j + self.patch]
            if self.rng.integers(2):
                p = p.flip(-1)
            out[b, 0] = p.rot90(int(self.rng.integers(4)), (0, 1))
        return out


def make_batch(domain, clean, sigma_max, gen, fixed_sigma=None):
    target = grad(clean) if domain == "gradient" else clean
    n = target.shape[0]
    if fixed_sigma is None:
        sigma = torch.rand(n, 1, 1, 1, generator=gen) * sigma_max
    else:
        sigma = torch.full((n, 1, 1, 1), fixed_sigma)
    noisy = target + sigma * torch.randn(target.shape, generator=gen)
    level = sigma.expand(n, 1, *target.shape[-2:])
    return torch.cat([noisy, level], dim=1), noisy, target


def psnr_field(a, b):
    mse = torch.mean((a - b) ** 2).item()
    return 10 * math.log10(1.0 / mse)


def train(cfg, train_images, val_images):
    cfg.validate()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    cin, cout = (3, 2) if cfg.domain == "gradient" else (2, 1)
    net = LayerNet(architecture(cin, cout, cfg.width))
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, cfg.steps)
    sampler = PatchSampler(train_images, cfg.patch, rng)

    val_sigma = 25 * math.sqrt(2) / 255 if cfg.domain == "gradient" else 25 / 255
    val_clean = PatchSampler(val_images, cfg.patch, np.random.default_rng(cfg.seed + 1))(64)
    val_gen = torch.Generator().manual_seed(cfg.seed + 2)
    val_in, val_noisy, val_target = make_batch(cfg.domain, val_clean, cfg.sigma_max, val_gen, val_sigma)

    def validate():
        with torch.no_grad():
            out = val_noisy - net(val_in)
        return torch.mean(torch.abs(out - val_target)).item(), psnr_field(out, val_target)

    loss0, _ = validate()
    start = time.time()
    for step in range(cfg.steps):
        inp, noisy, target = make_batch(cfg.domain, sampler(cfg.batch), cfg.sigma_max, gen)
        loss = torch.mean(torch.abs(noisy - net(inp) - target))
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if step % 250 == 0:
            print(f"{cfg.domain} step {step} loss {loss.item():.5f} {time.time() - start:.0f}s",
                  flush=True)
    loss1, psnr_out = validate()
    report = dict(
        config=asdict(cfg), validation_sigma=val_sigma, validation_l1_start=loss0,
        validation_l1_end=loss1, validation_psnr_noisy=psnr_field(val_noisy, val_target),
        validation_psnr_denoised=psnr_out, seconds=time.time() - start)
    return net, report


def export_fixtures(net, cfg, archive_name, count=16, seed=0, size=24):
    cin = 3 if cfg.domain == "gradient" else 2
    gen = torch.Generator().manual_seed(seed)
    sigmas = [15 / 255, 40 / 255]
    inputs = [torch.zeros(1, cin, size, size)]
    for n in range(count):
        x = 0.1 * torch.randn(1, cin - 1, size, size, generator=gen)
        if cfg.domain == "image":
            x = x + 0.5
        level = torch.full((1, 1, size, size), sigmas[n % 2])
        inputs.append(torch.cat([x, level], dim=1))
    entries, payload = [], bytearray()
    with torch.no_grad():
        for n, x in enumerate(inputs):
            y = net(x)
            a = x[0].numpy().astype("<f4").tobytes()
            b = y[0].numpy().astype("<f4").tobytes()
            entries.append(dict(
                name="zero" if n == 0 else f"random{n - 1}",
                sigma=float(x[0, -1, 0, 0]),
                input=dict(shape=list(x.shape[1:]), offset=len(payload)),
                output=dict(shape=list(y.shape[1:]), offset=len(payload) + len(a))))
            payload.extend(a + b)
    header = dict(archive=archive_name, tolerance=1e-4, fixtures=entries)
    return container(FIXTURE_MAGIC, header, bytes(payload))


def write_test_set(out_dir, size):
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in TEST_IMAGES:
        img = load_gray(name)
        i0 = (img.shape[0] - size) // 2
        j0 = (img.shape[1] - size) // 2
        crop = img[i0:i0 + size, j0:j0 + size]
        Image.fromarray(np.round(crop * 255).astype(np.uint8)).save(out_dir / f"{name}.png")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests/data")
    p.add_argument("--domains", default="gradient,image")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-size", type=int, default=96)
    args = p.parse_args()

    torch.set_num_threads(max(1, torch.get_num_threads()))
    args.out.mkdir(parents=True, exist_ok=True)
    train_images = [load_gray(n) for n in TRAIN_IMAGES]
    val_images = [load_gray(n) for n in TEST_IMAGES]
    reports = {}
    for domain in args.domains.split(","):
        cfg = TrainConfig(domain=domain, patch=args.patch, batch=args.batch,
                          sigma_max=71 / 255 if domain == "gradient" else 50 / 255,
                          steps=args.steps, lr=args.lr, seed=args.seed, width=args.width)
        net, reports[domain] = train(cfg, train_images, val_images)
        name = f"{domain}_desk.apnpw"
        (args.out / name).write_bytes(archive_bytes(net, cfg, *((3, 2) if domain == "gradient"
                                                              else (2, 1))))
        (args.out / f"{domain}_desk.fixtures").write_bytes(
            export_fixtures(net, cfg, name, seed=args.seed + 10))
        print(json.dumps(reports[domain], indent=2))
    write_test_set(args.out / "testset", args.test_size)
    (args.out / "training_report.json").write_text(json.dumps(reports, indent=2) + "\n")


if __name__ == "__main__":
    main()
