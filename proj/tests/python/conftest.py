"""Shared fixtures: synthetic face images, landmark layouts, manifests."""

import math
import os
import struct
import subprocess

import pytest


def landmark_points(width, height):
    """68-point frontal-face layout; every default ROI rule gets a healthy box."""
    pts = [None] * 68

    def set_pt(i, ux, uy):
        pts[i] = (ux * width, uy * height)

    for i in range(17):  # jaw arc
        t = i / 16.0
        set_pt(i, 0.5 - 0.32 * math.cos(math.pi * t), 0.42 + 0.40 * math.sin(math.pi * t))
    for i in range(5):  # brows
        arch = 0.015 * math.sin(math.pi * i / 4.0)
        set_pt(17 + i, 0.24 + 0.04 * i, 0.355 - arch)
        set_pt(22 + i, 0.60 + 0.04 * i, 0.355 - arch)
    for i in range(4):  # nose bridge
        set_pt(27 + i, 0.5 + 0.004 * i, 0.40 + 0.05 * i)
    for i in range(5):  # nose base
        set_pt(31 + i, 0.44 + 0.03 * i, 0.585 + 0.01 * math.sin(math.pi * i / 4.0))
    eye = [
        (0.28, 0.425), (0.305, 0.405), (0.345, 0.405), (0.37, 0.420), (0.345, 0.440),
        (0.305, 0.445), (0.63, 0.420), (0.655, 0.405), (0.695, 0.405), (0.72, 0.425),
        (0.695, 0.445), (0.655, 0.440),
    ]
    for i, (ux, uy) in enumerate(eye):
        set_pt(36 + i, ux, uy)
    for k in range(12):  # mouth outer ring
        th = math.pi + 2.0 * math.pi * k / 12.0
        set_pt(48 + k, 0.5 + 0.10 * math.cos(th), 0.72 + 0.035 * math.sin(th))
    for k in range(8):  # mouth inner ring
        th = math.pi + 2.0 * math.pi * k / 8.0
        set_pt(60 + k, 0.5 + 0.06 * math.cos(th), 0.72 + 0.015 * math.sin(th))
    return pts


def landmarks_text(width, height):
    return "".join(f"{x:.4f} {y:.4f}\n" for x, y in landmark_points(width, height))


def face_pixels(width, height, seed):
    """Deterministic face-ish grayscale frame, distinct per seed."""
    base = 40.0 + (seed % 64)
    out = bytearray(width * height)
    for y in range(height):
        ny = (y + 0.5) / height - 0.55
        row_wave = 11.0 * math.cos(0.07 * y)
        for x in range(width):
            nx = (x + 0.5) / width - 0.5
            r2 = nx * nx / 0.11 + ny * ny / 0.17
            v = base + (120.0 * (1.0 - r2) if r2 < 1.0 else 0.0)
            v += 18.0 * math.sin(0.11 * x + 0.05 * seed) + row_wave
            out[y * width + x] = max(0, min(255, int(v)))
    return bytes(out)


def write_pgm(path, width, height, pixels):
    path.write_bytes(b"P5\n%d %d\n255\n" % (width, height) + pixels)


def write_sample(directory, stem, seed, width=96, height=96):
    """One image + landmark sidecar on disk; returns (image_path, landmarks_path)."""
    directory.mkdir(parents=True, exist_ok=True)
    image = directory / f"{stem}.pgm"
    write_pgm(image, width, height, face_pixels(width, height, seed))
    landmarks = directory / f"{stem}.txt"
    landmarks.write_text(landmarks_text(width, height))
    return image, landmarks


def write_dataset(directory, n, with_split=True):
    """n samples plus a manifest of relative paths; returns the manifest path."""
    rows = ["image_path,landmarks_path,bmi" + (",split" if with_split else "")]
    for i in range(n):
        write_sample(directory, f"s{i}", i)
        bmi = 18.0 + 16.0 * i / max(1, n - 1)
        row = f"s{i}.pgm,s{i}.txt,{bmi:.2f}"
        if with_split:
            split = "val" if i % 6 == 4 else "test" if i % 6 == 5 else "train"
            row += f",{split}"
        rows.append(row)
    manifest = directory / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


# Default-config tensor inventory, matching the weight blob wire format.
HEAD_TENSORS = [
    ("conv1_w", (32, 3, 3, 3)),
    ("conv1_b", (32,)),
    ("conv2_w", (64, 32, 3, 3)),
    ("conv2_b", (64,)),
    ("attn_w1", (32, 64, 1, 1)),
    ("attn_w2", (64, 32, 1, 1)),
    ("fc1_w", (128, 4096)),
    ("fc1_b", (128,)),
    ("fc2_w", (1, 128)),
]


def constant_head_blob(value):
    """Weight blob for a head that predicts `value` on any input.

    All weights zero except fc1_b[0] = 1 (a single live unit survives relu)
    and fc2_w[0] = value. Written byte by byte from this script, so loading it
    also cross-checks the serialization format against an independent writer.
    """
    out = bytearray(b"PBMI")
    out += struct.pack("<I", 1)
    for name, shape in HEAD_TENSORS:
        n = math.prod(shape)
        payload = bytearray(4 * n)
        if name == "fc1_b":
            payload[0:4] = struct.pack("<f", 1.0)
        elif name == "fc2_w":
            payload[0:4] = struct.pack("<f", value)
        out += struct.pack("<I", len(name)) + name.encode()
        out += struct.pack("<I", len(shape))
        out += struct.pack("<%dI" % len(shape), *shape)
        out += payload
    return bytes(out)


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("PATCHBMI_CLI")
    if not path or not os.path.exists(path):
        pytest.skip("PATCHBMI_CLI not set; run under ctest or export the binary path")
    return path


@pytest.fixture
def run_cli(cli):
    def run(*args, expect_code=0):
        proc = subprocess.run([cli, *map(str, args)], capture_output=True, text=True)
        assert proc.returncode == expect_code, (
            f"exit {proc.returncode}, wanted {expect_code}\n"
            f"stdout:\n{proc.stdout}\nstderr:\n{proc.stderr}"
        )
        return proc

    return run
