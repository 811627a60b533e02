"""Writes clean/degraded WAV pairs and their reference STOI scores (pystoi)."""
import wave
from pathlib import Path

import numpy as np
from pystoi import stoi

FS = 16000
HERE = Path(__file__).parent


def speech(rng, seconds):
    n = int(seconds * FS)
    t = np.arange(n) / FS
    out = np.zeros(n)
    pos = 0
    while pos < n:
        dur = int(rng.uniform(0.12, 0.3) * FS)
        gap = int(rng.uniform(0.03, 0.15) * FS)
        seg = np.arange(min(dur, n - pos))
        f0 = rng.uniform(100, 220)
        env = np.sin(np.pi * seg / max(dur, 1)) ** 2
        formants = rng.uniform([300, 900, 2200], [800, 2000, 3200])
        sig = np.zeros(len(seg))
        for h in range(1, int(4000 / f0)):
            f = h * f0
            gain = sum(np.exp(-((f - fm) / 150.0) ** 2) for fm in formants) + 0.05
            sig += gain * np.sin(2 * np.pi * f * t[pos:pos + len(seg)] + rng.uniform(0, 2 * np.pi))
        out[pos:pos + len(seg)] = env * sig
        pos += dur + gap
    return 0.3 * out / np.max(np.abs(out))


def to_pcm(x):
    return np.clip(np.round(x * 32767), -32768, 32767).astype(np.int16)


def write(path, pcm):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(FS)
        w.writeframes(pcm.tobytes())


def main():
    rng = np.random.default_rng(20240)
    lines = ["id\tstoi"]
    snrs = [-12, -9, -6, -3, 0, 3, 6, 9, 0, -6]
    for i, snr in enumerate(snrs):
        s = speech(rng, 2.0 + 0.25 * i)
        noise = rng.standard_normal(len(s))
        if i % 2:
            noise = np.cumsum(noise)
            noise -= np.convolve(noise, np.ones(64) / 64, mode="same")
        noise *= np.sqrt(np.mean(s ** 2) / np.mean(noise ** 2)) * 10 ** (-snr / 20)
        y = s + noise
        if i >= 8:
            y = np.convolve(y, np.ones(8) / 8, mode="same")
        cp, yp = to_pcm(s), to_pcm(y / max(1.0, np.max(np.abs(y))))
        write(HERE / f"pair{i}_clean.wav", cp)
        write(HERE / f"pair{i}_degraded.wav", yp)
        score = stoi(cp / 32768.0, yp / 32768.0, FS, extended=False)
        lines.append(f"pair{i}\t{score:.6f}")
    (HERE / "expected.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
