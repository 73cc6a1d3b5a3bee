"""Writes tests/fixtures/*.stas with Python's struct module only.

The files are produced independently of the C++ writer so the C++ reader is
checked against a second implementation of the byte format. Besides the gold
file, one corrupted variant per reader error code is written.
"""
import json
import pathlib
import struct

VALUES = [
    [0.5, -1.25, 3.0, 1e-3, -0.0, 65504.0],
    [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
]


def record(meta, values):
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = struct.pack("<%df" % len(values), *values)
    return struct.pack("<I", len(blob)) + blob + struct.pack("<Q", len(payload)) + payload


def main():
    base = {
        "model_id": "gold-stub",
        "prompt_id": "p0",
        "num_tokens": 2,
        "hidden_size": 3,
        "latent_frames": 1,
        "tokens_per_frame": 2,
        "r_temp": 4,
    }
    first = dict(base, block=0, step_index=0, sigma=1.0, branch="cond")
    second = dict(base, block=1, step_index=5, sigma=0.75, branch="uncond")
    header = b"STAS" + struct.pack("<H", 1)
    data = header + record(first, VALUES[0]) + record(second, VALUES[1])
    nan = list(VALUES[1])
    nan[2] = float("nan")
    broken_meta = dict(second)
    del broken_meta["hidden_size"]
    files = {
        "gold_small.stas": data,
        "corrupt_bad_magic.stas": b"STAX" + data[4:],
        "corrupt_unsupported_version.stas": b"STAS" + struct.pack("<H", 2) + data[6:],
        "corrupt_truncated.stas": data[:-7],
        "corrupt_non_finite.stas": header + record(first, VALUES[0]) + record(second, nan),
        "corrupt_bad_metadata.stas": header + record(first, VALUES[0]) + record(broken_meta, VALUES[1]),
    }
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "fixtures"
    for name, blob in files.items():
        (out_dir / name).write_bytes(blob)
        print(out_dir / name, len(blob))


if __name__ == "__main__":
    main()
