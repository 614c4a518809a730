"""Write the UCI Optical Digits and Pen Digits train/test CSVs.

Tries the UCI archive first.  Offline, it falls back to the ``keel-ds`` wheel
on PyPI, which bundles both datasets in UCI order (training rows followed by
test rows); the split sizes below cut them back into the original files.

    python scripts/fetch_uci.py --out data/
"""
import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
SOURCES = {
    "optdigits": (f"{UCI}/optdigits/optdigits.tra", f"{UCI}/optdigits/optdigits.tes", 3823, 1797),
    "pendigits": (f"{UCI}/pendigits/pendigits.tra", f"{UCI}/pendigits/pendigits.tes", 7494, 3498),
}
KEEL_NAME = {"optdigits": "optdigits", "pendigits": "penbased"}


def _from_uci(name):
    tra, tes, _, _ = SOURCES[name]
    out = []
    for url in (tra, tes):
        with urllib.request.urlopen(url, timeout=20) as resp:
            out.append(resp.read().decode())
    return out


def _from_keel(name):
    _, _, n_train, n_test = SOURCES[name]
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q",
                        "keel-ds==0.2.5", "-d", tmp], check=True)
        wheel = next(Path(tmp).glob("keel_ds-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            text = zf.read(f"keel_ds/data/balanced/raw/{KEEL_NAME[name]}.dat").decode()
    rows = [",".join(c.strip() for c in line.split(","))
            for line in io.StringIO(text).read().splitlines()
            if line.strip() and not line.startswith("@")]
    if len(rows) != n_train + n_test:
        raise SystemExit(f"{name}: expected {n_train + n_test} rows, found {len(rows)}")
    return "\n".join(rows[:n_train]) + "\n", "\n".join(rows[n_train:]) + "\n"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    ap.add_argument("--datasets", nargs="+", default=sorted(SOURCES))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.datasets:
        try:
            train, test = _from_uci(name)
            origin = "UCI"
        except OSError:
            train, test = _from_keel(name)
            origin = "keel-ds"
        (out / f"{name}.tra.csv").write_text(train)
        (out / f"{name}.tes.csv").write_text(test)
        print(f"{name}: {train.count(chr(10))} train / {test.count(chr(10))} test rows ({origin})")


if __name__ == "__main__":
    main()
