"""Regenerate the dataset fixtures shipped in ``src/hmclab/data``.

warpbreaks (R ``datasets``) and birthwt (R ``MASS``) come from the
``rdatasets`` wheel on PyPI, which bundles the Rdatasets CSV collection.

Gdat (gopher tortoise shell counts, 10 sites x 3 years) is distributed
with the CRAN package ``hmclearn`` as ``data/Gdat.rda``. It is not on
PyPI, so it has to be converted from a local copy of that file::

    python scripts/vendor_datasets.py --gdat-rda hmclearn/data/Gdat.rda

Requires ``rdatasets`` (and ``pyreadr`` for the Gdat conversion). The
SHA-256 of every written CSV is printed so the fixture can be audited.
"""

import argparse
import hashlib
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "hmclab" / "data"


def _write(df, name):
    path = OUT / f"{name}.csv"
    df.to_csv(path, index=False, lineterminator="\n")
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    print(f"{path.name}: {len(df)} rows, sha256={digest}")


def warpbreaks():
    import rdatasets

    df = rdatasets.data("datasets", "warpbreaks")
    _write(df[["breaks", "wool", "tension"]], "warpbreaks")


def birthwt():
    import rdatasets

    df = rdatasets.data("MASS", "birthwt").copy()
    df["race2"] = df["race"].map({1: "white", 2: "black", 3: "other"})
    df["ptd"] = (df["ptl"] > 0).astype(int)
    df["ftv2"] = np.where(df["ftv"] >= 2, "2+", df["ftv"].astype(str))
    cols = ["low", "age", "lwt", "race2", "smoke", "ptd", "ht", "ui", "ftv2"]
    _write(df[cols], "birthwt")


def gdat(rda_path):
    import pyreadr

    frames = pyreadr.read_r(rda_path)
    df = next(iter(frames.values()))
    df = df[["Site", "year", "shells", "prev"]].copy()
    df["year"] = df["year"].astype(int)
    df["shells"] = df["shells"].astype(int)
    _write(df, "gdat")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--gdat-rda", help="path to hmclearn's data/Gdat.rda")
    args = parser.parse_args()
    OUT.mkdir(parents=True, exist_ok=True)
    warpbreaks()
    birthwt()
    if args.gdat_rda:
        gdat(args.gdat_rda)
    else:
        print("gdat: skipped (pass --gdat-rda)")


if __name__ == "__main__":
    main()
