"""Rebuild data/mfeat/ from the copy of the UCI mfeat files bundled in mvlearn.

The UCI host is not always reachable. mvlearn 0.5.0 ships the six feature
files as CSV (header row, trailing label column). This script rewrites them
in the original whitespace-separated ASCII layout and writes the cache index
the riskfuse fetcher expects.

    pip download mvlearn==0.5.0 --no-deps -d /tmp/mv
    python3 scripts/mfeat_from_mvlearn.py /tmp/mv/mvlearn-0.5.0-py3-none-any.whl data/mfeat
"""
import csv
import hashlib
import io
import sys
import zipfile

SETS = [
    ("fourier", "fou"),
    ("profiles", "fac"),
    ("kl", "kar"),
    ("pixel", "pix"),
    ("zernike", "zer"),
    ("morph", "mor"),
]
MEMBER = "mvlearn/datasets/UCImultifeature/mfeat-{}.csv"


def main(wheel, out_dir):
    index = []
    with zipfile.ZipFile(wheel) as zf:
        for set_name, name in SETS:
            member = MEMBER.format(name)
            rows = list(csv.reader(io.TextIOWrapper(zf.open(member), "ascii")))
            header, body = rows[0], rows[1:]
            assert len(body) == 2000, member
            lines = []
            for i, row in enumerate(body):
                assert int(float(row[-1])) == i // 200, (member, i)
                lines.append("  " + "  ".join(row[:-1]) + "\n")
            data = "".join(lines).encode("ascii")
            with open(f"{out_dir}/mfeat-{name}", "wb") as fh:
                fh.write(data)
            url = f"pkg:pypi/mvlearn@0.5.0#{member}"
            index.append(f"{set_name} {url} {len(data)} {hashlib.sha256(data).hexdigest()}\n")
    with open(f"{out_dir}/index", "w") as fh:
        fh.writelines(index)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
