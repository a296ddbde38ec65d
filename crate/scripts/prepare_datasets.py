#!/usr/bin/env python3
"""Write headered CSVs for the Adult, COMPAS and German Credit benchmarks.

The raw files are taken from the `responsibly` wheel, which bundles the UCI
and ProPublica originals. MEPS is not redistributable and has to be exported
separately (e.g. with AIF360's MEPS panel-19 preprocessing) to data/meps.csv.

    python3 scripts/prepare_datasets.py [--wheel path/to/responsibly.whl] [--out data]
"""
import argparse
import csv
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]

GERMAN_COLUMNS = [
    "status", "duration", "credit_history", "purpose", "credit_amount", "savings",
    "employment", "installment_rate", "personal_status_sex", "other_debtors",
    "residence_since", "property", "age", "installment_plans", "housing",
    "existing_credits", "job", "people_liable", "telephone", "foreign_worker", "credit",
]


def fetch_wheel(dest):
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "responsibly==0.1.2", "-d", dest]
    )
    return glob.glob(os.path.join(dest, "responsibly-*.whl"))[0]


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def adult(z, out):
    rows = []
    for name in ("adult.data", "adult.test"):
        text = z.read(f"responsibly/dataset/adult/{name}").decode()
        for line in text.splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            fields = [f.strip() for f in line.split(",")]
            fields[-1] = fields[-1].rstrip(".")
            rows.append(fields)
    write_rows(os.path.join(out, "adult.csv"), ADULT_COLUMNS, rows)


def compas(z, out):
    text = z.read("responsibly/dataset/compas/compas-scores-two-years.csv").decode()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    seen = {}
    deduped = []
    for col in header:
        n = seen.get(col, 0)
        deduped.append(col if n == 0 else f"{col}.{n}")
        seen[col] = n + 1
    write_rows(os.path.join(out, "compas.csv"), deduped, list(reader))


def german(z, out):
    text = z.read("responsibly/dataset/german/german.data").decode()
    rows = []
    for line in text.splitlines():
        if line.strip():
            rows.append(line.split())
    write_rows(os.path.join(out, "german.csv"), GERMAN_COLUMNS, rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        with zipfile.ZipFile(wheel) as z:
            adult(z, args.out)
            compas(z, args.out)
            german(z, args.out)


if __name__ == "__main__":
    main()
