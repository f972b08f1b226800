#!/usr/bin/env python3
"""Fetch the file-backed benchmark datasets into data/.

Writes data/<NAME>.csv plus a data/<NAME>.schema.json sidecar in the format
load_preset expects. Needs network access; run on a networked machine and copy
the data/ directory into the sandbox if necessary.

  python3 tools/fetch_data.py            # AD and CA (the quick-start pair)
  python3 tools/fetch_data.py --all      # also HI, HE, JA, AL
  python3 tools/fetch_data.py AD HE      # explicit subset

Missing values are imputed deterministically: numeric cells with the column
median, nominal cells with a literal "__missing__" category.
"""

import argparse
import io
import json
import statistics
import sys
import tarfile
import urllib.request
from pathlib import Path

OPENML_INFO = "https://www.openml.org/api/v1/json/data/{id}"
CAL_HOUSING_TGZ = "https://ndownloader.figshare.com/files/5976036"

# name -> (openml dataset id, expected feature count, task, preprocess)
OPENML_SETS = {
    "AD": (1590, 14, "binclass", "quantile"),
    "HI": (23512, 28, "binclass", "quantile"),
    "HE": (41169, 27, "multiclass", "standardize"),
    "JA": (41168, 54, "multiclass", "quantile"),
    "AL": (42396, 128, "multiclass", "standardize"),
}


def http_get(url):
    req = urllib.request.Request(url, headers={"User-Agent": "protab-fetch/1.0"})
    with urllib.request.urlopen(req, timeout=120) as resp:
        return resp.read()


def parse_arff(text):
    """Minimal ARFF reader: attributes plus dense or sparse data rows."""
    attrs = []  # (name, None for numeric | list of nominal values)
    rows = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if not in_data:
            if low.startswith("@attribute"):
                rest = line[len("@attribute"):].strip()
                if rest.startswith("'"):
                    end = rest.index("'", 1)
                    name, spec = rest[1:end], rest[end + 1:].strip()
                else:
                    name, _, spec = rest.partition(" ")
                    spec = spec.strip()
                if spec.startswith("{"):
                    values = [v.strip().strip("'\"") for v in spec.strip("{}").split(",")]
                    attrs.append((name, values))
                else:
                    attrs.append((name, None))
            elif low.startswith("@data"):
                in_data = True
            continue
        if line.startswith("{"):  # sparse row: {index value, ...}, rest zero
            row = ["0"] * len(attrs)
            body = line.strip("{}").strip()
            if body:
                for pair in body.split(","):
                    idx, val = pair.strip().split(None, 1)
                    row[int(idx)] = val.strip().strip("'\"")
        else:
            row = [c.strip().strip("'\"") for c in split_csv_line(line)]
        rows.append(row)
    return attrs, rows


def split_csv_line(line):
    out, cell, quote = [], [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
            else:
                cell.append(ch)
        elif ch in "'\"":
            quote = ch
        elif ch == ",":
            out.append("".join(cell).strip())
            cell = []
        else:
            cell.append(ch)
    out.append("".join(cell).strip())
    return out


def is_missing(cell):
    return cell in ("?", "")


def impute(attrs, rows):
    for j, (_, nominal) in enumerate(attrs):
        column = [r[j] for r in rows]
        if not any(is_missing(c) for c in column):
            continue
        if nominal is None:
            median = statistics.median(float(c) for c in column if not is_missing(c))
            fill = repr(median)
        else:
            fill = "__missing__"
            if fill not in nominal:
                nominal.append(fill)
        for r in rows:
            if is_missing(r[j]):
                r[j] = fill


def write_dataset(name, columns, rows, target_values, task, num_classes, preprocess, out_dir):
    """columns: list of (name, categories-or-None) feature columns."""
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write(",".join([c for c, _ in columns] + ["target"]) + "\n")
        for row, target in zip(rows, target_values):
            f.write(",".join(list(row) + [target]) + "\n")

    schema = {
        "task": task,
        "target": "target",
        "preprocess": preprocess,
        "columns": [
            {"name": c, "kind": "numerical"} if cats is None
            else {"name": c, "kind": "categorical", "categories": cats}
            for c, cats in columns
        ],
    }
    if task != "regression":
        schema["num_classes"] = num_classes
    with open(out_dir / f"{name}.schema.json", "w", encoding="utf-8") as f:
        json.dump(schema, f, indent=2)
        f.write("\n")
    print(f"wrote {csv_path} ({len(rows)} rows, {len(columns)} features)")


def fetch_openml(name, out_dir):
    dataset_id, expected_features, task, preprocess = OPENML_SETS[name]
    info = json.loads(http_get(OPENML_INFO.format(id=dataset_id)))["data_set_description"]
    target_name = info.get("default_target_attribute", "class")
    print(f"{name}: downloading OpenML {dataset_id} ({info['name']}) ...")
    attrs, rows = parse_arff(http_get(info["url"]).decode("utf-8", "replace"))

    target_idx = next(j for j, (n, _) in enumerate(attrs) if n == target_name)
    impute(attrs, rows)

    feature_cols = [(n, vals) for j, (n, vals) in enumerate(attrs) if j != target_idx]
    if len(feature_cols) != expected_features:
        raise SystemExit(
            f"{name}: expected {expected_features} features, got {len(feature_cols)}")

    target_nominal = attrs[target_idx][1]
    if task == "regression":
        encode = lambda cell: cell
        num_classes = 0
    elif target_nominal is None:
        encode = lambda cell: str(int(float(cell)))
        num_classes = len({r[target_idx] for r in rows})
    else:
        index = {v: i for i, v in enumerate(target_nominal)}
        encode = lambda cell: str(index[cell])
        num_classes = len(target_nominal)

    feature_rows = [[c for j, c in enumerate(r) if j != target_idx] for r in rows]
    targets = [encode(r[target_idx]) for r in rows]
    write_dataset(name, feature_cols, feature_rows, targets, task, num_classes, preprocess,
                  out_dir)


def fetch_ca(out_dir):
    """California housing from the StatLib archive, derived like the common
    8-feature form: average rooms/bedrooms/occupancy per household, target is
    median house value in units of 100k."""
    print("CA: downloading cal_housing.tgz ...")
    blob = http_get(CAL_HOUSING_TGZ)
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        member = next(m for m in tar.getmembers() if m.name.endswith("cal_housing.data"))
        text = tar.extractfile(member).read().decode("utf-8")

    names = ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup",
             "Latitude", "Longitude"]
    feature_rows, targets = [], []
    for line in text.splitlines():
        if not line.strip():
            continue
        # file order: longitude, latitude, age, rooms, bedrooms, pop, households,
        # income, value
        lon, lat, age, rooms, bedrms, pop, households, income, value = map(float,
                                                                           line.split(","))
        feature_rows.append([repr(v) for v in (
            income, age, rooms / households, bedrms / households, pop, pop / households,
            lat, lon)])
        targets.append(repr(value / 100000.0))
    write_dataset("CA", [(n, None) for n in names], feature_rows, targets, "regression", 0,
                  "quantile", out_dir)


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("names", nargs="*", help="subset of AD CA HI HE JA AL")
    parser.add_argument("--all", action="store_true", help="fetch all six datasets")
    parser.add_argument("--out", default="data", help="output directory (default: data)")
    parser.add_argument("--force", action="store_true", help="overwrite existing files")
    args = parser.parse_args()

    names = args.names or (["AD", "CA", "HI", "HE", "JA", "AL"] if args.all else ["AD", "CA"])
    out_dir = Path(args.out)
    for name in names:
        if name not in OPENML_SETS and name != "CA":
            raise SystemExit(f"unknown dataset {name}; choose from AD CA HI HE JA AL")
        if not args.force and (out_dir / f"{name}.csv").exists():
            print(f"{name}: already present, skipping (use --force to refresh)")
            continue
        if name == "CA":
            fetch_ca(out_dir)
        else:
            fetch_openml(name, out_dir)


if __name__ == "__main__":
    sys.exit(main())
