#!/usr/bin/env python3
"""Rebuild a Kaggle-layout Titanic ``train.csv`` from two offline sources.

The sandbox this project was developed in has no access to kaggle.com, so the
891 labelled passengers are recovered from packages available on PyPI:

* ``explainerdashboard==0.4.0`` ships the Kaggle training passengers
  (``titanic_train.csv`` + ``titanic_test.csv``, 691 + 200 rows) with one-hot
  encoded Sex/Deck/Embarked and ``-999`` for a missing age.
* ``dabl==0.3.2`` ships the full ``titanic3`` passenger list (1309 rows) with
  the raw ticket and cabin strings.

Rows are joined on (name, pclass, sibsp, parch) and written with the Kaggle
header. PassengerId is assigned sequentially in source order.

Usage:
    pip download --no-deps explainerdashboard==0.4.0 dabl==0.3.2 -d wheels/
    python3 make_titanic_csv.py wheels/ data/titanic/train.csv
"""

import csv
import glob
import io
import os
import sys
import zipfile


def read_member(wheel_dir, pattern, member):
    (path,) = glob.glob(os.path.join(wheel_dir, pattern))
    with zipfile.ZipFile(path) as z:
        return z.read(member).decode("utf-8")


def main():
    wheel_dir, out_path = sys.argv[1], sys.argv[2]
    parts = [
        read_member(wheel_dir, "explainerdashboard-*.whl",
                    "explainerdashboard/datasets/titanic_train.csv"),
        read_member(wheel_dir, "explainerdashboard-*.whl",
                    "explainerdashboard/datasets/titanic_test.csv"),
    ]
    full = list(csv.DictReader(io.StringIO(
        read_member(wheel_dir, "dabl-*.whl", "dabl/datasets/titanic.csv"))))

    index = {}
    for row in full:
        key = (row["name"], row["pclass"], row["sibsp"], row["parch"])
        index.setdefault(key, []).append(row)

    embarked_code = {"Southampton": "S", "Cherbourg": "C", "Queenstown": "Q"}
    out_rows = []
    for text in parts:
        for row in csv.DictReader(io.StringIO(text)):
            key = (row["Name"], row["PassengerClass"],
                   row["No_of_siblings_plus_spouses_on_board"],
                   row["No_of_parents_plus_children_on_board"])
            matches = index.get(key, [])
            if len(matches) > 1:
                matches = [m for m in matches
                           if abs(float(m["fare"] or 0) - float(row["Fare"])) < 0.01]
            ticket, cabin = "", ""
            if matches:
                ticket = matches[0]["ticket"]
                cabin = matches[0]["cabin"] if matches[0]["cabin"] != "?" else ""
            deck_known = row["Deck_Unkown"] != "1"
            if deck_known and not cabin:
                deck = next(d for d in "ABCDEFGT" if row[f"Deck_{d}"] == "1")
                cabin = deck
            if not deck_known:
                cabin = ""
            sex = "female" if row["Sex_female"] == "1" else "male"
            embarked = ""
            for name, code in embarked_code.items():
                if row[f"Embarked_{name}"] == "1":
                    embarked = code
            age = "" if float(row["Age"]) == -999 else row["Age"]
            out_rows.append([row["Survival"], row["PassengerClass"], row["Name"], sex, age,
                             row["No_of_siblings_plus_spouses_on_board"],
                             row["No_of_parents_plus_children_on_board"],
                             ticket, row["Fare"], cabin, embarked])

    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["PassengerId", "Survived", "Pclass", "Name", "Sex", "Age", "SibSp",
                         "Parch", "Ticket", "Fare", "Cabin", "Embarked"])
        for pid, row in enumerate(out_rows, start=1):
            writer.writerow([pid] + row)
    print(f"wrote {len(out_rows)} passengers to {out_path}")


if __name__ == "__main__":
    main()
