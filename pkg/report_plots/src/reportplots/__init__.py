"""Plots from carnot-flow CSV artifacts.

This package never imports the solver library: every figure is rebuilt
from the CSV/JSON files a ``carnot-flow run`` leaves behind, with copies
of a reference run shipped under ``reportplots/data``.
"""

import csv
import json
from importlib import resources

__version__ = "0.1.0"


def data_path(name):
    return resources.files("reportplots").joinpath("data", name)


def read_csv(path):
    """Rows as dicts with every value parsed to float."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                try:
                    row[key] = float(val)
                except ValueError:
                    row[key] = val == "True"
            rows.append(row)
    return rows


def load_envelope_table(csv_path=None, constants_path=None):
    """The envelope table of a molecule run plus its constants."""
    csv_path = csv_path or data_path("envelopes.csv")
    constants_path = constants_path or data_path("constants.json")
    rows = read_csv(csv_path)
    with open(constants_path) as fh:
        constants = json.load(fh)
    return rows, constants


def envelope_reference(rows, constants):
    """Recompute the theoretical envelopes from the run constants.

    f_n = r + K*s_total; the three envelopes are pure powers of f_n, so
    the result must reproduce the bound_* CSV columns exactly.
    """
    out = {"concentration": [], "height": [], "mass": []}
    r, K = constants["r"], constants["K"]
    gamma, omega = constants["gamma"], constants["omega"]
    for row in rows:
        f_n = r + K * row["s_total"]
        out["concentration"].append(f_n ** (omega - gamma))
        out["height"].append(f_n ** -(constants["N"] + gamma))
        out["mass"].append(constants["v_N"] * f_n ** -gamma)
    return out
