"""Write case141 in plain MATPOWER units (MW, MVAr, p.u. impedances).

MATPOWER's ``case141.m`` stores branch impedances in ohms and loads in kVA and
converts them with MATLAB statements at the end of the file. This script
applies the same conversion so the result can be read as static blocks.

    python tools/convert_case141.py path/to/matpower/data/case141.m > src/ldf_opf/data/case141.m
"""
import math
import re
import sys

import numpy as np


def block(text, name):
    body = re.search(r"mpc\.%s = \[(.*?)\];" % name, text, re.S).group(1)
    rows = []
    for line in body.splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if line:
            rows.append([float(v) for v in line.split()])
    return np.array(rows)


def fmt(row):
    return "\t" + "\t".join(repr(float(v)).removesuffix(".0") for v in row) + ";"


def main(path):
    text = open(path).read()
    base = float(re.search(r"mpc\.baseMVA = ([\d.]+)", text).group(1))
    bus, gen, branch, gencost = (block(text, n) for n in ("bus", "gen", "branch", "gencost"))
    zbase = (bus[0, 9] * 1e3) ** 2 / (base * 1e6)
    branch[:, 2:4] /= zbase
    pf = 0.85
    s = bus[:, 2] / 1e3
    bus[:, 3] = s * math.sin(math.acos(pf))
    bus[:, 2] = s * pf
    out = [
        "function mpc = case141",
        "%CASE141  141-bus radial distribution feeder (Caracas metropolitan area).",
        "%   Converted from MATPOWER's case141.m (v2) by tools/convert_case141.py:",
        "%   branch impedances in p.u. on a 10 MVA / 12.47 kV base, loads in MW and",
        "%   MVAr at 0.85 power factor. Source data: H.M. Khodr et al., Electric",
        "%   Power Systems Research 78(7), 2008, doi:10.1016/j.epsr.2007.10.002.",
        "",
        "mpc.version = '2';",
        f"mpc.baseMVA = {base:g};",
        "",
        "mpc.bus = [",
        *(fmt(r) for r in bus),
        "];",
        "",
        "mpc.gen = [",
        *(fmt(r) for r in gen),
        "];",
        "",
        "mpc.branch = [",
        *(fmt(r) for r in branch),
        "];",
        "",
        "mpc.gencost = [",
        *(fmt(r) for r in gencost),
        "];",
    ]
    print("\n".join(out))


if __name__ == "__main__":
    main(sys.argv[1])
