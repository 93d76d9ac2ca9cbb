"""Write the bundled MATPOWER-format test cases under data/cases/.

case14, case39 and case118 come from PYPOWER's copies of the MATPOWER
cases. case_illinois200 and case1354pegase come from pandapower's network
library, exported through its MATPOWER converter.
"""
import argparse
import pathlib

import numpy as np


def fmt_row(row):
    return "\t" + "\t".join(repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in row) + ";"


def write_case(ppc, name, path):
    lines = [f"function mpc = {name}", "% exported for caplf from a published test case", "",
             "mpc.version = '2';", f"mpc.baseMVA = {float(ppc['baseMVA'])!r};", ""]
    for key, ncol in (("bus", 13), ("gen", 21), ("branch", 13)):
        mat = np.atleast_2d(np.asarray(ppc[key], dtype=float))[:, :ncol]
        lines.append(f"mpc.{key} = [")
        lines.extend(fmt_row(r) for r in mat)
        lines.append("];")
        lines.append("")
    path.write_text("\n".join(lines))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "cases"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    from pypower.case14 import case14
    from pypower.case39 import case39
    from pypower.case118 import case118
    for name, fn in (("case14", case14), ("case39", case39), ("case118", case118)):
        write_case(fn(), name, out / f"{name}.m")

    import pandapower.networks as pn
    from pandapower.converter.matpower.to_mpc import to_mpc
    for name, fn in (("case_illinois200", pn.case_illinois200), ("case1354pegase", pn.case1354pegase)):
        mpc = to_mpc(fn(), init="flat")["mpc"]
        write_case(mpc, name, out / f"{name}.m")


if __name__ == "__main__":
    main()
