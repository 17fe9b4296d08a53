import argparse

from .figures import make_all


def main(argv=None):
    ap = argparse.ArgumentParser(prog="carnot-flow-plots")
    ap.add_argument("--outdir", default="figures")
    args = ap.parse_args(argv)
    for path in make_all(outdir=args.outdir):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
