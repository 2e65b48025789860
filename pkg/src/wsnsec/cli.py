"""Command-line entry points: ``sim``, ``keychain`` and ``merkle``.

All three are also reachable as ``wsnsec <group> ...``.  Exit status is 0 on
success, 1 when a verification fails and 2 for bad input or configuration.
"""

import argparse
import sys

from . import crypto, merkle
from .scenario import ConfigError, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _hex(value: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex string: {value!r}") from None


# -- sim ------------------------------------------------------------------------

def _sim_parser(prog="sim"):
    p = _Parser(prog=prog, description="Run scenarios and parameter sweeps.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    r.add_argument("--trace", default=None, help="write the event trace here")
    r.add_argument("--out", required=True, help="CSV output path")
    s = sub.add_parser("sweep", help="one run per axis value")
    s.add_argument("--scenario", required=True)
    s.add_argument("--axis", required=True, help="dotted field path, e.g. adversaries.0.drop_p")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True)
    return p


def sim_main(argv=None, prog="sim") -> int:
    from .runner import run, sweep, write_csv

    args = _sim_parser(prog).parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.cmd == "run":
            result = run(scenario, seed=args.seed, trace=args.trace is not None)
            write_csv(args.out, [((), result.metrics)])
            if args.trace:
                with open(args.trace, "w", encoding="utf-8") as fh:
                    fh.writelines(line + "\n" for line in result.trace)
            m = result.metrics
            print(f"delivered {m['delivered']}/{m['generated']} ratio={m['delivery_ratio']:.4f}")
        else:
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("--values is empty")
            rows = sweep(scenario, args.axis, values)
            write_csv(args.out, rows, leading=("value",))
            print(f"{len(rows)} runs written to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# -- keychain ---------------------------------------------------------------------

def keychain_main(argv=None, prog="keychain") -> int:
    p = _Parser(prog=prog, description="One-way key chain test vectors.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    g = sub.add_parser("gen", help="print K_0 .. K_n, commitment first")
    g.add_argument("--seed", type=_hex, required=True)
    g.add_argument("--n", type=int, required=True)
    v = sub.add_parser("verify", help="check that F^steps(key) == k0")
    v.add_argument("--k0", type=_hex, required=True)
    v.add_argument("--key", type=_hex, required=True)
    v.add_argument("--steps", type=int, required=True)
    args = p.parse_args(argv)
    if args.cmd == "gen":
        if args.n < 1:
            print("error: --n must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        keys = [args.seed]
        for _ in range(args.n):
            keys.append(crypto.chain_step(keys[-1]))
        for i, k in enumerate(reversed(keys)):
            print(f"{i} {k.hex()}")
        return EXIT_OK
    if args.steps < 0:
        print("error: --steps must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    ok = crypto.chain_apply(args.key, args.steps) == args.k0
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_FAIL


# -- merkle -------------------------------------------------------------------------

def _load_directory(path):
    with open(path, encoding="utf-8") as fh:
        return merkle.KeyDirectory.parse(fh.read())


def merkle_main(argv=None, prog="merkle") -> int:
    p = _Parser(prog=prog, description="Merkle-tree key certification.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    b = sub.add_parser("build", help="print root and height of a key directory")
    b.add_argument("--dir", required=True, help="file of '<id> <pk-hex>' lines")
    pr = sub.add_parser("prove", help="print the authentication path of a member")
    pr.add_argument("--dir", required=True)
    pr.add_argument("--id", type=int, required=True)
    v = sub.add_parser("verify", help="check a member's key against a root")
    v.add_argument("--root", type=_hex, required=True)
    v.add_argument("--id", type=int, required=True)
    v.add_argument("--pk", type=_hex, required=True)
    v.add_argument("--path", required=True, help="file of '<L|R> <hex>' lines")
    args = p.parse_args(argv)
    try:
        if args.cmd == "build":
            tree = merkle.build_tree(_load_directory(args.dir))
            print(f"root {tree.root.hex()}")
            print(f"height {tree.height}")
            print(f"leaves {len(tree.directory)}")
            return EXIT_OK
        if args.cmd == "prove":
            tree = merkle.build_tree(_load_directory(args.dir))
            for line in tree.prove(args.id).to_lines():
                print(line)
            return EXIT_OK
        with open(args.path, encoding="utf-8") as fh:
            path = merkle.AuthPath.from_lines(fh.read().splitlines())
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ok = merkle.verify(args.root, args.id, args.pk, path)
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_FAIL


GROUPS = {"sim": sim_main, "keychain": keychain_main, "merkle": merkle_main}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in GROUPS:
        print(f"usage: wsnsec {{{','.join(GROUPS)}}} ...", file=sys.stderr)
        return EXIT_CONFIG
    group = argv.pop(0)
    return GROUPS[group](argv, prog=f"wsnsec {group}")


def _entry(fn):
    def wrapper():
        sys.exit(fn())
    return wrapper


run_main = _entry(main)
run_sim = _entry(sim_main)
run_keychain = _entry(keychain_main)
run_merkle = _entry(merkle_main)
