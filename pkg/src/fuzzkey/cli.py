"""Command-line interface.

Exit codes: 0 ok, 1 I/O or usage, 2 store/probe, 3 denied, 4 authentication
(tag, binding or malformed envelope).
"""

from __future__ import annotations

import argparse
import getpass
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import keyforge
from .envelope import decrypt, encrypt, parse
from .errors import (
    AuthFailure,
    BindingError,
    ConfigError,
    Denied,
    EnvelopeFormatError,
    ProbeError,
    RandomnessError,
    StoreError,
    ValidationError,
)
from .kms import KmsConfig, default_config, load_config
from .probe import ConditionVector, FixedProvider, LiveProvider, ScriptedProvider
from .reports import bench_roundtrip, drift_sweep, key_entropy_report, write_sweep_csv
from .sealstore import SoftwareSealStore, default_store_path

EXIT_OK = 0
EXIT_IO = 1
EXIT_STORE = 2
EXIT_DENIED = 3
EXIT_AUTH = 4
PASSWORD_ENV = "FUZZKEY_PASSWORD"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


class InsecureFixedRng:
    """Deterministic SHA-256 counter stream. Test use only: it repeats IVs."""

    def __init__(self, seed: bytes = b"fuzzkey-insecure-fixed-rng"):
        self._seed = seed
        self._counter = 0

    def __call__(self, n: int) -> bytes:
        out = b""
        while len(out) < n:
            out += hashlib.sha256(self._seed + self._counter.to_bytes(8, "little")).digest()
            self._counter += 1
        return out[:n]


def _err(msg: str) -> None:
    print(f"fuzzkey: {msg}", file=sys.stderr)


def _parse_condition(text: str) -> ConditionVector:
    try:
        cpu, procs, ts = text.split(",")
        return ConditionVector(float(cpu), int(procs), float(ts))
    except (ValueError, ValidationError) as exc:
        raise argparse.ArgumentTypeError(f"expected CPU,PROCESSES,TIMESTAMP: {exc}") from None


def _tau(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("tau must lie in [0, 1]")
    return value


def _provider(args):
    conds = args.condition or []
    if not conds:
        return LiveProvider()
    if len(conds) == 1:
        return FixedProvider(conds[0])
    return ScriptedProvider(conds)


def _config(args) -> KmsConfig:
    config = load_config(args.fis_config) if args.fis_config else default_config()
    if args.tau is not None:
        config = config.with_tau(args.tau)
    return config


def _password(args) -> bytes:
    if args.password is not None:
        pw = args.password
    elif os.environ.get(PASSWORD_ENV):
        pw = os.environ[PASSWORD_ENV]
    else:
        pw = getpass.getpass("password: ")
    if not pw:
        raise ValidationError("password must not be empty")
    return pw.encode()


def _store(args) -> SoftwareSealStore:
    return SoftwareSealStore.open(args.store or default_store_path())


def cmd_encrypt(args) -> int:
    try:
        plaintext = Path(args.input).read_bytes()
    except OSError as exc:
        _err(f"cannot read {args.input}: {exc.strerror or exc}")
        return EXIT_IO
    t0 = time.perf_counter()
    try:
        config = _config(args)
        store = _store(args)
        provider = _provider(args)
        rng = InsecureFixedRng() if args.insecure_fixed_rng else keyforge.random_bytes
        env = encrypt(plaintext, _password(args), provider, store, config, iterations=args.kdf_iterations, rng=rng)
    except (StoreError, ProbeError, RandomnessError) as exc:
        _err(str(exc))
        return EXIT_STORE
    except (ConfigError, ValidationError) as exc:
        _err(str(exc))
        return EXIT_IO
    elapsed = (time.perf_counter() - t0) * 1000.0
    try:
        Path(args.output).write_bytes(env.serialize())
    except OSError as exc:
        _err(f"cannot write {args.output}: {exc.strerror or exc}")
        return EXIT_IO
    print(
        f"encrypted {len(plaintext)} bytes: cpu={env.cpu_enc:.1f}% processes={env.proc_enc} "
        f"t_enc={env.t_enc:.3f} F_e={env.fe_q:.2f} time={elapsed:.1f} ms",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_decrypt(args) -> int:
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        _err(f"cannot read {args.input}: {exc.strerror or exc}")
        return EXIT_IO
    t0 = time.perf_counter()
    try:
        env = parse(data)
        config = _config(args)
        store = _store(args)
        plaintext = decrypt(env, _password(args), _provider(args), store, config)
    except EnvelopeFormatError as exc:
        _err(f"malformed envelope: {exc}")
        return EXIT_AUTH
    except Denied as exc:
        _err(f"denied: KMS={exc.kms:.4f} tau={exc.tau:.4f}")
        return EXIT_DENIED
    except (AuthFailure, BindingError) as exc:
        _err(f"authentication failed: {exc}")
        return EXIT_AUTH
    except (StoreError, ProbeError) as exc:
        _err(str(exc))
        return EXIT_STORE
    except (ConfigError, ValidationError) as exc:
        _err(str(exc))
        return EXIT_IO
    elapsed = (time.perf_counter() - t0) * 1000.0
    try:
        Path(args.output).write_bytes(plaintext)
    except OSError as exc:
        _err(f"cannot write {args.output}: {exc.strerror or exc}")
        return EXIT_IO
    print(f"decrypted {len(plaintext)} bytes in {elapsed:.1f} ms", file=sys.stderr)
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        env = parse(Path(args.input).read_bytes())
    except OSError as exc:
        _err(f"cannot read {args.input}: {exc.strerror or exc}")
        return EXIT_IO
    except EnvelopeFormatError as exc:
        _err(f"malformed envelope: {exc}")
        return EXIT_AUTH
    print(json.dumps(env.describe(), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        config = _config(args)
        rows = drift_sweep(
            config, args.cpu, args.processes, args.drift_start, args.drift_stop, args.drift_step,
            password=args.password.encode() if args.password else b"secretMessage",
        )
    except (ConfigError, ValidationError) as exc:
        _err(f"invalid sweep: {exc}")
        return EXIT_IO
    try:
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                write_sweep_csv(rows, fh)
        else:
            write_sweep_csv(rows, sys.stdout)
    except OSError as exc:
        _err(f"cannot write {args.csv}: {exc.strerror or exc}")
        return EXIT_IO
    return EXIT_OK


def cmd_entropy_report(args) -> int:
    try:
        report = key_entropy_report(args.n, iterations=args.kdf_iterations, constant_inputs=args.constant_inputs)
    except (ValidationError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_IO
    verdict = "PASS" if report.passed else "FAIL"
    line = (
        f"keys={report.n_keys} pooled_bytes={report.n_keys * keyforge.KEY_BYTES} "
        f"entropy={report.bits_per_byte:.4f} bits/byte threshold={report.threshold} {verdict}"
    )
    try:
        if args.out:
            Path(args.out).write_text(line + "\n")
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc.strerror or exc}")
        return EXIT_IO
    print(line)
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        result = bench_roundtrip(_store(args), _config(args), args.iterations, args.kdf_iterations)
    except (StoreError, ProbeError) as exc:
        _err(str(exc))
        return EXIT_STORE
    except (ConfigError, ValidationError) as exc:
        _err(str(exc))
        return EXIT_IO
    print(
        f"round trips={result.iterations} kdf_iterations={result.kdf_iterations} "
        f"mean={result.mean_ms:.2f} ms median={result.median_ms:.2f} ms"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--store", help="sealstore file (default: $FUZZKEY_STORE or ~/.fuzzkey/root.fzks)")
    common.add_argument("--fis-config", help="KMS config YAML replacing the shipped default")
    common.add_argument("--tau", type=_tau, help="override the key match threshold")

    crypt = _Parser(add_help=False)
    crypt.add_argument("input")
    crypt.add_argument("output")
    crypt.add_argument("--password", help=f"password (default: ${PASSWORD_ENV} or prompt)")
    crypt.add_argument(
        "--condition", action="append", type=_parse_condition, metavar="CPU,PROCS,TIME",
        help="inject conditions instead of sampling the host; repeat to script a sequence",
    )

    parser = _Parser(prog="fuzzkey", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encrypt", parents=[common, crypt], help="encrypt a file into an envelope")
    p.add_argument("--kdf-iterations", type=int, default=keyforge.DEFAULT_ITERATIONS)
    p.add_argument(
        "--insecure-fixed-rng", action="store_true",
        help="deterministic salt/IV/session secret for reproducible tests; never use for real data",
    )
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", parents=[common, crypt], help="decrypt an envelope if conditions match")
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("inspect", help="print an envelope's cleartext header")
    p.add_argument("input")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("simulate", parents=[common], help="write a drift sweep of KMS and F_e as CSV")
    p.add_argument("--cpu", type=float, default=25.0)
    p.add_argument("--processes", "--proc", type=int, default=65)
    p.add_argument("--drift-start", type=float, default=0.0)
    p.add_argument("--drift-stop", type=float, default=10.0)
    p.add_argument("--drift-step", type=float, default=0.5)
    p.add_argument("--password", help="password used for the F_e column")
    p.add_argument("--csv", help="output path (default: stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("entropy-report", help="Shannon entropy of pooled derived-key bytes")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--kdf-iterations", type=int, default=keyforge.MIN_ITERATIONS)
    p.add_argument("--constant-inputs", action="store_true", help="vary only the salt")
    p.add_argument("--out", help="also write the report line to this file")
    p.set_defaults(func=cmd_entropy_report)

    p = sub.add_parser("bench", parents=[common], help="time encrypt+decrypt round trips")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--kdf-iterations", type=int, default=keyforge.DEFAULT_ITERATIONS)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
