"""chainvote command line."""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from . import crypto
from .audit import audit
from .authority import CentralAuthority, VoterRegistry, load_registry
from .ballot import vid_from_int
from .election import challenge, count, load_openings
from .errors import (
    AlreadyIssued,
    BadCredential,
    ChainFormatError,
    ElectionStillOpen,
    InvalidConfig,
    MalformedBlindedMessage,
    NotEligible,
    PhaseViolation,
    ScenarioError,
    SessionExpired,
    UnknownVID,
)
from .ledger import Chain, ElectionConfig, init_chain, verify_chain_bytes
from .runner import run_election, write_artifacts
from .scenario import ElectionParams, RunManifest, parse_scenario

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_PHASE = 3
EXIT_CONVERGENCE = 4
EXIT_MISMATCH = 5
EXIT_UNKNOWN_VID = 6


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)


def _emit(args, kv: dict[str, object], text: str | None = None) -> None:
    if args.format == "kv" or text is None:
        for key, value in kv.items():
            print(f"{key}={value}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _err(msg: str) -> None:
    print(f"chainvote: {msg}", file=sys.stderr)


def _read_key(path: str) -> crypto.CAPrivateKey:
    return crypto.CAPrivateKey.from_bytes(bytes.fromhex(Path(path).read_text().strip()))


def _load_chain(path: str) -> Chain:
    return Chain.load(path)


def _vid_arg(text: str) -> bytes:
    text = text.strip()
    if text.isdigit() and len(text) < 20:
        return vid_from_int(int(text))
    vid = bytes.fromhex(text)
    if len(vid) != 32:
        raise ValueError("vid must be 32 bytes of hex or a small integer")
    return vid


# -- init -------------------------------------------------------------------


def cmd_init(args) -> int:
    if args.ca_key:
        ca_public = _read_key(args.ca_key).public
    else:
        ca_public = crypto.generate_ca_keys(crypto.derive_seed(args.seed, "ca"), args.ca_bits).public
    candidates = [c.strip() for c in args.candidates.split(",")]
    try:
        config = ElectionConfig.from_phases(candidates, ca_public, args.phase1, args.phase2, args.cancel)
        chain = init_chain(config)
    except InvalidConfig as exc:
        _err(f"InvalidConfig: {exc}")
        return EXIT_USAGE
    chain.save(args.out)
    _emit(
        args,
        {
            "chain": args.out,
            "genesis": chain.genesis.hash.hex(),
            "candidates": ",".join(config.candidates),
            "election_end_time": config.election_end_time,
            "count_end_time": config.count_end_time,
            "cancel": str(config.cancel_ballots).lower(),
            "ca": ca_public.fingerprint(),
        },
    )
    return EXIT_OK


# -- ca ---------------------------------------------------------------------


def _read_voters(path: str) -> list[tuple[str, str]]:
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScenarioError("expected 'identity credential'", lineno)
        out.append((parts[0], parts[1]))
    return out


def cmd_ca_load(args) -> int:
    try:
        voters = _read_voters(args.voters)
        registry = load_registry(voters, crypto.seeded_rng(args.seed, "registry"))
    except (ScenarioError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    registry.save(args.registry)
    keys = crypto.generate_ca_keys(crypto.derive_seed(args.seed, "ca"), args.ca_bits)
    Path(args.ca_key).write_text(keys.private.to_bytes().hex() + "\n")
    _emit(args, {"registry": args.registry, "eligible": len(registry), "ca": keys.public.fingerprint()})
    return EXIT_OK


def _authority(args) -> CentralAuthority:
    key = _read_key(args.ca_key)
    return CentralAuthority(crypto.CAKeyPair(key.public, key), VoterRegistry.load(args.registry))


def cmd_ca_auth(args) -> int:
    ca = CentralAuthority(None, VoterRegistry.load(args.registry))
    try:
        ca.authenticate(args.identity, args.credential)
    except (NotEligible, BadCredential) as exc:
        _emit(args, {"identity": args.identity, "ok": "false", "error": type(exc).__name__})
        return EXIT_FAIL
    issued = ca.registry.entries[args.identity].token_issued
    _emit(args, {"identity": args.identity, "ok": "true", "token_issued": str(issued).lower()})
    return EXIT_OK


def cmd_ca_issue(args) -> int:
    ca = _authority(args)
    try:
        blinded = bytes.fromhex(args.blinded)
        session = ca.authenticate(args.identity, args.credential)
        blind_sig = ca.issue_token(session, blinded)
    except ValueError:
        _err("blinded message must be hex")
        return EXIT_USAGE
    except (NotEligible, BadCredential, AlreadyIssued, SessionExpired, MalformedBlindedMessage) as exc:
        _emit(args, {"identity": args.identity, "ok": "false", "error": type(exc).__name__})
        return EXIT_FAIL
    ca.registry.save(args.registry)
    _emit(args, {"identity": args.identity, "ok": "true", "blind_signature": blind_sig.hex()})
    return EXIT_OK


# -- run --------------------------------------------------------------------


def _demo_paths() -> tuple[Path, Path, Path]:
    base = resources.files("chainvote") / "data"
    return Path(str(base / "demo.cfg")), Path(str(base / "demo_registry.txt")), Path(str(base / "demo_scenario.txt"))


def cmd_run(args) -> int:
    try:
        if args.manifest:
            m = RunManifest.load(args.manifest)
            config, registry, scenario, seed, out = m.config, m.registry, m.scenario, m.seed, m.out
        elif args.demo:
            config, registry, scenario = _demo_paths()
            seed, out = 0, None
        else:
            missing = [f for f in ("config", "registry", "scenario") if getattr(args, f) is None]
            if missing:
                _err("run needs --manifest, --demo or all of --config --registry --scenario")
                return EXIT_USAGE
            config, registry, scenario = Path(args.config), Path(args.registry), Path(args.scenario)
            RunManifest(config, registry, scenario, 0, Path(".")).check()
            seed, out = 0, None
        if args.seed is not None:
            seed = args.seed
        if args.out is not None:
            out = Path(args.out)
        if out is None:
            out = Path("out")
        params = ElectionParams.load(config)
        voters = VoterRegistry.load(registry)
        actions = parse_scenario(Path(scenario).read_text())
    except ScenarioError as exc:
        _err(f"parse error: {exc}")
        return EXIT_USAGE
    except (ValueError, OSError, UnicodeDecodeError) as exc:
        _err(f"parse error: {exc}")
        return EXIT_USAGE
    try:
        result = run_election(actions, params, voters, seed)
    except ScenarioError as exc:
        _err(f"parse error: {exc}")
        return EXIT_USAGE
    except (PhaseViolation, InvalidConfig) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_PHASE
    paths = write_artifacts(result, out)
    if not (result.converged and result.settled):
        _err("nodes did not converge")
        return EXIT_CONVERGENCE
    # the published artifacts must pass our own audit
    report = audit(paths["chain"].read_bytes(), result.openings(), paths["tally"].read_text())
    if not report.ok:
        _err(f"internal invariant violated: {report.failure} {report.detail}")
        return EXIT_FAIL
    eligible, issued = result.authority.registry_report()
    kv = {"out": str(out), "head": result.chain.head_hash.hex(), "blocks": result.chain.height,
          "eligible": eligible, "issued": issued}
    _emit(args, {**kv, **_tally_kv(result.tally)}, result.tally.to_text())
    return EXIT_OK


def _tally_kv(tally) -> dict[str, object]:
    kv: dict[str, object] = {}
    for i, name in enumerate(tally.candidates):
        kv[f"candidate.{i}.name"] = name
        kv[f"candidate.{i}.count"] = tally.per_candidate.get(i, 0)
    kv["protest_count"] = tally.protest_count
    kv["excluded"] = len(tally.excluded)
    return kv


# -- count / audit / challenge ----------------------------------------------


def _openings(path: str | None):
    return load_openings(Path(path).read_text()) if path else []


def cmd_count(args) -> int:
    try:
        chain = _load_chain(args.chain)
        openings = _openings(args.openings)
    except (ChainFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    now = chain.config.election_end_time if args.now is None else args.now
    try:
        tally = count(chain, openings, now)
    except ElectionStillOpen as exc:
        _err(f"ElectionStillOpen: {exc}")
        return EXIT_PHASE
    if args.format == "kv":
        print(tally.to_kv(), end="")
    else:
        print(tally.to_text(), end="")
    return EXIT_OK


def cmd_audit(args) -> int:
    base = Path(args.chain).parent
    openings_path = Path(args.openings) if args.openings else base / "openings.txt"
    tally_path = Path(args.tally) if args.tally else base / "tally.kv"
    try:
        data = Path(args.chain).read_bytes()
        openings = _openings(str(openings_path)) if openings_path.exists() else []
        tally_text = tally_path.read_text(errors="replace")
    except (ChainFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    report = audit(data, openings, tally_text)
    if report.ok:
        recount = report.recount
        _emit(args, {"ok": "true", **_tally_kv(recount)}, "audit ok\n" + recount.to_text())
        return EXIT_OK
    vid = report.vid.hex() if report.vid else ""
    _emit(
        args,
        {"ok": "false", "failure": report.failure, "vid": vid, "detail": report.detail},
        f"audit FAILED: {report.failure} vid={vid or '-'} {report.detail}".rstrip(),
    )
    return EXIT_MISMATCH


def cmd_challenge(args) -> int:
    try:
        chain = _load_chain(args.chain)
        openings = _openings(args.openings)
    except (ChainFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        result = challenge(chain, _vid_arg(args.vid), openings)
    except (UnknownVID, ValueError) as exc:
        _err(f"UnknownVID: {exc}")
        return EXIT_UNKNOWN_VID
    print(result.to_kv(), end="")
    return EXIT_OK


# -- chain ------------------------------------------------------------------


def cmd_chain_inspect(args) -> int:
    try:
        chain = _load_chain(args.chain)
    except (ChainFormatError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    cfg = chain.config
    print(f"genesis={chain.genesis.hash.hex()}")
    print(f"candidates={','.join(cfg.candidates)}")
    print(f"election_end_time={cfg.election_end_time}")
    print(f"count_end_time={cfg.count_end_time}")
    print(f"cancel={str(cfg.cancel_ballots).lower()}")
    print(f"ca={cfg.ca_public.fingerprint()}")
    print(f"height={chain.height}")
    for block in chain.blocks:
        print(f"block={block.height} proposer={block.proposer} votes={len(block.votes)} hash={block.hash.hex()}")
        if args.format == "kv":
            continue
        for e in block.votes:
            p = e.payload
            extra = f" cancels={p.cancelled_vid.hex()}" if p.kind == "alteration" else ""
            sealed = str(chain.return_sealed(e.vid)).lower()
            print(f"  vid={e.vid.hex()} kind={p.kind} owner={p.voter_pub.hex()[:16]} "
                  f"accepted_at={e.accepted_at} sealed={sealed}{extra}")
    return EXIT_OK


def cmd_chain_verify(args) -> int:
    try:
        data = Path(args.chain).read_bytes()
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE
    chain, violations = verify_chain_bytes(data)
    if not violations:
        _emit(args, {"ok": "true", "height": chain.height, "head": chain.head_hash.hex()})
        return EXIT_OK
    for v in violations:
        print(str(v))
    return EXIT_MISMATCH


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("text", "kv"), default="text")

    parser = _Parser(prog="chainvote", description="Blind-token e-voting on a simulated permissioned chain.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", parents=[common], help="write a chain file holding only the genesis block")
    p.add_argument("--candidates", required=True, help="comma-separated names")
    p.add_argument("--phase1", type=int, required=True, help="voting phase length in ticks")
    p.add_argument("--phase2", type=int, required=True, help="counting phase length in ticks")
    p.add_argument("--cancel", action=argparse.BooleanOptionalAction, default=False, help="allow alterations")
    p.add_argument("--ca-key", help="CA key file from 'ca load'; otherwise derived from --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ca-bits", type=int, default=crypto.DEFAULT_CA_BITS)
    p.add_argument("--out", default="chain.bin")
    p.set_defaults(func=cmd_init)

    ca = sub.add_parser("ca", help="central authority operations").add_subparsers(dest="ca_command", required=True)
    p = ca.add_parser("load", parents=[common], help="hash a plaintext voter list and create the CA key")
    p.add_argument("--voters", required=True, help="lines of 'identity credential'")
    p.add_argument("--registry", required=True, help="output registry file")
    p.add_argument("--ca-key", required=True, help="output CA key file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ca-bits", type=int, default=crypto.DEFAULT_CA_BITS)
    p.set_defaults(func=cmd_ca_load)
    p = ca.add_parser("auth", parents=[common], help="check a voter credential")
    p.add_argument("--registry", required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--credential", required=True)
    p.set_defaults(func=cmd_ca_auth)
    p = ca.add_parser("issue", parents=[common], help="blind-sign a token request")
    p.add_argument("--registry", required=True)
    p.add_argument("--ca-key", required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--blinded", required=True, help="hex blinded message")
    p.set_defaults(func=cmd_ca_issue)

    p = sub.add_parser("run", parents=[common], help="run a scripted election on the simulator")
    p.add_argument("--manifest")
    p.add_argument("--demo", action="store_true", help="use the bundled demo election")
    p.add_argument("--config")
    p.add_argument("--registry")
    p.add_argument("--scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("count", parents=[common], help="tally a chain file")
    p.add_argument("--chain", required=True)
    p.add_argument("--openings")
    p.add_argument("--now", type=int, help="defaults to the election end time")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("audit", parents=[common], help="verify a chain and recount it against a tally")
    p.add_argument("--chain", required=True)
    p.add_argument("--openings", help="defaults to openings.txt next to the chain")
    p.add_argument("--tally", help="defaults to tally.kv next to the chain")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("challenge", parents=[common], help="seal state and count outcome of one vote")
    p.add_argument("--chain", required=True)
    p.add_argument("--vid", required=True, help="hex vid, or a small integer")
    p.add_argument("--openings")
    p.set_defaults(func=cmd_challenge)

    chain = sub.add_parser("chain", help="chain file tools").add_subparsers(dest="chain_command", required=True)
    p = chain.add_parser("inspect", parents=[common])
    p.add_argument("--chain", required=True)
    p.set_defaults(func=cmd_chain_inspect)
    p = chain.add_parser("verify", parents=[common])
    p.add_argument("--chain", required=True)
    p.set_defaults(func=cmd_chain_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
