"""Command-line client for the simulator service.

The CLI talks HTTP: by default it mounts the service in-process through
an ASGI transport (no network), and with --server it targets a running
instance instead.  Results are exported locally, so a given master seed
produces byte-identical CSV either way.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx
import yaml

from .errors import AiotPhyError, ConfigError
from .harness import BlerPoint, export_results

DEFAULT_TIMEOUT = None  # sweeps are long-running; let the server finish


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=DEFAULT_TIMEOUT)
    # in-process: mount the ASGI app behind a synchronous HTTP client
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service import app
    return TestClient(app, raise_server_exceptions=False)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid key-value YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config file must be a flat key: value mapping")
    return data


def _request_body(args, file_cfg: dict, fields: dict) -> dict:
    """Request = config-file values filtered to known fields, overridden
    by explicit CLI flags."""
    body = {k: v for k, v in file_cfg.items() if k in fields}
    for key, value in fields.items():
        if value is not None:
            body[key] = value
    return body


def _post(args, path: str, body: dict) -> dict:
    with _client(args.server) as client:
        try:
            resp = client.post(path, json=body)
        except httpx.HTTPError as e:
            print(f"error: cannot reach service: {e}", file=sys.stderr)
            raise SystemExit(2)
    if resp.status_code in (400, 422):
        print(f"error: invalid configuration: {resp.text}", file=sys.stderr)
        raise SystemExit(1)
    if resp.status_code != 200:
        print(f"error: service failure ({resp.status_code}): {resp.text}",
              file=sys.stderr)
        raise SystemExit(2)
    return resp.json()


def _export_sweep(args, payload: dict) -> None:
    points = [BlerPoint(snr_db=p["snr_db"], blocks=p["blocks"],
                        block_errors=p["block_errors"])
              for p in payload["points"]]
    try:
        export_results(points, args.out, args.format,
                       resolved_config=payload["config"])
    except AiotPhyError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(2)
    for p in points:
        print(f"snr {p.snr_db:+6.1f} dB  blocks {p.blocks:6d}  "
              f"errors {p.block_errors:5d}  bler {p.bler:.4g}")
    print(f"wrote {args.out} (config hash {payload['config_hash'][:12]})")


def _common_sweep_flags(sp) -> None:
    sp.add_argument("--config", help="key-value YAML config file")
    sp.add_argument("--snr", help="SNR sweep start:step:stop (dB) or comma list")
    sp.add_argument("--tbs", type=int, help="transport block size in bits")
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--min-blocks", type=int, dest="min_blocks")
    sp.add_argument("--max-errors", type=int, dest="max_errors")
    sp.add_argument("--profile", choices=["tdl-a", "awgn-only"])
    sp.add_argument("--workers", type=int, help="Monte-Carlo worker processes")
    sp.add_argument("--out", default="bler.csv", help="output file path")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--server", help="remote service URL (default: in-process)")


def cmd_r2d_bler(args) -> int:
    file_cfg = _load_config_file(args.config)
    body = _request_body(args, file_cfg, {
        "tbs": args.tbs, "snr_db": args.snr, "master_seed": args.seed,
        "min_blocks": args.min_blocks, "max_block_errors": args.max_errors,
        "channel_profile": args.profile, "workers": args.workers,
        "m_chips_per_symbol": args.m, "thresholding": args.threshold,
        "combining": args.combining, "sfo_ppm": args.sfo_ppm,
    })
    _export_sweep(args, _post(args, "/bler/r2d", body))
    return 0


def cmd_d2r_bler(args) -> int:
    file_cfg = _load_config_file(args.config)
    body = _request_body(args, file_cfg, {
        "tbs": args.tbs, "snr_db": args.snr, "master_seed": args.seed,
        "min_blocks": args.min_blocks, "max_block_errors": args.max_errors,
        "channel_profile": args.profile, "workers": args.workers,
        "d2r_n_rx": args.rx_antennas,
    })
    _export_sweep(args, _post(args, "/bler/d2r", body))
    return 0


def cmd_ra_sim(args) -> int:
    body = {
        "n_devices": args.devices, "n_occasions": args.occasions,
        "rounds": args.rounds, "energize_prob": args.energize_prob,
        "seed": args.seed, "mode": args.mode,
    }
    if args.assigned_occasion is not None:
        body["assigned_occasion"] = args.assigned_occasion
    payload = _post(args, "/random-access/simulate", body)
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        try:
            with open(args.out, "w") as f:
                f.write(text + "\n")
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            raise SystemExit(2)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_codec(args) -> int:
    body = {"op": args.op, "bits": args.bits, "crc": args.crc, "line": args.line,
            "constraint_length": args.constraint_length,
            "rate_denominator": args.rate_denominator}
    payload = _post(args, "/codec", body)
    print(payload["output"])
    if payload.get("detail"):
        print(json.dumps(payload["detail"], sort_keys=True), file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aiotphy",
        description="Ambient-IoT link-level simulator (thin client over the service)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("r2d-bler", help="reader-to-device BLER sweep")
    _common_sweep_flags(sp)
    sp.add_argument("--m", type=int, choices=[1, 2, 4], help="chips per OFDM symbol")
    sp.add_argument("--threshold", choices=["fixed", "adaptive"])
    sp.add_argument("--combining", choices=["mean", "majority"])
    sp.add_argument("--sfo-ppm", type=float, dest="sfo_ppm")
    sp.set_defaults(func=cmd_r2d_bler)

    sp = sub.add_parser("d2r-bler", help="device-to-reader BLER sweep")
    _common_sweep_flags(sp)
    sp.add_argument("--rx-antennas", type=int, choices=[1, 2], dest="rx_antennas")
    sp.set_defaults(func=cmd_d2r_bler)

    sp = sub.add_parser("ra-sim", help="random-access round simulation")
    sp.add_argument("--devices", type=int, required=True)
    sp.add_argument("--occasions", type=int, default=1)
    sp.add_argument("--rounds", type=int, default=1)
    sp.add_argument("--energize-prob", type=float, default=1.0, dest="energize_prob")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=["contention-based", "contention-free"],
                    default="contention-based")
    sp.add_argument("--assigned-occasion", type=int, dest="assigned_occasion")
    sp.add_argument("--out", help="write aggregated stats JSON here")
    sp.add_argument("--server")
    sp.set_defaults(func=cmd_ra_sim)

    sp = sub.add_parser("codec", help="encode/decode inspection")
    sp.add_argument("--op", required=True,
                    choices=["crc-attach", "crc-check", "line-encode", "line-decode",
                             "conv-encode", "viterbi-decode"])
    sp.add_argument("--bits", required=True, help="bit string, e.g. 10110011")
    sp.add_argument("--crc", choices=["crc6", "crc16"], default="crc6")
    sp.add_argument("--line", default="manchester")
    sp.add_argument("--constraint-length", type=int, default=7,
                    dest="constraint_length")
    sp.add_argument("--rate-denominator", type=int, default=3,
                    dest="rate_denominator")
    sp.add_argument("--server")
    sp.set_defaults(func=cmd_codec)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except AiotPhyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
