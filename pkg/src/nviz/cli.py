"""Operator command line.

Subcommands: validate, decode, serve, simulate, state-at, export-log.
Machine-readable output (decode, state-at, export-log) goes to stdout;
diagnostics and progress go to stderr.  Exit codes: 0 success, 1
validation/runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint_store import (
    Checkpoint,
    StoreError,
    open_store,
    serialize_checkpoint,
)
from .convert_expr import ExprError
from .ingest_sources import SimConfig, SourceError, simulator_source, write_log_file
from .network_model import NetworkState, apply_packet, convert_field_value
from .packet_codec import DecodeError, HexLogError, RawPacket, decode_packet, parse_hex_log
from .replay_engine import EmptyStoreError, state_at
from .spec_manager import (
    PropertyKind,
    SpecError,
    parse_network_spec,
    parse_packet_spec,
)


def load_specs(net_path: str, pkt_path: str):
    net_xml = Path(net_path).read_text(encoding="utf-8")
    pkt_xml = Path(pkt_path).read_text(encoding="utf-8")
    net = parse_network_spec(net_xml)
    for warning in net.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    pkts = parse_packet_spec(pkt_xml, net)
    return net, pkts, net_xml, pkt_xml


def cmd_validate(args) -> int:
    net, pkts, _, _ = load_specs(args.net, args.pkt)
    counts = {k: len(net.of_kind(k)) for k in PropertyKind}
    print(f"network spec: {counts[PropertyKind.NODE]} node, "
          f"{counts[PropertyKind.LINK]} link, "
          f"{counts[PropertyKind.ENVR]} envr properties; "
          f"LogPerCheckpoint={net.log_per_checkpoint}")
    for fmt in pkts.packets:
        print(f"packet {fmt.packet_id} {fmt.description!r}: "
              f"{fmt.total_length} bytes")
    return 0


def cmd_decode(args) -> int:
    net, pkts, _, _ = load_specs(args.net, args.pkt)
    data = parse_hex_log(args.hex)
    packet = decode_packet(RawPacket(data, 0), net, pkts)
    state = NetworkState.empty()
    apply_packet(state, packet)
    addr_idx = packet.format.address_indices
    src = packet.values[addr_idx[0]][1] if addr_idx else None
    dst = packet.values[addr_idx[1]][1] if len(addr_idx) > 1 else None
    print(f"{packet.format.description} (packet {packet.packet_id})")
    for fld, raw in packet.values:
        value, err = convert_field_value(state, net, fld.property_kind,
                                         fld.property_id, raw, src, dst)
        shown = f"unconvertible ({err})" if err else f"{value:g}"
        print(f"{fld.name}: raw={raw} converted={shown}")
    return 0


def cmd_simulate(args) -> int:
    net, pkts, _, _ = load_specs(args.net, args.pkt)
    mix = None
    if args.mix:
        mix = {}
        for pair in args.mix.split(";"):
            pid, _, weight = pair.partition(":")
            mix[int(pid)] = float(weight)
    cfg = SimConfig(seed=args.seed, rate=args.rate, count=args.count,
                    packet_mix=mix, start_t=args.start)
    count = write_log_file(args.out, simulator_source(cfg, net, pkts))
    print(f"wrote {count} packets to {args.out}", file=sys.stderr)
    return 0


def cmd_state_at(args) -> int:
    store = open_store(args.store)
    state = state_at(store, args.at)
    sys.stdout.write(serialize_checkpoint(Checkpoint(t=args.at, state=state,
                                                     logs=())))
    return 0


def cmd_export_log(args) -> int:
    store = open_store(args.store)
    logs = store.all_logs()
    if args.from_t is not None:
        logs = [e for e in logs if e.t >= args.from_t]
    if args.to_t is not None:
        logs = [e for e in logs if e.t <= args.to_t]
    count = write_log_file(args.out, ((e.t, e.data) for e in logs))
    print(f"wrote {count} packets to {args.out}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    # import here so the server stack is only loaded when serving
    from .gateway_service import ServerConfig, serve

    load_specs(args.net, args.pkt)  # fail fast with diagnostics
    cfg = ServerConfig(
        store_dir=Path(args.store),
        net_path=Path(args.net),
        pkt_path=Path(args.pkt),
        source=args.source,
        listen=args.listen,
        ui_dir=Path(args.ui) if args.ui else None,
    )
    serve(cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nviz",
        description="schema-driven WSN telemetry engine with seekable replay",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_specs(p):
        p.add_argument("--net", required=True, help="network specification XML")
        p.add_argument("--pkt", required=True, help="packet specification XML")

    p = sub.add_parser("validate", help="check both spec files and print packet sizes")
    add_specs(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("decode", help="decode one packet given as pipe-hex")
    add_specs(p)
    p.add_argument("--hex", required=True, help='packet bytes, e.g. "0|2|0|3|1|6F|0|7B|"')
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="write a simulated packet-log file")
    add_specs(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=10.0, help="packets per second")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--mix", help='packet weights, e.g. "1:1;2:3"')
    p.add_argument("--start", type=int, default=1_000_000_000_000,
                   help="epoch ms of the first packet")
    p.add_argument("--out", required=True, help="output packet-log file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("state-at", help="print reconstructed state as checkpoint XML")
    p.add_argument("--store", required=True, help="store directory")
    p.add_argument("--at", type=int, required=True, help="epoch ms")
    p.set_defaults(func=cmd_state_at)

    p = sub.add_parser("export-log", help="export store logs to a packet-log file")
    p.add_argument("--store", required=True)
    p.add_argument("--from", dest="from_t", type=int, default=None)
    p.add_argument("--to", dest="to_t", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_log)

    p = sub.add_parser("serve", help="run the gateway service")
    add_specs(p)
    p.add_argument("--store", required=True, help="checkpoint store directory")
    p.add_argument("--listen", default="127.0.0.1:8800")
    p.add_argument("--source", default="sim:seed=0,count=0",
                   help="file:PATH | sim:seed=..,rate=..,count=.. | tcp:HOST:PORT")
    p.add_argument("--ui", help="static console directory to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecError as err:
        for diag in err.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return 1
    except (DecodeError, HexLogError, ExprError, StoreError, SourceError,
            EmptyStoreError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
