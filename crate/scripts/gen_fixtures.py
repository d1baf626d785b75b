#!/usr/bin/env python3
"""Regenerate the capture fixtures under crates/core/tests/fixtures.

Captures are written with scapy. The `*.reference.csv` exports are produced by
re-reading each capture with dpkt, an independent packet analyzer, so the Rust
decoder is checked against a second implementation rather than against itself.
"""
import csv
import pathlib
import random
import struct
import sys

import dpkt
from scapy.all import ARP, DNS, DNSQR, ICMP, IP, IPv6, NTP, TCP, UDP, Dot1Q, Ether, Raw, wrpcap
from scapy.layers.dhcp import BOOTP, DHCP
from scapy.layers.inet6 import ICMPv6EchoRequest

OUT = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
BASE = 1_700_000_000

GATEWAY = ("3c:37:86:11:22:33", "192.168.1.1")
NEST = ("18:b4:30:aa:bb:01", "192.168.1.20")
ECHO = ("44:65:0d:aa:bb:02", "192.168.1.21")
HUE = ("00:17:88:aa:bb:03", "192.168.1.22")
LAPTOP = ("02:5e:10:aa:bb:04", "192.168.1.30")
LOCALS = [NEST, ECHO, HUE, LAPTOP]
REMOTES = {
    "dns": "8.8.8.8",
    "http": "93.184.216.34",
    "https": "151.101.1.69",
    "ntp": "17.253.14.125",
    "mqtt": "52.1.2.3",
    "cf": "1.1.1.1",
    "nogeo": "203.0.113.7",
}
BCAST = "ff:ff:ff:ff:ff:ff"


def stamp(pkt, t):
    pkt.time = t
    return pkt


def udp3():
    pkts = []
    t = BASE
    for i, (dev, dport) in enumerate([(NEST, 53), (ECHO, 123), (HUE, 1883)]):
        p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=REMOTES["dns"]) / UDP(sport=40000 + i, dport=dport) / Raw(b"x" * (10 * (i + 1)))
        pkts.append(stamp(p, t + i * 0.25 + 0.000001 * i))
    return pkts


def home100():
    rng = random.Random(20181018)
    pkts = []
    t = BASE + 10.0
    kinds = ["dns", "http", "https", "ntp", "mqtt", "icmp", "arp", "mdns", "mdns6", "dhcp", "internal", "vlan", "v6", "nogeo"]
    for i in range(100):
        kind = kinds[i % len(kinds)] if i < 28 else rng.choice(kinds)
        dev = rng.choice(LOCALS)
        reply = rng.random() < 0.4
        if kind == "dns":
            p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=REMOTES["dns"]) / UDP(sport=rng.randint(1024, 65535), dport=53) / DNS(rd=1, qd=DNSQR(qname="example.com"))
            if reply:
                p = Ether(src=GATEWAY[0], dst=dev[0]) / IP(src=REMOTES["dns"], dst=dev[1]) / UDP(sport=53, dport=rng.randint(1024, 65535)) / DNS(qr=1, qd=DNSQR(qname="example.com"))
        elif kind in ("http", "https", "mqtt"):
            port = {"http": 80, "https": 443, "mqtt": 1883}[kind]
            rip = REMOTES[kind]
            eph = rng.randint(32768, 60999)
            if reply:
                p = Ether(src=GATEWAY[0], dst=dev[0]) / IP(src=rip, dst=dev[1]) / TCP(sport=port, dport=eph, flags="A") / Raw(b"r" * rng.randint(0, 200))
            else:
                p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=rip) / TCP(sport=eph, dport=port, flags="PA") / Raw(b"q" * rng.randint(0, 200))
        elif kind == "ntp":
            p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=REMOTES["ntp"]) / UDP(sport=123, dport=123) / NTP()
        elif kind == "icmp":
            p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=REMOTES["cf"]) / ICMP() / Raw(b"ping")
        elif kind == "arp":
            p = Ether(src=dev[0], dst=BCAST) / ARP(hwsrc=dev[0], psrc=dev[1], pdst=GATEWAY[1])
        elif kind == "mdns":
            p = Ether(src=dev[0], dst="01:00:5e:00:00:fb") / IP(src=dev[1], dst="224.0.0.251") / UDP(sport=5353, dport=5353) / DNS(qd=DNSQR(qname="_hap._tcp.local"))
        elif kind == "mdns6":
            p = Ether(src=dev[0], dst="33:33:00:00:00:fb") / IPv6(src="fe80::1:" + dev[0][-2:], dst="ff02::fb") / UDP(sport=5353, dport=5353) / DNS(qd=DNSQR(qname="_googlecast._tcp.local"))
        elif kind == "dhcp":
            p = Ether(src=dev[0], dst=BCAST) / IP(src="0.0.0.0", dst="255.255.255.255") / UDP(sport=68, dport=67) / BOOTP(chaddr=bytes.fromhex(dev[0].replace(":", ""))) / DHCP(options=[("message-type", "discover"), "end"])
        elif kind == "internal":
            other = rng.choice([d for d in LOCALS if d != dev])
            p = Ether(src=dev[0], dst=other[0]) / IP(src=dev[1], dst=other[1]) / TCP(sport=rng.randint(32768, 60999), dport=8008, flags="S")
        elif kind == "vlan":
            p = Ether(src=dev[0], dst=GATEWAY[0]) / Dot1Q(vlan=10) / IP(src=dev[1], dst=REMOTES["dns"]) / UDP(sport=rng.randint(1024, 65535), dport=53) / DNS(qd=DNSQR(qname="vlan.example"))
        elif kind == "v6":
            p = Ether(src=dev[0], dst=GATEWAY[0]) / IPv6(src="2001:db8:1::" + dev[1].split(".")[-1], dst="2001:4860:4860::8888") / ICMPv6EchoRequest()
            if reply:
                p = Ether(src=dev[0], dst=GATEWAY[0]) / IPv6(src="2001:db8:1::" + dev[1].split(".")[-1], dst="2606:4700::1111") / TCP(sport=rng.randint(32768, 60999), dport=443, flags="S")
        else:  # nogeo
            p = Ether(src=dev[0], dst=GATEWAY[0]) / IP(src=dev[1], dst=REMOTES["nogeo"]) / UDP(sport=rng.randint(1024, 65535), dport=9999) / Raw(b"?")
        # Some frames share a timestamp so replay coalescing is exercised.
        if rng.random() > 0.15:
            t += rng.choice([0.000137, 0.0021, 0.05, 0.1, 0.75])
        pkts.append(stamp(p, round(t, 6)))
    return pkts


def two_devices():
    pkts = []
    t = BASE + 100.0
    for i, rip in enumerate(["8.8.8.8", "93.184.216.34", "151.101.1.69"]):
        pkts.append(stamp(Ether(src=NEST[0], dst=GATEWAY[0]) / IP(src=NEST[1], dst=rip) / UDP(sport=5000 + i, dport=53), t + i))
    for i, rip in enumerate(["93.184.216.34", "17.253.14.125"]):
        pkts.append(stamp(Ether(src=GATEWAY[0], dst=ECHO[0]) / IP(src=rip, dst=ECHO[1]) / TCP(sport=443, dport=40000 + i), t + 10 + i))
    return pkts


def export_reference(path):
    rows = []
    with open(path, "rb") as f:
        for ts, buf in dpkt.pcap.Reader(f):
            eth = dpkt.ethernet.Ethernet(buf)
            row = {
                "ts_ns": round(ts * 1_000_000) * 1000,
                "caplen": len(buf),
                "src_mac": ":".join(f"{b:02x}" for b in eth.src),
                "dst_mac": ":".join(f"{b:02x}" for b in eth.dst),
                "ether_type": f"0x{eth.type:04x}",
                "src_ip": "", "dst_ip": "", "transport": "", "src_port": "", "dst_port": "",
            }
            ip = eth.data
            if isinstance(ip, (dpkt.ip.IP, dpkt.ip6.IP6)):
                if isinstance(ip, dpkt.ip.IP):
                    import socket
                    row["src_ip"] = socket.inet_ntop(socket.AF_INET, ip.src)
                    row["dst_ip"] = socket.inet_ntop(socket.AF_INET, ip.dst)
                else:
                    import socket
                    row["src_ip"] = socket.inet_ntop(socket.AF_INET6, ip.src)
                    row["dst_ip"] = socket.inet_ntop(socket.AF_INET6, ip.dst)
                l4 = ip.data
                if isinstance(l4, dpkt.tcp.TCP):
                    row.update(transport="TCP", src_port=l4.sport, dst_port=l4.dport)
                elif isinstance(l4, dpkt.udp.UDP):
                    row.update(transport="UDP", src_port=l4.sport, dst_port=l4.dport)
                elif isinstance(l4, dpkt.icmp.ICMP):
                    row.update(transport="ICMP")
                elif isinstance(l4, dpkt.icmp6.ICMP6):
                    row.update(transport="ICMPV6")
                else:
                    row.update(transport="OTHER")
            rows.append(row)
    # Original lengths come straight from the record headers.
    with open(path, "rb") as f:
        data = f.read()
    off, i = 24, 0
    while off < len(data):
        _, _, incl, orig = struct.unpack_from("<IIII", data, off)
        rows[i]["orig_len"] = orig
        off += 16 + incl
        i += 1
    out = path.with_suffix(".reference.csv")
    cols = ["ts_ns", "caplen", "orig_len", "src_mac", "dst_mac", "ether_type", "src_ip", "dst_ip", "transport", "src_port", "dst_port"]
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    wrpcap(str(OUT / "empty.pcap"), [], linktype=1)
    for name, pkts in [("udp3", udp3()), ("home100", home100()), ("two_devices", two_devices())]:
        path = OUT / f"{name}.pcap"
        wrpcap(str(path), pkts, linktype=1)
        export_reference(path)
    # Same packets, nanosecond-resolution magic.
    wrpcap(str(OUT / "udp3_nsec.pcap"), udp3(), linktype=1, nano=True)
    # Cut in the middle of the third frame's body.
    data = (OUT / "udp3.pcap").read_bytes()
    off = 24
    for _ in range(2):
        incl = struct.unpack_from("<I", data, off + 8)[0]
        off += 16 + incl
    (OUT / "truncated.pcap").write_bytes(data[: off + 16 + 10])


if __name__ == "__main__":
    main()
