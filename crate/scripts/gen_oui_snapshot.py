#!/usr/bin/env python3
"""Regenerate crates/core/data/oui.tsv from the Wireshark manuf table shipped with scapy.

Only 24-bit (MA-L) assignments are exported; the long organisation name is
preferred over the abbreviated one.
"""
import datetime
import pathlib
import sys

from scapy.all import conf

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/oui.tsv")
rows = []
for key, (short, long_name) in conf.manufdb.d.items():
    if len(key) != 8:
        continue
    name = (long_name or short or "").replace("\t", " ").strip()
    if not name:
        continue
    rows.append((key.replace(":", "").upper(), name))
rows.sort()
with out.open("w", encoding="utf-8") as f:
    f.write(f"# OUI registry snapshot ({len(rows)} entries), source: Wireshark manuf via scapy, generated {datetime.date.today()}\n")
    for oui, name in rows:
        f.write(f"{oui}\t{name}\n")
print(f"wrote {len(rows)} entries to {out}")
