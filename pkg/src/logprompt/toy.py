"""Synthetic BGL-format corpus with known ground truth.

Normal windows draw every message from a family of routine templates.  An
anomalous window additionally carries one to three messages from a separate
"failure" family, tagged with a non-"-" alert category so the stock BGL
adapter labels them anomalous.
"""
from __future__ import annotations

import random
import time
from pathlib import Path

NORMAL_TEMPLATES = [
    "instruction cache parity error corrected",
    "generating core.{n}",
    "{n} double-hummer alignment exceptions",
    "CE sym {s}, at 0x{h}, mask 0x{m}",
    "{s} ddr error(s) detected and corrected on rank {r}, symbol {s} over {n} seconds",
    "total of {s} ddr error(s) detected and corrected",
    "ciod: generated {s} core files for program /g/g{s}/user{r}/bin/app{r}",
    "iar {h} dear {h}",
    "data cache parity error corrected",
    "job {n} started on partition R{r}{s}",
    "job {n} completed successfully in {s} seconds",
    "node card temperature {s} degrees within limits",
    "fan speed nominal at {n} rpm",
    "connection from {ip} closed",
    "connection from {ip} accepted",
    "scheduler heartbeat ok seq={n}",
    "link training completed on port {r}",
    "memory scrub pass {s} finished",
    "ciod: LOGIN chdir(/p/gb{r}/run{s}) succeeded",
    "idoproxy communication ping to {ip} ok",
    "service node {ip}:{n} registered",
    "torus receiver x+ input pipe parity corrected {s} times",
    "power module status nominal on {ip}",
    "checkpoint written to /scratch/ckpt/{n}.dat",
    "rts: kernel configured for {s} MB",
]

FAILURE_TEMPLATES = [
    ("KERNDTLB", "data TLB error interrupt"),
    ("KERNSTOR", "data storage interrupt"),
    ("APPREAD", "ciod: failed to read message prefix on control stream (CioStream socket to {ip}"),
    ("KERNMNTF", "Lustre mount FAILED : bglio{s} : block_id : location"),
    ("KERNRTSP", "rts panic! - stopping execution"),
    ("APPSEV", "ciod: Error reading message prefix after LOAD_MESSAGE on CioStream socket to {ip}: Link has been severed"),
    ("KERNPAN", "kernel panic"),
    ("MMCS", "machine check interrupt on node card {s} uncorrectable"),
]


def _fill(template: str, rng: random.Random) -> str:
    return template.format(
        n=rng.randrange(1, 100000),
        s=rng.randrange(0, 64),
        r=rng.randrange(0, 8),
        h="%08x" % rng.randrange(1 << 32),
        m="%02x" % rng.randrange(256),
        ip="10.%d.%d.%d" % (rng.randrange(256), rng.randrange(256), rng.randrange(1, 255)),
    )


def _line(tag: str, ts: int, content: str, rng: random.Random) -> str:
    node = "R%02d-M%d-N%X-C:J%02d-U%02d" % (rng.randrange(64), rng.randrange(2), rng.randrange(16),
                                           rng.randrange(18), rng.randrange(12))
    t = time.gmtime(ts)
    day = time.strftime("%Y.%m.%d", t)
    stamp = time.strftime("%Y-%m-%d-%H.%M.%S", t) + ".%06d" % rng.randrange(1000000)
    level = "INFO" if tag == "-" else "FATAL"
    return f"{tag} {ts} {day} {node} {stamp} {node} RAS KERNEL {level} {content}"


def generate_toy_corpus(path, n_sequences: int = 20000, window: int = 20, anomaly_rate: float = 0.05,
                        seed: int = 0, start_ts: int = 1117838570) -> dict:
    """Write ``n_sequences * window`` BGL-style lines to ``path``.

    Exactly ``round(anomaly_rate * n_sequences)`` windows (aligned to
    ``window``) are anomalous.  Returns a summary dict.
    """
    rng = random.Random(seed)
    n_anom = int(round(anomaly_rate * n_sequences))
    anomalous = set(rng.sample(range(n_sequences), n_anom))
    ts = start_ts
    with open(Path(path), "w", encoding="utf-8") as fh:
        for w in range(n_sequences):
            slots = [None] * window
            if w in anomalous:
                for pos in rng.sample(range(window), rng.randint(1, 3)):
                    slots[pos] = rng.choice(FAILURE_TEMPLATES)
            for slot in slots:
                ts += rng.randrange(0, 3)
                if slot is None:
                    fh.write(_line("-", ts, _fill(rng.choice(NORMAL_TEMPLATES), rng), rng) + "\n")
                else:
                    tag, tmpl = slot
                    fh.write(_line(tag, ts, _fill(tmpl, rng), rng) + "\n")
    return {"sequences": n_sequences, "window": window, "lines": n_sequences * window,
            "anomalous_sequences": n_anom, "seed": seed}
