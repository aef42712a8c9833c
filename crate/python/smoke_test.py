#!/usr/bin/env python3
"""Smoke test for the shgw_py extension module.

Build and stage the module first:

    cargo build -p shgw-py
    cp target/debug/libshgw_py.so python/shgw_py.so

then run `python3 python/smoke_test.py`.
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import shgw_py


def main() -> None:
    db = shgw_py.SignatureDb()
    assert db.version == 1, db.version
    assert "[[ports]]" in shgw_py.default_signatures()

    # HTTP GET head extraction: complete, partial, and non-GET inputs.
    head = (
        b"GET /index.html HTTP/1.1\r\n"
        b"Host: streamhub.example\r\n"
        b"User-Agent: demo\r\n\r\n"
    )
    info = shgw_py.parse_get(head)
    assert info["url"] == "/index.html", info
    assert info["host"] == "streamhub.example", info
    assert shgw_py.parse_get(head[:10]) is None
    try:
        shgw_py.parse_get(b"POST /submit HTTP/1.1\r\n\r\n")
    except ValueError:
        pass
    else:
        raise AssertionError("POST should not parse as a GET head")

    # Labeled corpus generation is deterministic.
    corpus = shgw_py.generate_corpus(sessions=80, seed=7)
    again = shgw_py.generate_corpus(sessions=80, seed=7)
    assert corpus.pcap == again.pcap
    assert corpus.truth == again.truth
    assert corpus.sessions == 80
    truth_lines = [l for l in corpus.truth.splitlines() if l.strip()]
    assert len(truth_lines) == 80

    # Full pipeline run with accuracy evaluation against the truth sidecar.
    report_json, records = shgw_py.analyze(corpus.pcap, db=db, truth=corpus.truth)
    report = json.loads(report_json)
    assert report["counters"]["sessions_closed"] == 80, report["counters"]
    for dim, stats in report["accuracy"]["per_dimension"].items():
        assert stats["correct"] == stats["total"], (dim, stats)
    assert len(records) > 0

    # Record lines are fixed points of the codec.
    for line in records[:20]:
        assert shgw_py.canonical_record(line) == line
        parsed = json.loads(line)
        assert parsed["gateway_id"] == "gw-0"

    # Cleansing policy drops blocklisted static-content sessions.
    web = shgw_py.generate_web_corpus(sessions=50, seed=3)
    _, kept_default = shgw_py.analyze(web.pcap)
    permissive = shgw_py.Policy(
        json.dumps({"version": 2, "cleanse_ext_blocklist": []}).encode()
    )
    assert permissive.version == 2
    _, kept_all = shgw_py.analyze(web.pcap, policy=permissive)
    assert len(kept_default) < len(kept_all), (len(kept_default), len(kept_all))

    print("smoke test passed")


if __name__ == "__main__":
    main()
