"""A tiny scorer server for transport tests.

Speaks the line-delimited protocol over stdio. Modes (argv[1]):

  ok            answer every request correctly (scores 0.5, unit-ish vectors)
  short-reply   return one score too few for score_pairs
  long-reply    return one score too many
  out-of-range  return a score of 1.5
  bad-id        answer with a wrong request id
  no-caps       declare no capabilities in hello
"""

import json
import sys

MODE = sys.argv[1] if len(sys.argv) > 1 else "ok"
BATCH_LIMIT = int(sys.argv[2]) if len(sys.argv) > 2 else 900
DIM = 8


def reply(record):
    sys.stdout.write(json.dumps(record) + "\n")
    sys.stdout.flush()


def main():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        rid = msg.get("id")
        op = msg.get("op")
        if MODE == "bad-id" and op != "hello":
            rid = 999999
        if op == "hello":
            caps = [] if MODE == "no-caps" else ["score_pairs", "embed"]
            reply({"id": rid, "name": f"mock-{MODE}", "caps": caps, "batch_limit": BATCH_LIMIT})
        elif op == "score_pairs":
            n = len(msg.get("pairs", []))
            if MODE == "short-reply":
                n -= 1
            elif MODE == "long-reply":
                n += 1
            value = 1.5 if MODE == "out-of-range" else 0.5
            reply({"id": rid, "scores": [value] * n})
        elif op == "embed":
            texts = msg.get("texts", [])
            vectors = [[1.0] + [0.0] * (DIM - 1) for _ in texts]
            reply({"id": rid, "dim": DIM, "vectors": vectors})
        else:
            reply({"id": rid, "error": f"unknown op {op!r}"})


if __name__ == "__main__":
    main()
