#!/usr/bin/env python3
"""Turn a decode trace into a feature vector.

A trace records what the decoder actually processed: frames, prediction
blocks, transforms, non-zero coefficients, SAO filterings. The analyzer
applies the counting rules (block-size merging with half-weight rectangles,
pel/frac accounting, entropy-mode routing) and produces one count per
feature.
"""

import io

from decegy import analyze, map_inter_block, parse_trace, Codec

TRACE = """\
{"stream_id": "demo-hevc", "codec": "hevc"}
{"event": "frame_start"}
{"event": "intra", "w": 32, "h": 32}
{"event": "intra", "w": 16, "h": 16}
{"event": "inter", "w": 16, "h": 8, "bipred": false, "frac_h": true, "frac_v": false}
{"event": "inter", "w": 64, "h": 64, "bipred": true, "frac_h": true, "frac_v": true}
{"event": "transform", "w": 32, "h": 32}
{"event": "transform", "w": 4, "h": 4}
{"event": "coeff", "value": 4, "bits": 3}
{"event": "coeff", "value": -5, "bits": 4}
{"event": "sao"}
{"event": "frame_start"}
{"event": "inter", "w": 8, "h": 8}
"""

trace = parse_trace(io.StringIO(TRACE))
vector = analyze(trace)

print(f"stream {trace.stream_id!r}: {len(trace.events)} events\n")
print("nonzero feature counts:")
for name, count in vector.as_dict().items():
    if count:
        print(f"  {name:<8} {count:g}")

print("\nwhy inter16 is 0.5: a 16x8 block counts as half of the next bigger square")
print(" ", map_inter_block(Codec.HEVC, 16, 8))
print("\nwhy pel is 8384: 16*8 one-way + 64*64 bipredicted (counted twice) + 8*8")
print("why frac is 16512: one filtering per pel per fractional dimension,")
print("doubled under biprediction: 16*8 + 64*64 * 2 dims * 2")
