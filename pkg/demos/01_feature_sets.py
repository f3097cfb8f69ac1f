#!/usr/bin/env python3
"""Walk through the per-codec feature taxonomies.

Every codec gets a fixed, ordered list of countable decoding features,
grouped into six categories. The layout is canonical, so the printed order
here is exactly the column order of dataset CSV files and the key order of
parameter files.
"""

from decegy import Category, Codec, build_feature_set

for codec in Codec:
    fs = build_feature_set(codec)
    print(f"\n{codec.value}: {len(fs)} features")
    for category in Category:
        members = [fid.name for fid in fs if fid.category is category]
        if members:
            print(f"  {category.value:<6} {', '.join(members)}")

print("\nJSON export of the HEVC set (column-header generation):")
print(build_feature_set(Codec.HEVC).to_json(indent=2))
