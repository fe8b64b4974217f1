"""Seeded synthetic implicit-feedback data with clustered preferences.

The generator partitions the item set into equal-size blocks, one per
preference archetype. Each user belongs to one archetype (round-robin by
user number) and draws most of their items from their own block, where
per-item popularity decays with the item's rank inside the block, plus a
small uniform tail from the other blocks. The decay gives a global
popularity ranking some signal while leaving plenty of headroom for a
model that identifies the user's archetype, which is what end-to-end
learning checks exploit.

Run ``python -m vampcf.synthetic --help`` to write a ratings csv.
"""
import argparse
import csv

import numpy as np


def archetype_interactions(n_users=1200, n_items=300, n_archetypes=3, seed=0,
                           min_items=15, max_items=40, in_block_fraction=0.85,
                           decay=0.8):
    """Generate (user_id, item_id tuple) pairs in ingest's output format.

    Item ids are zero-padded so lexicographic order matches block layout.
    Deterministic given the arguments.
    """
    if n_items % n_archetypes:
        raise ValueError("n_items must be divisible by n_archetypes")
    rng = np.random.default_rng(seed)
    block = n_items // n_archetypes
    width = len(str(n_items - 1))
    item_ids = [f"i{j:0{width}d}" for j in range(n_items)]

    # per-block popularity profile, shared by all blocks
    ranks = np.arange(block, dtype=np.float64)
    weights = 1.0 / (ranks + 3.0) ** decay
    weights /= weights.sum()

    data = []
    uwidth = len(str(n_users - 1))
    for u in range(n_users):
        a = u % n_archetypes
        own = np.arange(a * block, (a + 1) * block)
        other = np.concatenate([np.arange(0, a * block),
                                np.arange((a + 1) * block, n_items)])
        n_u = int(rng.integers(min_items, max_items + 1))
        n_in = max(1, round(in_block_fraction * n_u))
        n_out = min(n_u - n_in, other.size)
        picked_in = rng.choice(own, size=min(n_in, block), replace=False, p=weights)
        picked_out = rng.choice(other, size=n_out, replace=False)
        items = tuple(sorted(item_ids[j] for j in np.concatenate([picked_in, picked_out])))
        data.append((f"u{u:0{uwidth}d}", items))
    return data


def write_ratings_csv(data, path, rating=5.0):
    """Emit generator output as a ``user_id,item_id,rating`` file."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "item_id", "rating"])
        for user_id, items in data:
            for item_id in items:
                w.writerow([user_id, item_id, rating])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--users", type=int, default=1200)
    ap.add_argument("--items", type=int, default=300)
    ap.add_argument("--archetypes", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="ratings csv to write")
    args = ap.parse_args(argv)
    data = archetype_interactions(args.users, args.items, args.archetypes, args.seed)
    write_ratings_csv(data, args.out)
    n_inter = sum(len(items) for _, items in data)
    print(f"wrote {args.out}: {args.users} users, {args.items} items, "
          f"{n_inter} interactions")


if __name__ == "__main__":
    main()
