"""Regenerate the CLI golden fixture from the reference oracle (never from the pipeline)."""

import hashlib
import json
from pathlib import Path

from tilemul.corpus import random_coo
from tilemul.mmio import read_matrix_market, write_matrix_market
from tilemul.oracle import dense_spgemm_mixed_ordered
from tilemul.tile_format import from_element_coo, tiled_binary_bytes

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    fixture = DATA / "golden_fixture.mtx"
    write_matrix_market(random_coo(96, 0.06, seed=2024), fixture)
    a = read_matrix_market(fixture)
    C = from_element_coo(dense_spgemm_mixed_ordered(a, a), kind="fp32")
    digest = hashlib.sha256(tiled_binary_bytes(C)).hexdigest()
    (DATA / "golden.json").write_text(json.dumps(
        {"fixture": fixture.name, "nnzC": C.nnz, "tiles": C.num_tiles, "sha256": digest}, indent=2) + "\n")
    print(digest)


if __name__ == "__main__":
    main()
