"""Smoke test for the patchwork_py extension.

Build and install first:  pip install --no-build-isolation -e crates/py
"""
import json
import math
import random
import tempfile
from pathlib import Path

import patchwork_py as pw


def main():
    tmp = Path(tempfile.mkdtemp(prefix="patchwork-smoke-"))

    n = pw.synth_corpus(str(tmp / "corpus"), 12, seed=1, width=96, height=96)
    assert n == 12, n
    manifest = tmp / "corpus" / "manifest.jsonl"
    assert manifest.exists()

    fit = pw.fit_square([(0, 0), (2, 0), (0, 2), (2, 2)], 2.0)
    assert abs(fit["side"] - 2.0) < 1e-12 and fit["verified"], fit
    assert len(pw.role_offsets()) == 4

    p = pw.projection_matrix()
    for row in p:
        assert abs(sum(row) - 1.0) < 1e-12

    assert abs(pw.normalized_correlation([1, 0, 0], [2, 0, 0]) - 1.0) < 1e-6

    rnd = random.Random(0)
    table = pw.EmbeddingTable(8)
    for i in range(20):
        table.push(f"img{i}:0:0:32", [rnd.gauss(0, 1) for _ in range(8)])
    assert len(table) == 20 and table.dim == 8
    hits = table.knn(0, 3)
    assert len(hits) == 3 and all(h[0] != table.patch(0) for h in hits)
    table.save(str(tmp / "t.emb"))
    assert len(pw.EmbeddingTable.load(str(tmp / "t.emb"))) == 20

    model = pw.Model.init(seed=0, patch_size=32)
    patches = [[rnd.gauss(0, 1) for _ in range(32 * 32 * 3)] for _ in range(2)]
    logits = model.logits(patches, patches[::-1])
    assert len(logits) == 2 and len(logits[0]) == 8
    assert all(0 <= c < 8 for c in model.predict(patches, patches))
    assert len(model.embed(patches)) == 2

    err = pw.grad_check(seed=0, batch=3)
    assert err < 1e-3, err

    rmse = pw.chance_rmse(str(manifest), 2000, seed=0, patch_size=32)
    assert 0.0 < rmse < 1.0, rmse

    rows = [json.loads(line) for line in manifest.read_text().splitlines()]
    ids = [r["image_id"] for r in rows if "image_id" in r]
    curve = pw.purity_coverage([ids[:10]], str(manifest))
    assert 0.0 <= curve["auc"] <= 1.0

    out = tmp / "cli"
    code = pw.run_cli(["chance-rmse", "--manifest", str(manifest),
                       "--samples", "1000", "--out", str(out)])
    assert code == 0, code
    assert (out / "chance_rmse.json").exists()

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
