"""Smoke test for the histofuse Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python python/smoke_test.py
"""

import math
import pathlib
import random
import shutil
import tempfile

import histofuse

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def check_od():
    assert histofuse.od_of(240.0) == 0.0
    assert histofuse.od_of(24.0) == 1.0
    for i in range(1, 241):
        assert histofuse.intensity_of(histofuse.od_of(float(i))) == i


def check_stain_and_minmax():
    tile = next((FIXTURES / "iciar60" / "Invasive").glob("*.png"))
    img = histofuse.Image.load(tile)
    model = histofuse.fit_stain_model(img)
    h, e = zip(*model.stain_matrix)
    assert h[2] > e[2], "hematoxylin column should come first"
    out = histofuse.stain_normalize(img, model)
    mae = sum(abs(a - b) for a, b in zip(out.values(), img.values())) / len(img.values())
    assert mae <= 2.0, mae

    scaled, constant = histofuse.minmax_normalize(img)
    assert not constant
    vals = scaled.values()
    assert min(vals) == 0.0 and max(vals) == 1.0

    flat = histofuse.Image.from_rgb8(4, 4, bytes([90] * 48))
    zeros, constant = histofuse.minmax_normalize(flat)
    assert constant and set(zeros.values()) == {0.0}

    a = histofuse.augment(img, seed=5, draw_index=2)
    b = histofuse.augment(img, seed=5, draw_index=2)
    assert (a.height, a.width) == (img.height, img.width)
    assert a.values() == b.values()
    assert histofuse.augment(img, seed=5, draw_index=2, identity=True).values() == img.values()


def check_metrics():
    m = histofuse.metrics([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (m["tp"], m["fp"], m["tn"], m["fn"]) == (2, 1, 1, 1)
    assert math.isclose(m["f1"], histofuse.f1_score(m["precision"], m["recall"]))
    assert histofuse.metrics([0, 0], [0, 0])["precision_degenerate"]


def check_training():
    rng = random.Random(3)
    rows, labels = [], []
    for i in range(80):
        y = i % 2
        rows.append([(4.0 if y else -4.0) + rng.uniform(-1, 1) for _ in range(5)])
        labels.append(y)
    fm = histofuse.FeatureMatrix(rows, labels)
    assert len(fm) == 80 and fm.dim == 5
    both = histofuse.FeatureMatrix.concat([fm, fm])
    assert both.dim == 10
    clf = histofuse.Classifier.train(fm, max_epochs=200, seed=1)
    preds = clf.predict(fm)
    acc = sum(p == y for (p, _), y in zip(preds, labels)) / len(labels)
    assert acc >= 0.95, acc
    assert all(math.isclose(sum(p), 1.0) for _, p in preds)
    with tempfile.TemporaryDirectory() as d:
        fm.save(pathlib.Path(d) / "f.hfv")
        clf.save(pathlib.Path(d) / "m.hfm")
        again = histofuse.Classifier.load(pathlib.Path(d) / "m.hfm")
        assert again.predict(histofuse.FeatureMatrix.load(pathlib.Path(d) / "f.hfv")) == preds


def check_pipeline():
    records = histofuse.ingest("iciar", FIXTURES / "iciar60", train_fraction=0.8, seed=7)
    assert len(records) == 60
    assert sum(r["split"] == "test" for r in records) == 12
    with tempfile.TemporaryDirectory() as d:
        out = pathlib.Path(d) / "out"
        first = histofuse.run_all(FIXTURES / "stub.conf", output_dir=out)
        assert "ensemble" in first["report_csv"]
        second = histofuse.run_all(FIXTURES / "stub.conf", output_dir=out)
        assert all(status == "cached" for _, status, _ in second["stages"])
        assert second["report_csv"] == first["report_csv"]
        shutil.rmtree(out)


def main():
    for check in (check_od, check_stain_and_minmax, check_metrics, check_training, check_pipeline):
        check()
        print(f"ok  {check.__name__}")


if __name__ == "__main__":
    main()
