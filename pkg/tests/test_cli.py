import csv
import json
import shutil

import numpy as np
import pytest
from PIL import Image

from anonypipe.cli import main
from anonypipe.detection import DetectionManifest
from anonypipe.imaging import read_image
from anonypipe.pipeline import canonicalize

from helpers import face, make_dataset, write_config
from oracles import brute_force_ap, brute_force_iiou, brute_force_iou


def load_json(path):
    return json.loads(path.read_text())


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestAnonymize:
    def test_empty_input(self, tmp_path):
        (tmp_path / "in").mkdir()
        cfg = write_config(tmp_path / "c.toml", "crop", tmp_path / "in", tmp_path / "out", tmp_path / "s.json")
        DetectionManifest([]).save(tmp_path / "s.json")
        assert main(["anonymize", "--config", str(cfg)]) == 0
        man = load_json(tmp_path / "out" / "run_manifest.json")
        assert man["images"] == [] and man["noa"] == 0 and man["complete"]
        assert man["schema_version"] == 1
        assert [p.name for p in (tmp_path / "out").iterdir()] == ["run_manifest.json"]

    def test_crop_white_boxes(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng)
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "c.toml", "crop", input_dir, out, sidecar)
        assert main(["anonymize", "--config", str(cfg)]) == 0
        for entry in manifest.entries:
            orig = read_image(input_dir / entry.image_path)
            anon = read_image(out / entry.image_path)
            keep = np.ones(orig.shape[:2], bool)
            for f in entry.faces:
                assert np.all(anon[f.box.as_slices()] == 255)
                keep[f.box.as_slices()] = False
            assert np.array_equal(anon[keep], orig[keep])
        man = load_json(out / "run_manifest.json")
        assert man["noa"] == sum(len(e.faces) for e in manifest.entries) == man["faces_detected"]
        assert all(r["status"] == "ok" for r in man["images"])

    def test_output_tree_mirrors_input(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=4)
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "c.toml", "pixel", input_dir, out, sidecar)
        assert main(["anonymize", "--config", str(cfg), "--jobs", "3"]) == 0
        assert set(tree(input_dir)) == set(tree(out)) - {"run_manifest.json"}

    def test_ldfa_identity_is_bit_exact(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=3)
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "c.toml", "ldfa", input_dir, out, sidecar, '[inpainter]\nbackend = "stub"\nstub.identity = true'
        )
        assert main(["anonymize", "--config", str(cfg)]) == 0
        produced = tree(out)
        for rel in tree(input_dir):
            assert np.array_equal(read_image(out / rel), read_image(input_dir / rel))
        assert "run_manifest.json" in produced

    def test_deterministic_rerun(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=4)
        runs = []
        for name, jobs in (("a", "1"), ("b", "4")):
            out = tmp_path / name
            cfg = write_config(tmp_path / f"{name}.toml", "ldfa", input_dir, out, sidecar)
            assert main(["anonymize", "--config", str(cfg), "--jobs", jobs]) == 0
            man = canonicalize(load_json(out / "run_manifest.json"))
            man["config"].pop("output_dir")
            man["config"].pop("jobs")
            runs.append((tree(out), man))
        (ta, ma), (tb, mb) = runs
        ta.pop("run_manifest.json"), tb.pop("run_manifest.json")
        assert ta == tb and ma == mb

    def test_seed_override(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=1)
        cfg = write_config(tmp_path / "c.toml", "ldfa", input_dir, tmp_path / "out", sidecar)
        assert main(["anonymize", "--config", str(cfg), "--seed", "42"]) == 0
        man = load_json(tmp_path / "out" / "run_manifest.json")
        assert man["config"]["base_seed"] == 42 and man["config"]["method_config"]["base_seed"] == 42

    def test_bad_threshold_exit_2(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=1)
        cfg = write_config(tmp_path / "c.toml", "crop", input_dir, tmp_path / "out", sidecar)
        assert main(["anonymize", "--config", str(cfg), "--threshold", "1.1"]) == 2

    def test_unreadable_image_fails(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=2)
        (input_dir / "broken.png").write_bytes(b"not a png")
        cfg = write_config(tmp_path / "c.toml", "crop", input_dir, tmp_path / "out", sidecar)
        assert main(["anonymize", "--config", str(cfg)]) == 1
        man = load_json(tmp_path / "out" / "run_manifest.json")
        status = {r["image_path"]: r["status"] for r in man["images"]}
        assert status.pop("broken.png") == "failed" and set(status.values()) == {"ok"}
        assert not man["complete"]

    def test_jpeg_flag(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng, n_images=1)
        cfg = write_config(tmp_path / "c.toml", "gauss", input_dir, tmp_path / "out", sidecar)
        assert main(["anonymize", "--config", str(cfg), "--jpeg"]) == 0
        rel = manifest.entries[0].image_path
        assert (tmp_path / "out" / rel).with_suffix(".jpg").is_file()


class TestDetect:
    def test_matches_sidecar_and_is_stable(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng, n_images=3)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["detect", str(input_dir), "--sidecar", str(sidecar), "--threshold", "0", "--out", str(a)]) == 0
        assert main(["detect", str(input_dir), "--sidecar", str(sidecar), "--threshold", "0", "--out", str(b)]) == 0
        got = DetectionManifest.load(a)
        assert got.paths() == manifest.paths()
        for mine, theirs in zip(got.entries, manifest.entries):
            assert mine.faces == sorted(theirs.faces, key=lambda f: f.sort_key())
        assert a.read_bytes() == b.read_bytes()

    def test_threshold_out_of_range(self, tmp_path, rng):
        input_dir, sidecar, _ = make_dataset(tmp_path, rng, n_images=1)
        out = tmp_path / "d.json"
        assert main(["detect", str(input_dir), "--sidecar", str(sidecar), "--threshold", "1.1", "--out", str(out)]) == 2
        assert not out.exists()

    def test_backend_failure(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng, n_images=1)
        bad = manifest.to_dict()
        bad["entries"][0]["image_w"] = 4000
        bad["entries"][0]["faces"] = [{"box": [3900, 0, 3990, 10], "confidence": 0.9, "size_category": "S"}]
        (tmp_path / "bad.json").write_text(json.dumps(bad))
        out = tmp_path / "d.json"
        assert main(["detect", str(input_dir), "--sidecar", str(tmp_path / "bad.json"), "--out", str(out)]) == 1


class TestEvalDet:
    def write(self, path, manifest):
        manifest.save(path)
        return str(path)

    def test_identity_and_empty(self, tmp_path, rng):
        _, sidecar, manifest = make_dataset(tmp_path, rng, n_images=3)
        out = tmp_path / "r.json"
        assert main(["eval-det", str(sidecar), str(sidecar), "--out", str(out)]) == 0
        rep = load_json(out)
        assert rep["map"] == 1.0 and rep["schema_version"] == 1
        empty = DetectionManifest([type(e)(e.image_path, e.image_w, e.image_h, []) for e in manifest.entries])
        assert main(["eval-det", str(sidecar), self.write(tmp_path / "e.json", empty), "--out", str(out)]) == 0
        rep = load_json(out)
        assert rep["map"] == 0.0 and rep["noa"] == 0

    def test_three_face_fixture_matches_oracle(self, tmp_path):
        from anonypipe.detection import ManifestEntry

        gt_faces = [face(10, 10, 40, 40), face(100, 20, 140, 60), face(200, 100, 300, 220)]
        pred_faces = [face(12, 10, 40, 42, 0.8), face(100, 25, 138, 60, 0.95), face(150, 150, 170, 170, 0.9)]
        gt = self.write(tmp_path / "g.json", DetectionManifest([ManifestEntry("x.png", 320, 240, gt_faces)]))
        pred = self.write(tmp_path / "p.json", DetectionManifest([ManifestEntry("x.png", 320, 240, pred_faces)]))
        out = tmp_path / "r.json"
        assert main(["eval-det", gt, pred, "--iou-thresholds", "0.5,0.75", "--out", str(out)]) == 0
        as_t = lambda fs: [(f.box.as_tuple(), f.confidence) for f in fs]
        want = np.mean([brute_force_ap(as_t(gt_faces), as_t(pred_faces), t) for t in (0.5, 0.75)])
        assert load_json(out)["map"] == pytest.approx(want, abs=1e-9)

    def test_image_set_mismatch(self, tmp_path, capsys):
        from anonypipe.detection import ManifestEntry

        gt = self.write(tmp_path / "g.json", DetectionManifest([ManifestEntry("a.png", 10, 10, [])]))
        pred = self.write(tmp_path / "p.json", DetectionManifest([ManifestEntry("b.png", 10, 10, [])]))
        assert main(["eval-det", gt, pred, "--out", str(tmp_path / "r.json")]) != 0
        err = capsys.readouterr().err
        assert "a.png" in err and "b.png" in err


class TestEvalEmbed:
    def test_identity_crop_and_histogram(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng, n_images=2)
        out = tmp_path / "same.csv"
        assert main(["eval-embed", str(input_dir), str(input_dir), str(sidecar), "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert len(rows) == sum(len(e.faces) for e in manifest.entries)
        assert all(float(r["l2_distance"]) == 0.0 for r in rows)
        hist_rows = (tmp_path / "same_hist.csv").read_text().splitlines()
        assert hist_rows[0] == "bin_left,bin_right,count" and len(hist_rows) == 1 + 50

        anon = tmp_path / "anon"
        cfg = write_config(tmp_path / "c.toml", "crop", input_dir, anon, sidecar)
        assert main(["anonymize", "--config", str(cfg)]) == 0
        out = tmp_path / "crop.csv"
        svg = tmp_path / "crop.svg"
        args = ["eval-embed", str(input_dir), str(anon), str(sidecar), "--bins", "8", "--svg", str(svg)]
        assert main(args + ["--dim", "2622", "--out", str(out)]) == 0
        assert all(float(r["l2_distance"]) > 0 for r in csv.DictReader(out.open()))
        assert len((tmp_path / "crop_hist.csv").read_text().splitlines()) == 1 + 8
        assert svg.read_text().startswith("<svg")

    def test_missing_counterpart(self, tmp_path, rng):
        input_dir, sidecar, manifest = make_dataset(tmp_path, rng, n_images=2)
        anon = tmp_path / "anon"
        shutil.copytree(input_dir, anon)
        (anon / manifest.entries[0].image_path).unlink()
        assert main(["eval-embed", str(input_dir), str(anon), str(sidecar), "--out", str(tmp_path / "d.csv")]) == 1


def save_raster(path, arr):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(arr, dtype=np.uint16)).save(path)


class TestEvalSeg:
    GT = np.array([[24, 24, 0, 0], [24, 24, 0, 7], [0, 0, 24, 7], [7, 7, 24, 7]])
    INST = np.array([[24001, 24001, 0, 0], [24001, 24001, 0, 7], [0, 0, 24002, 7], [7, 7, 24002, 7]])
    PRED = np.array([[24, 0, 0, 0], [24, 24, 24, 7], [0, 0, 0, 7], [7, 0, 24, 7]])

    def fixture(self, tmp_path, pred):
        save_raster(tmp_path / "gt" / "a.png", self.GT)
        save_raster(tmp_path / "inst" / "a.png", self.INST)
        save_raster(tmp_path / "pred" / "a.png", pred)
        return [str(tmp_path / "gt"), str(tmp_path / "pred"), "--gt-instances", str(tmp_path / "inst")]

    def test_identity(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["eval-seg", *self.fixture(tmp_path, self.GT), "--classes", "person=24", "--out", str(out)]) == 0
        c = load_json(out)["classes"]["person"]
        assert c["iou"] == 1.0 and c["iiou"] == 1.0

    def test_fixture_matches_oracle_and_baseline(self, tmp_path):
        out = tmp_path / "r.json"
        args = ["eval-seg", *self.fixture(tmp_path, self.PRED), "--classes", "person=24", "sign=7"]
        assert main(args + ["--out", str(out)]) == 0
        rep = load_json(out)["classes"]
        assert rep["person"]["iou"] == pytest.approx(brute_force_iou(self.GT, self.PRED, 24), abs=1e-12)
        # person instances have sizes 4 and 2, average 3
        assert rep["person"]["iiou"] == pytest.approx(brute_force_iiou(self.INST, self.PRED, 24, 3.0), abs=1e-12)
        assert rep["sign"]["iou"] == pytest.approx(brute_force_iou(self.GT, self.PRED, 7), abs=1e-12)
        assert rep["sign"]["iiou"] is None

        again = tmp_path / "r2.json"
        assert main(args + ["--baseline", str(out), "--out", str(again)]) == 0
        assert all(c["delta_iou_rel"] == 0.0 for c in load_json(again)["classes"].values())

    def test_misaligned(self, tmp_path):
        args = self.fixture(tmp_path, self.GT)
        save_raster(tmp_path / "pred" / "a.png", np.zeros((3, 4)))
        assert main(["eval-seg", *args, "--classes", "person=24", "--out", str(tmp_path / "r.json")]) == 1
        (tmp_path / "pred" / "a.png").unlink()
        assert main(["eval-seg", *args, "--classes", "person=24", "--out", str(tmp_path / "r.json")]) == 1


def test_histogram_command(tmp_path):
    src = tmp_path / "d.csv"
    src.write_text("image_path,face_index,l2_distance\na,0,0.1\na,1,1.9\nb,0,2.0\n")
    out = tmp_path / "h.csv"
    assert main(["histogram", str(src), "--bins", "2", "--out", str(out)]) == 0
    assert out.read_text() == "bin_left,bin_right,count\n0.000000,1.000000,1\n1.000000,2.000000,2\n"
    assert main(["histogram", str(src), "--column", "nope", "--out", str(out)]) == 1
