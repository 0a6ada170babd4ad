import json
import math

import numpy as np
import pytest

from hsreid.reid import (
    CmcCurve,
    DatasetManifest,
    DistanceMatrix,
    ManifestEntry,
    cmc,
    distance_matrix,
    image_distance,
    load_manifest,
    rank_of_match,
    read_distance_csv,
    save_manifest,
    write_cmc_csv,
    write_distance_csv,
)
from hsreid.spectral import SkinSignatureSet

from _oracles import bruteforce_cmc, bruteforce_rank


def sig_set(image_id, *vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    return SkinSignatureSet(
        image_id=image_id,
        labels=np.arange(len(vectors)),
        signatures=vectors,
        pixel_counts=np.ones(len(vectors), dtype=np.int64),
    )


def make_manifest(gallery_people, probe_people):
    entries = []
    for i, person in enumerate(gallery_people):
        entries.append(ManifestEntry(f"g{i:02d}", person, "gallery", f"g{i}.raw", f"g{i}.pgm"))
    for i, person in enumerate(probe_people):
        entries.append(ManifestEntry(f"p{i:02d}", person, "probe", f"p{i}.raw", f"p{i}.pgm"))
    return DatasetManifest(entries=tuple(entries))


def random_matrix(rng, n_probes, n_gallery, quantize=None):
    values = rng.random((n_probes, n_gallery))
    if quantize:
        values = np.round(values, quantize)  # force exact ties
    return DistanceMatrix(
        probe_ids=tuple(f"p{i:02d}" for i in range(n_probes)),
        gallery_ids=tuple(f"g{j:02d}" for j in range(n_gallery)),
        values=values,
    )


# ---------------------------------------------------------------- image distance


def test_identical_singleton_sets_have_zero_distance():
    s = sig_set("a", [0.2, 0.5, 0.1])
    assert image_distance(s, sig_set("b", [0.2, 0.5, 0.1])) == 0.0


def test_mixed_pair_distance_is_mean_of_angles():
    probe = sig_set("p", [1.0, 0.0])
    gallery = sig_set("g", [1.0, 0.0], [0.0, 1.0])
    assert image_distance(probe, gallery) == pytest.approx(math.pi / 4, rel=1e-12)
    assert image_distance(probe, gallery, aggregation="min") == 0.0


def test_image_distance_is_symmetric():
    rng = np.random.default_rng(0)
    a = sig_set("a", *(rng.random((3, 5)) + 0.01))
    b = sig_set("b", *(rng.random((2, 5)) + 0.01))
    assert image_distance(a, b) == image_distance(b, a)
    assert image_distance(a, b, "min") == image_distance(b, a, "min")


def test_image_distance_band_mismatch_rejected():
    with pytest.raises(ValueError, match="band counts"):
        image_distance(sig_set("a", [1.0, 0.0]), sig_set("b", [1.0, 0.0, 0.0]))


def test_image_distance_bad_aggregation_rejected():
    s = sig_set("a", [1.0, 0.0])
    with pytest.raises(ValueError, match="aggregation"):
        image_distance(s, s, aggregation="max")


# ---------------------------------------------------------------- distance matrix


def test_matrix_identical_pair():
    s = sig_set("p00", [0.3, 0.3])
    g = sig_set("g00", [0.3, 0.3])
    matrix = distance_matrix([s], [g])
    assert matrix.values.tolist() == [[0.0]]


def test_matrix_orthogonal_construction():
    p0 = sig_set("p0", [1.0, 0.0])
    p1 = sig_set("p1", [0.0, 1.0])
    g0 = sig_set("g0", [1.0, 0.0])
    g1 = sig_set("g1", [0.0, 1.0])
    matrix = distance_matrix([p0, p1], [g0, g1])
    assert matrix.values == pytest.approx(np.array([[0.0, math.pi / 2], [math.pi / 2, 0.0]]), abs=1e-15)


def test_matrix_gallery_permutation_permutes_columns():
    rng = np.random.default_rng(1)
    probes = [sig_set(f"p{i}", *(rng.random((2, 4)) + 0.01)) for i in range(3)]
    gallery = [sig_set(f"g{j}", *(rng.random((2, 4)) + 0.01)) for j in range(4)]
    base = distance_matrix(probes, gallery)
    perm = [2, 0, 3, 1]
    shuffled = distance_matrix(probes, [gallery[j] for j in perm])
    assert shuffled.gallery_ids == tuple(base.gallery_ids[j] for j in perm)
    assert np.array_equal(shuffled.values, base.values[:, perm])


def test_matrix_requires_nonempty_lists():
    with pytest.raises(ValueError, match="at least one"):
        distance_matrix([], [sig_set("g", [1.0])])


# ---------------------------------------------------------------- ranking


def test_rank_of_strictly_smallest_is_one():
    assert rank_of_match([0.1, 0.5, 0.9], ["g0", "g1", "g2"], ["a", "b", "c"], "a") == 1


def test_rank_of_strictly_largest_is_n():
    rng = np.random.default_rng(2)
    distances = np.concatenate([rng.uniform(0.0, 0.5, 14), [0.99]])
    people = [f"person{j}" for j in range(15)]
    assert rank_of_match(distances, [f"g{j:02d}" for j in range(15)], people, "person14") == 15


def test_rank_counts_smaller_entries():
    # sorted distances: 0.1 (g1), 0.2 (g2), 0.3 (g0) -> correct at index 0 ranks 3
    assert rank_of_match([0.3, 0.1, 0.2], ["g0", "g1", "g2"], ["a", "b", "c"], "a") == 3


def test_rank_tie_breaks_by_gallery_image_id():
    distances = [0.5, 0.5, 0.5]
    people = ["x", "y", "z"]
    assert rank_of_match(distances, ["g0", "g1", "g2"], people, "x") == 1
    assert rank_of_match(distances, ["g0", "g1", "g2"], people, "z") == 3
    # renaming the correct image to sort first flips the tie
    assert rank_of_match(distances, ["g5", "g6", "g0"], people, "z") == 1


def test_rank_multiple_correct_entries_takes_best():
    distances = [0.9, 0.3, 0.6]
    people = ["a", "b", "a"]
    assert rank_of_match(distances, ["g0", "g1", "g2"], people, "a") == 2


def test_rank_open_set_rejected():
    with pytest.raises(ValueError, match="not enrolled"):
        rank_of_match([0.1], ["g0"], ["a"], "b")


def test_rank_agrees_with_bruteforce_on_ties():
    rng = np.random.default_rng(3)
    ids = [f"g{j:02d}" for j in range(8)]
    people = [f"person{j % 5}" for j in range(8)]
    for _ in range(200):
        distances = np.round(rng.random(8), 1)
        probe_person = people[rng.integers(0, 8)]
        assert rank_of_match(distances, ids, people, probe_person) == bruteforce_rank(
            distances, ids, people, probe_person
        )


# ---------------------------------------------------------------- cmc


def test_cmc_all_rank_one():
    n = 5
    manifest = make_manifest([f"person{j}" for j in range(n)], [f"person{j}" for j in range(n)])
    values = np.ones((n, n)) - np.eye(n)
    matrix = DistanceMatrix(
        probe_ids=tuple(f"p{i:02d}" for i in range(n)),
        gallery_ids=tuple(f"g{j:02d}" for j in range(n)),
        values=values,
    )
    curve = cmc(matrix, manifest)
    assert np.all(curve.rates == 1.0)


def test_cmc_every_probe_second():
    n = 4
    manifest = make_manifest([f"person{j}" for j in range(n)], [f"person{j}" for j in range(n)])
    values = np.full((n, n), 0.9)
    for i in range(n):
        values[i, (i + 1) % n] = 0.1  # a wrong match is always closest
        values[i, i] = 0.2
    matrix = DistanceMatrix(
        probe_ids=tuple(f"p{i:02d}" for i in range(n)),
        gallery_ids=tuple(f"g{j:02d}" for j in range(n)),
        values=values,
    )
    curve = cmc(matrix, manifest)
    assert curve.rate(1) == 0.0
    assert all(curve.rate(r) == 1.0 for r in range(2, n + 1))


def test_cmc_matches_bruteforce_oracle_with_ties():
    rng = np.random.default_rng(4)
    for trial in range(40):
        n_probes = int(rng.integers(1, 8))
        n_gallery = int(rng.integers(2, 8))
        people = [f"person{j}" for j in range(n_gallery)]
        probe_people = [people[int(rng.integers(0, n_gallery))] for _ in range(n_probes)]
        manifest = make_manifest(people, probe_people)
        matrix = random_matrix(rng, n_probes, n_gallery, quantize=1 if trial % 2 else None)
        curve = cmc(matrix, manifest)
        expected = bruteforce_cmc(matrix.values, probe_people, list(matrix.gallery_ids), people)
        assert np.array_equal(curve.rates, expected)
        assert np.all(np.diff(curve.rates) >= 0.0)
        assert curve.rates[-1] == 1.0


def test_cmc_invariant_under_strictly_increasing_transform():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        people = [f"person{j}" for j in range(n)]
        probe_people = [people[int(rng.integers(0, n))] for _ in range(n)]
        manifest = make_manifest(people, probe_people)
        matrix = random_matrix(rng, n, n, quantize=1)
        curve = cmc(matrix, manifest)
        warped = DistanceMatrix(
            probe_ids=matrix.probe_ids,
            gallery_ids=matrix.gallery_ids,
            values=matrix.values**3 + matrix.values,
        )
        assert np.array_equal(cmc(warped, manifest).rates, curve.rates)


def test_cmc_invariant_under_gallery_permutation():
    rng = np.random.default_rng(6)
    n = 6
    people = [f"person{j}" for j in range(n)]
    manifest = make_manifest(people, people)
    matrix = random_matrix(rng, n, n)
    curve = cmc(matrix, manifest)
    perm = rng.permutation(n)
    permuted = DistanceMatrix(
        probe_ids=matrix.probe_ids,
        gallery_ids=tuple(matrix.gallery_ids[j] for j in perm),
        values=matrix.values[:, perm],
    )
    assert np.array_equal(cmc(permuted, manifest).rates, curve.rates)


def test_cmc_rejects_misaligned_ids():
    manifest = make_manifest(["a", "b"], ["a"])
    matrix = DistanceMatrix(probe_ids=("p00",), gallery_ids=("nope",), values=np.array([[0.1]]))
    with pytest.raises(ValueError, match="align"):
        cmc(matrix, manifest)


def test_cmc_curve_invariants():
    with pytest.raises(ValueError, match="non-decreasing"):
        CmcCurve(rates=np.array([0.5, 0.4, 1.0]))
    with pytest.raises(ValueError, match="reach 1.0"):
        CmcCurve(rates=np.array([0.5, 0.9]))
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        CmcCurve(rates=np.array([-0.1, 1.0]))


# ---------------------------------------------------------------- manifest


def test_manifest_rejects_duplicate_image_ids():
    with pytest.raises(ValueError, match="unique"):
        DatasetManifest(
            entries=(
                ManifestEntry("x", "a", "gallery", "c.raw", "m.pgm"),
                ManifestEntry("x", "b", "probe", "c.raw", "m.pgm"),
            )
        )


def test_manifest_rejects_open_set():
    with pytest.raises(ValueError, match="open set"):
        make_manifest(["a"], ["b"])


def test_manifest_requires_both_roles():
    with pytest.raises(ValueError, match="at least one"):
        DatasetManifest(entries=(ManifestEntry("x", "a", "gallery", "c.raw", "m.pgm"),))


def test_manifest_rejects_bad_role():
    with pytest.raises(ValueError, match="role"):
        ManifestEntry("x", "a", "enrolled", "c.raw", "m.pgm")


def test_manifest_json_roundtrip(tmp_path):
    manifest = make_manifest(["a", "b"], ["a", "b", "a"])
    path = tmp_path / "manifest.json"
    save_manifest(manifest, path)
    back = load_manifest(path)
    assert [e.image_id for e in back.entries] == [e.image_id for e in manifest.entries]
    assert [e.person_id for e in back.entries] == [e.person_id for e in manifest.entries]
    # relative paths resolve against the manifest directory
    assert back.entries[0].cube_path == tmp_path / "g0.raw"


def test_manifest_missing_field_reported(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"entries": [{"image_id": "x", "role": "gallery"}]}))
    with pytest.raises(ValueError, match="missing field"):
        load_manifest(path)


# ---------------------------------------------------------------- csv


def test_distance_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    matrix = random_matrix(rng, 3, 4)
    path = tmp_path / "distances.csv"
    write_distance_csv(matrix, path)
    header = path.read_text().splitlines()[0]
    assert header == "probe_id,g00,g01,g02,g03"
    back = read_distance_csv(path)
    assert back.probe_ids == matrix.probe_ids
    assert back.gallery_ids == matrix.gallery_ids
    assert np.array_equal(back.values, matrix.values)


def test_cmc_csv_format(tmp_path):
    curve = CmcCurve(rates=np.array([0.25, 0.75, 1.0]))
    path = tmp_path / "cmc.csv"
    write_cmc_csv(curve, path)
    assert path.read_text().splitlines() == ["rank,rate", "1,0.25", "2,0.75", "3,1.0"]
