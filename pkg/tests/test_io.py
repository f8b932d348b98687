import logging

import pytest

from fuselab.domain import ProcessParams
from fuselab.errors import DomainError
from fuselab.io import atomic_write, cuboids_to_csv, read_cuboids, read_tensile, tensile_to_csv


def test_cuboid_roundtrip(tmp_path, campaign):
    cub, ten, _ = campaign
    path = tmp_path / "c.csv"
    path.write_text(cuboids_to_csv(cub, ["generated"]))
    back = read_cuboids(path)
    assert [(c.id, c.params, c.porosity, c.hardness) for c in back] == \
        [(c.id, c.params, c.porosity, c.hardness) for c in cub]
    tpath = tmp_path / "t.csv"
    tpath.write_text(tensile_to_csv(ten))
    tback = read_tensile(tpath)
    assert [t.yield_strength for t in tback] == [t.yield_strength for t in ten]


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        read_cuboids(tmp_path / "nope.csv")


def test_missing_column(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("id,power_w,speed_mm_s\n1,200,800\n")
    with pytest.raises(DomainError, match="missing columns"):
        read_cuboids(p)


def test_replicates_reduced_to_median(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(
        "# comment line\n"
        "id,power_w,speed_mm_s,layer_um,hatch_um,scan_rot,ys_1,ys_2,ys_3,uts_1,uts_2,uts_3,ef_1,ef_2,ef_3\n"
        "1,200,800,30,100,90,900,950,1000,1000,1050,1100,10,12,30\n"
    )
    (rec,) = read_tensile(p)
    assert rec.yield_strength == 950 and rec.ultimate_strength == 1050 and rec.ductility == 12
    assert rec.replicate_values == ((900, 1000, 10), (950, 1050, 12), (1000, 1100, 30))


def test_supplied_ved_flagged(tmp_path, caplog):
    p = tmp_path / "c.csv"
    p.write_text("id,power_w,speed_mm_s,layer_um,hatch_um,scan_rot,porosity,hardness_hv,ved\n"
                 "1,81,325,20,77,90,0.01,400,153.4\n"
                 "2,233,1471,20,71,90,0.01,400,111.4\n")
    with caplog.at_level(logging.WARNING):
        recs = read_cuboids(p)
    assert len(recs) == 2
    flagged = [r for r in caplog.records if "VED" in r.getMessage()]
    assert len(flagged) == 1 and "id=1" in flagged[0].getMessage()


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "sub" / "out.txt"
    atomic_write(p, "one")
    atomic_write(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["out.txt"]


def test_params_equality_survives_csv(tmp_path):
    params = ProcessParams.from_um(123.456789, 987.654321, 33.3, 101.1, 67)
    assert ProcessParams.from_um(*[float(repr(v)) for v in (params.power, params.speed, params.layer_um,
                                                            params.hatch_um)], 67) == params
