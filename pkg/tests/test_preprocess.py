from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempest.dataset import JoinedRow
from tempest.preprocess import (
    FeatureSchema,
    SchemaMismatch,
    UnfittedScaler,
    apply_scaler,
    build_schema,
    encode_rows,
    prepare,
)

from conftest import utc

T0 = utc(2018, 9, 1)


def row(h, temp, wind_dir="N", condition="Clear", city="a", target=None):
    feats = {
        city: {
            "temp_f": temp,
            "humidity_pct": 50.0 + h,
            "wind_dir": wind_dir,
            "condition": condition,
        }
    }
    return JoinedRow(T0 + timedelta(hours=h), feats, target if target is not None else temp + 1)


def test_column_naming_and_width():
    schema = build_schema([row(0, 70.0, "N"), row(1, 71.0, "SW", "Rain")])
    names = [c for c, _ in schema.columns]
    assert names == [
        "a_temp_f",
        "a_humidity_pct",
        "a_wind_dir=N",
        "a_wind_dir=SW",
        "a_condition=Clear",
        "a_condition=Rain",
    ]
    assert schema.width == 6


def test_category_only_in_test_encodes_same_width():
    train = [row(h, 70.0 + h, "N") for h in range(5)]
    test = [row(10, 80.0, "ESE", "Snow")]
    tr, te, schema = prepare(train, test)
    assert tr.matrix.shape[1] == te.matrix.shape[1] == schema.width
    j = [c for c, _ in schema.columns].index("a_wind_dir=ESE")
    assert te.matrix[0, j] == 1.0
    assert np.all(tr.matrix[:, j] == 0.0)


def test_missing_categorical_is_all_zero():
    tr, _, schema = prepare([row(0, 70.0, None), row(1, 72.0, "N")], [row(2, 71.0)])
    (group,) = [g for g in schema.indicator_groups() if "wind_dir" in schema.columns[g[0]][0]]
    assert tr.matrix[0, group].sum() == 0.0
    assert tr.matrix[1, group].sum() == 1.0


def test_unseen_category_counted():
    schema = build_schema([row(0, 70.0, "N")])
    enc = encode_rows([row(1, 70.0, "S")], schema)
    assert enc.unseen == 1
    assert enc.matrix[0, 2] == 0.0


def test_scaler_fit_on_train_only():
    train = [row(h, 60.0 + h) for h in range(10)]
    test = [row(20, 1000.0)]
    tr, te, schema = prepare(train, test)
    mu, sigma = schema.scaler["a_temp_f"]
    assert mu == pytest.approx(64.5)
    assert sigma == pytest.approx(np.std(np.arange(10.0)))
    assert te.matrix[0, 0] == pytest.approx((1000.0 - mu) / sigma)
    assert schema.scaler_scope == "train"


def test_union_scope_uses_both():
    train = [row(h, 60.0 + h) for h in range(10)]
    test = [row(20, 1000.0)]
    _, _, schema = prepare(train, test, scaler_scope="union")
    assert schema.scaler["a_temp_f"][0] == pytest.approx((sum(60.0 + h for h in range(10)) + 1000.0) / 11)


def test_constant_column_flagged():
    train = [row(h, 70.0) for h in range(5)]
    tr, _, schema = prepare(train, [row(9, 71.0)])
    assert schema.scaler["a_temp_f"] == (70.0, 1.0)
    assert "a_temp_f" in schema.constant
    assert np.all(tr.matrix[:, 0] == 0.0)


def test_targets_not_scaled():
    tr, _, _ = prepare([row(h, 60.0 + h, target=100.0 + h) for h in range(5)], [row(9, 1.0)])
    assert list(tr.targets) == [100.0, 101.0, 102.0, 103.0, 104.0]


def test_unfitted_scaler_refused():
    schema = build_schema([row(0, 70.0)])
    with pytest.raises(UnfittedScaler):
        apply_scaler(encode_rows([row(0, 70.0)], schema), schema)


def test_city_mismatch():
    schema = build_schema([row(0, 70.0)])
    with pytest.raises(SchemaMismatch):
        encode_rows([row(0, 70.0, city="b")], schema)


def test_schema_round_trip(tmp_path):
    _, _, schema = prepare([row(h, 60.0 + h) for h in range(4)], [row(9, 1.0, "W")])
    schema.save(tmp_path / "s.json")
    back = FeatureSchema.load(tmp_path / "s.json")
    assert back == schema
    assert back.digest() == schema.digest()


categories = st.sampled_from(["N", "S", "E", "W", "Calm", None])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-60, 130), categories, st.sampled_from(["Clear", "Rain", None])), min_size=2, max_size=25),
    st.lists(st.tuples(st.floats(-60, 130), categories, st.sampled_from(["Clear", "Fog", "Snow"])), min_size=1, max_size=10),
)
def test_encoding_invariants(train_spec, test_spec):
    train = [row(i, t, w, c) for i, (t, w, c) in enumerate(train_spec)]
    test = [row(100 + i, t, w, c) for i, (t, w, c) in enumerate(test_spec)]
    tr, te, schema = prepare(train, test)
    assert tr.matrix.shape[1] == te.matrix.shape[1] == schema.width
    idx = schema.continuous_indices()
    assert np.all(np.abs(tr.matrix[:, idx].mean(axis=0)) < 1e-9)
    for g in schema.indicator_groups():
        assert np.all(tr.matrix[:, g].sum(axis=1) <= 1)
        assert np.all(te.matrix[:, g].sum(axis=1) <= 1)
    assert te.unseen == 0
