import numpy as np
import pytest

from pwxgb.boost import BoostParams, oracle_predict, oracle_train
from pwxgb.errors import FormatError
from pwxgb.federated import FederatedModel
from pwxgb.model_io import load, model_from_bytes, model_to_bytes, save, store_from_bytes, store_to_bytes, to_json


@pytest.fixture
def fm(rng):
    parts = [rng.normal(size=(60, 2)) for _ in range(2)]
    y = parts[0][:, 0] * parts[1][:, 1]
    model, stores = oracle_train(parts, y, BoostParams(n_trees=3, max_depth=2, n_bins=8, eta=0.25), party_ids=(0, 4))
    return FederatedModel(model, stores), parts


def test_round_trip_bit_exact(fm, tmp_path):
    f, parts = fm
    save(f, tmp_path)
    back = load(tmp_path)
    assert model_to_bytes(back.model) == model_to_bytes(f.model)
    assert back.model.params == f.model.params and back.model.party_ids == (0, 4)
    assert back.stores == f.stores
    assert np.array_equal(oracle_predict(back.model, back.stores, parts), oracle_predict(f.model, f.stores, parts))


def test_bad_files(fm, tmp_path):
    f, _ = fm
    data = model_to_bytes(f.model)
    with pytest.raises(FormatError):
        model_from_bytes(b"NOTAMODEL" + data[9:])
    with pytest.raises(FormatError):
        model_from_bytes(data[: len(data) - 5])
    with pytest.raises(FormatError):
        store_from_bytes(store_to_bytes(f.stores[0])[:-3])
    with pytest.raises(FormatError):
        store_from_bytes(data)
    with pytest.raises(FormatError):
        load(tmp_path / "nothing")


def test_json_dump(fm):
    f, _ = fm
    d = to_json(f)
    assert isinstance(d, dict) and len(d["trees"]) == 3
