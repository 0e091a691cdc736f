import json
import logging

import numpy as np
import pytest

from udslab.core.file_utils import atomic_write_json, encode_ppm, format_csv_value, render_csv, write_csv


def test_atomic_write_json_creates_file(tmp_path):
    target = tmp_path / "config_effective.json"
    payload = {"method": "UDS_GEN", "w": 7.5}
    assert atomic_write_json(target, payload)
    saved = json.loads(target.read_text(encoding="utf-8"))
    assert saved == payload


def test_atomic_write_json_handles_serialisation_error(tmp_path, caplog):
    target = tmp_path / "broken.json"

    class Unserialisable:
        pass

    logger = logging.getLogger("test.atomic_write")
    with caplog.at_level(logging.ERROR):
        result = atomic_write_json(target, {"value": Unserialisable()}, logger=logger)
    assert result is False
    assert not target.exists()
    assert any("JSON konnte nicht serialisiert" in message for message in caplog.text.splitlines())


def test_csv_values_round_trip_exactly():
    value = 0.1 + 0.2
    assert float(format_csv_value(value)) == value
    assert format_csv_value(np.float64(1.0) / 3.0) == "0.33333333333333331"
    assert format_csv_value(None) == ""
    assert format_csv_value(True) == "1"
    assert format_csv_value(np.int64(42)) == "42"
    assert format_csv_value("UDS_EDIT") == "UDS_EDIT"


def test_write_csv_uses_lf_and_header(tmp_path):
    target = tmp_path / "trace.csv"
    assert write_csv(target, ["step", "grad_norm"], [[1, 0.5], [2, -2.0]])
    assert target.read_bytes() == b"step,grad_norm\n1,0.5\n2,-2\n"
    with pytest.raises(ValueError):
        render_csv(["a", "b"], [[1]])


def test_encode_ppm_header_and_size():
    panels = [np.arange(4.0).reshape(2, 2), np.ones((2, 2))]
    data = encode_ppm(panels, scale=3)
    header = b"P6\n13 6\n255\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 13 * 6 * 3
    pixels = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(6, 13, 3)
    assert pixels[0, 0, 0] == 0
    assert pixels[5, 5, 0] == 255
    assert pixels[0, 6, 0] == 0
    assert pixels[0, 7, 0] == 128


def test_encode_ppm_rejects_bad_panels():
    with pytest.raises(ValueError):
        encode_ppm([])
    with pytest.raises(ValueError):
        encode_ppm([np.zeros((2, 2)), np.zeros((3, 3))])
    with pytest.raises(ValueError):
        encode_ppm([np.zeros((2, 2))], scale=0)
