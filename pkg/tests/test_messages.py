import numpy as np
import pytest

from exergy_ves.messages import (
    ALLOWED_KINDS,
    SCHEMA,
    MessageBus,
    PrivacyViolation,
    consensus_message,
    consensus_row,
    make_message,
)


def test_schema_only_uses_shared_kinds():
    for fields in SCHEMA.values():
        assert set(fields.values()) <= ALLOWED_KINDS
    assert ALLOWED_KINDS == {"consensus", "multiplier", "volume", "price"}


@pytest.mark.parametrize("topic,payload", [
    ("trade", {"volume": [1.0], "cost": [3.0]}),
    ("consensus", {"dP": [1.0], "p_load": [5.0]}),
    ("price", {"price": [0.5], "surplus_base": [12.0]}),
    ("trade", {"volume": ["secret"]}),
])
def test_private_fields_are_rejected(topic, payload):
    with pytest.raises(PrivacyViolation):
        make_message(topic, "ies0", "ies1", 1, **payload)


def test_unknown_topic_rejected():
    with pytest.raises(PrivacyViolation):
        make_message("forecast", "ies0", "ves", 1, volume=[1.0])


def test_payload_is_a_frozen_copy():
    row = np.array([1.0, 2.0])
    msg = make_message("trade", "ies0", "ies1", 1, volume=row)
    row[0] = 99.0
    assert msg.payload["volume"][0] == 1.0
    with pytest.raises(ValueError):
        msg.payload["volume"][0] = 5.0


def test_consensus_round_trip():
    X = np.arange(12, dtype=float).reshape(4, 3)
    msg = consensus_message("ies0", "ves", 2, X, np.zeros((4, 3)))
    np.testing.assert_array_equal(consensus_row(msg), X)
    assert msg.kinds() == {"consensus", "multiplier"}


def test_bus_records_only_when_asked():
    quiet = MessageBus(record=False)
    quiet.send(make_message("price", "ies0", "ies1", 1, price=[0.4]))
    assert quiet.log == []
    loud = MessageBus()
    loud.send(make_message("price", "ies0", "ies1", 1, price=[0.4]))
    assert loud.topics() == {"price"}
