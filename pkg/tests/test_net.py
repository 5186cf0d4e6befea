"""Wire format tests: packet bit layout, receive-side hardening, telemetry
schema conformance."""
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from teleosim import net
from teleosim.net import (
    BadEnum,
    BadLength,
    BadMagic,
    CommandPacket,
    CommandReceiver,
    DedupeFilter,
    decode,
    encode,
    seq_is_duplicate,
)

GOLDEN_LEFT_BCI = bytes.fromhex("42435231010101000100000000000000" + "00")


def test_packet_golden_bytes():
    data = encode("left", "bci", 1, 0)
    assert data == GOLDEN_LEFT_BCI
    assert len(data) == net.PACKET_SIZE == 17
    assert data[:4] == b"BCR1"


def test_packet_max_values():
    data = encode("right", "manual", 65535, 2 ** 64 - 1)
    assert data[5] == 2 and data[6] == 2
    assert data[7:9] == b"\xff\xff" and data[9:] == b"\xff" * 8
    pkt = decode(data)
    assert pkt == CommandPacket("right", "manual", 65535, 2 ** 64 - 1)


def test_roundtrip_over_valid_domain():
    rng = np.random.default_rng(0)
    for _ in range(20000):
        pkt = CommandPacket(
            command=("left", "right")[rng.integers(2)],
            source=("bci", "manual")[rng.integers(2)],
            seq=int(rng.integers(0, 1 << 16)),
            stamp_ms=int(rng.integers(0, 1 << 63)))
        assert decode(encode(pkt.command, pkt.source, pkt.seq, pkt.stamp_ms)) == pkt


def test_decode_rejects_bad_length():
    for n in (0, 15, 16, 18, 40):
        with pytest.raises(BadLength):
            decode(b"\x00" * n)


def test_decode_rejects_bad_magic():
    data = b"XXXX" + GOLDEN_LEFT_BCI[4:]
    with pytest.raises(BadMagic):
        decode(data)


def test_decode_rejects_bad_enums():
    good = bytearray(GOLDEN_LEFT_BCI)
    cmd7 = bytes(good[:5]) + b"\x07" + bytes(good[6:])
    with pytest.raises(BadEnum):
        decode(cmd7)
    src0 = bytes(good[:6]) + b"\x00" + bytes(good[7:])
    with pytest.raises(BadEnum):
        decode(src0)
    ver2 = bytes(good[:4]) + b"\x02" + bytes(good[5:])
    with pytest.raises(BadEnum):
        decode(ver2)


def test_encode_rejects_bad_values():
    with pytest.raises(BadEnum):
        encode("forward", "bci", 0, 0)
    with pytest.raises(ValueError):
        encode("left", "bci", 1 << 16, 0)
    with pytest.raises(ValueError):
        encode("left", "bci", 0, -1)


def test_dedupe_window_semantics():
    assert seq_is_duplicate(5, 5)
    assert not seq_is_duplicate(5, 6)
    assert not seq_is_duplicate(65535, 0)  # wrap: 0 is newer
    assert not seq_is_duplicate(None, 0)
    for last in (0, 7, 32768, 65535):
        for offset in range(16):
            assert seq_is_duplicate(last, (last - offset) % 65536)
        for offset in (16, 17, 100, 30000):
            assert not seq_is_duplicate(last, (last - offset) % 65536)


def test_dedupe_filter_is_per_source():
    f = DedupeFilter()
    assert f.accept(CommandPacket("left", "bci", 5, 0))
    assert f.accept(CommandPacket("left", "manual", 5, 0))
    assert not f.accept(CommandPacket("left", "bci", 5, 1))
    assert f.accept(CommandPacket("right", "bci", 6, 2))


def test_receiver_counts_and_delivers():
    rx = CommandReceiver()
    assert rx.push_datagram(encode("left", "bci", 1, 10)) is not None
    assert rx.push_datagram(encode("left", "bci", 1, 11)) is None  # dup
    assert rx.push_datagram(b"garbage") is None
    assert rx.push_datagram(encode("right", "manual", 1, 12)) is not None
    assert (rx.accepted, rx.duplicates, rx.malformed) == (2, 1, 1)
    got = rx.drain()
    assert [p.command for p in got] == ["left", "right"]
    assert rx.pop() is None


def test_receiver_bounded_queue_drops_oldest():
    rx = CommandReceiver(maxlen=4)
    for seq in range(6):
        rx.push_datagram(encode("left", "bci", 100 + seq, seq))
    assert rx.dropped == 2
    seqs = [p.seq for p in rx.drain()]
    assert seqs == [102, 103, 104, 105]


def test_receiver_survives_fuzz():
    rng = np.random.default_rng(1)
    rx = CommandReceiver(maxlen=100000)
    total = 100000
    for _ in range(total):
        n = int(rng.integers(0, 40))
        rx.push_datagram(rng.bytes(n))
    assert rx.accepted + rx.malformed + rx.duplicates == total
    # random bytes essentially never pass magic+enum validation
    assert rx.malformed == total


# -- telemetry schema -------------------------------------------------------------


@pytest.fixture(scope="module")
def schema():
    text = resources.files("teleosim").joinpath(
        "schemas/telemetry.schema.json").read_text()
    return json.loads(text)


@pytest.fixture(scope="module")
def validator(schema):
    return jsonschema.Draft202012Validator(schema)


def sample_messages():
    class Goal:
        target = (1.0, 2.0, 0.5)
        origin = "command-left"

    return [
        net.msg_pose(1.0, 2.0, 3.0, 0.1),
        net.msg_particles(1.0, [[0.0, 0.0, 0.0], [1.0, 1.0, 0.5]], 3),
        net.msg_path(2.0, [(0.0, 0.0), (0.5, 0.5)]),
        net.msg_goal_event(3.0, "goal_dispatched", origin="auto-forward",
                           target=[1.0, 2.0, 0.0], cell_cost=0),
        net.msg_goal_event(3.5, "recovery_entered", cause="no_path"),
        net.msg_nav_state(4.0, "default_forward", Goal()),
        net.msg_nav_state(4.1, "recovery", None),
        net.msg_bars(5.0, [0.7, 0.3], 0.9),
        net.msg_clear_event(6.0),
        net.msg_metrics(7.0, {"collisions": 2, "path_length": 13.5}),
        net.msg_command(8.0, "left", "manual"),
    ]


def test_telemetry_messages_validate(validator):
    for msg in sample_messages():
        validator.validate(msg)
        assert msg["v"] == 1


def test_telemetry_schema_rejects_junk(validator):
    bad = [
        {"v": 1, "type": "pose", "stamp": 1.0},          # missing fields
        {"v": 2, "type": "clear_event", "stamp": 1.0},   # wrong version
        {"v": 1, "type": "teleport", "stamp": 1.0},      # unknown type
        net.msg_bars(1.0, [0.7, 0.3], 0.9) | {"extra": 1},
    ]
    for msg in bad:
        with pytest.raises(jsonschema.ValidationError):
            validator.validate(msg)


def test_pose_message_golden_json():
    msg = net.msg_pose(1.5, 0.25, -1.0, 3.0)
    text = json.dumps(msg, sort_keys=True)
    assert text == ('{"stamp": 1.5, "theta": 3.0, "type": "pose", '
                    '"v": 1, "x": 0.25, "y": -1.0}')


def test_command_message_validates_enums():
    with pytest.raises(BadEnum):
        net.msg_command(0.0, "up")
    with pytest.raises(BadEnum):
        net.msg_command(0.0, "left", source="console")
