import hashlib
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foggate import crypto
from foggate import ledger as L
from foggate.errors import IntegrityError, InvalidArgumentError, LedgerLoadError
from foggate.ledger import EntryKind, LedgerEntry, Status


@pytest.fixture(scope="module")
def pub(keys):
    return [crypto.public_key_to_bytes(k.public_key) for k in keys]


def chain_of(n_blocks, pub, start=1000):
    chain = L.genesis(start)
    for i in range(1, n_blocks):
        if i % 2:
            chain = chain.register_device(f"dev-{i}", pub[i % len(pub)], Status.ALLOWED, start + i)
        else:
            chain = chain.record_transaction(crypto.one_way_hash(b"%d" % i), start + i)
    return chain


# independent oracle for the documented block encoding


def oracle_block_hash(block):
    out = struct.pack(">Q", block.index) + block.prev_hash + struct.pack(">QI", block.timestamp, len(block.entries))
    for e in block.entries:
        out += struct.pack(">B", e.kind) + e.serial_id_digest + struct.pack(">Q", e.timestamp)
        if e.kind == EntryKind.IDENTITY:
            out += struct.pack(">H", len(e.public_key)) + e.public_key + struct.pack(">B", e.status)
        else:
            out += e.tx_digest
    return hashlib.sha256(out).digest()


def test_block_hash_matches_documented_encoding(pub):
    for block in chain_of(6, pub).blocks:
        assert block.block_hash == oracle_block_hash(block)


def test_file_format_layout(pub):
    chain = chain_of(3, pub)
    data = L.encode_ledger(chain)
    assert data[:4] == b"FGL1"
    pos = 4
    for block in chain.blocks:
        (n,) = struct.unpack(">I", data[pos:pos + 4])
        record = data[pos + 4:pos + 4 + n]
        assert record[-32:] == block.block_hash
        assert hashlib.sha256(record[:-32]).digest() == block.block_hash
        pos += 4 + n
    assert pos == len(data)


def test_genesis():
    g = L.genesis()
    assert len(g) == 1
    assert g.tip.index == 0 and g.tip.prev_hash == bytes(32) and g.tip.entries == ()
    assert L.verify_chain(g).valid
    assert g.lookup("anything") is None


def test_append_block(pub):
    chain = chain_of(3, pub)
    entry = LedgerEntry.identity("x", pub[0], Status.ALLOWED, 5000)
    longer = chain.append_block([entry], 5000)
    assert len(longer) == 4 and longer.tip.index == 3
    assert longer.tip.prev_hash == chain.tip.block_hash
    assert longer.blocks[:3] == chain.blocks
    assert len(chain) == 3
    assert L.verify_chain(longer).valid
    with pytest.raises(InvalidArgumentError):
        chain.append_block([])


def test_register_and_lookup(pub):
    chain = L.genesis().register_device("device-01", pub[0], Status.ALLOWED, 10)
    entry = chain.lookup("device-01")
    assert entry.status is Status.ALLOWED and entry.public_key == pub[0]
    assert entry.serial_id_digest == crypto.one_way_hash(b"device-01")
    assert chain.lookup("device-02") is None


def test_latest_wins(pub):
    chain = L.genesis().register_device("d", pub[0], Status.ALLOWED, 1)
    chain = chain.register_device("other", pub[1], Status.ALLOWED, 2)
    chain = chain.record_transaction(bytes(32), 3)
    chain = chain.register_device("d", pub[2], Status.BLOCKED, 4)
    entry = chain.lookup("d")
    assert entry.status is Status.BLOCKED and entry.public_key == pub[2]
    assert chain.blocks[4].entries[0] is entry


def test_register_rejects_bad_input(pub):
    with pytest.raises(InvalidArgumentError):
        L.genesis().register_device("", pub[0])
    with pytest.raises(InvalidArgumentError):
        L.genesis().register_device("d", b"not a key")


def test_entry_invariants(pub):
    with pytest.raises(InvalidArgumentError):
        LedgerEntry(EntryKind.IDENTITY, bytes(32), 0, public_key=pub[0], status=Status.ALLOWED,
                    tx_digest=bytes(32))
    with pytest.raises(InvalidArgumentError):
        LedgerEntry(EntryKind.TRANSACTION, bytes(32), 0, tx_digest=bytes(31))
    with pytest.raises(InvalidArgumentError):
        LedgerEntry(EntryKind.TRANSACTION, bytes(5), 0, tx_digest=bytes(32))


def test_record_transaction(pub):
    chain = L.genesis(100).record_transaction(b"\x01" * 32, 100)
    chain = chain.record_transaction(b"\x02" * 32, 100)
    assert chain.tip.entries[0].tx_digest == b"\x02" * 32
    assert [b.timestamp for b in chain.blocks] == [100, 100, 100]
    assert L.verify_chain(chain).valid


def test_timestamps_never_decrease(pub):
    chain = L.genesis(500).record_transaction(bytes(32), 400)
    assert chain.tip.timestamp == 500


def test_verify_untouched_ten_blocks(pub):
    assert L.verify_chain(chain_of(10, pub)) == L.IntegrityReport(True, None)


def test_mutated_block_reports_its_index(pub):
    chain = chain_of(10, pub)
    blocks = list(chain.blocks)
    b4 = blocks[4]
    tampered_entry = LedgerEntry.transaction(b"\xee" * 32, b4.entries[0].timestamp)
    blocks[4] = L.Block(b4.index, b4.prev_hash, b4.timestamp, (tampered_entry,), b4.block_hash)
    assert L.verify_chain(L.Ledger(tuple(blocks))) == L.IntegrityReport(False, 4)


def test_splice_out_block(pub):
    chain = chain_of(6, pub)
    spliced = L.Ledger(chain.blocks[:2] + chain.blocks[3:])
    assert L.verify_chain(spliced) == L.IntegrityReport(False, 2)


def test_save_load_round_trip(tmp_path, pub):
    chain = chain_of(5, pub)
    path = tmp_path / "chain.fgl"
    L.save(chain, path)
    assert L.load(path) == chain


def test_load_truncated(tmp_path, pub):
    path = tmp_path / "chain.fgl"
    L.save(chain_of(5, pub), path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(LedgerLoadError):
        L.load(path)
    with pytest.raises(LedgerLoadError):
        L.load(tmp_path / "missing.fgl")


def test_load_flipped_body_byte(tmp_path, pub):
    chain = chain_of(5, pub)
    data = bytearray(L.encode_ledger(chain))
    # first byte of block 3's prev_hash: length prefix, then index:u64
    offset = 4 + sum(4 + len(b.body()) + 32 for b in chain.blocks[:3]) + 4 + 8
    data[offset] ^= 0x01
    path = tmp_path / "chain.fgl"
    path.write_bytes(bytes(data))
    with pytest.raises(IntegrityError) as info:
        L.load(path)
    assert info.value.first_bad_index == 3


def test_every_byte_mutation_detected(pub):
    chain = chain_of(5, pub)
    data = L.encode_ledger(chain)
    rng = random.Random(3)
    for pos in range(len(data)):
        mutated = bytearray(data)
        mutated[pos] ^= rng.randrange(1, 256)
        try:
            loaded = L.decode_ledger(bytes(mutated))
        except LedgerLoadError:
            continue
        assert not L.verify_chain(loaded).valid, pos


def lookup_oracle(ops, serial):
    found = None
    for kind, s, key, status in ops:
        if kind == "reg" and s == serial:
            found = (key, status)
    return found


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["reg", "tx"]), st.sampled_from("abcde"),
                          st.integers(0, 3), st.sampled_from(list(Status))), max_size=20))
def test_lookup_matches_linear_scan(pub, ops):
    chain = L.genesis()
    for i, (kind, s, key, status) in enumerate(ops):
        if kind == "reg":
            chain = chain.register_device(s, pub[key], status, i)
        else:
            chain = chain.record_transaction(crypto.one_way_hash(s.encode()), i)
    for serial in "abcdef":
        expect = lookup_oracle([(k, s, pub[x], st_) for k, s, x, st_ in ops], serial)
        got = chain.lookup(serial)
        assert (got.public_key, got.status) == expect if got else expect is None
    assert L.verify_chain(chain).valid


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_append_only_prefix(pub, n, extra):
    chain = chain_of(n, pub)
    before = L.encode_ledger(chain)
    grown = chain
    for i in range(extra):
        grown = grown.record_transaction(bytes([i]) * 32)
    assert L.encode_ledger(grown).startswith(before)


def test_identities_view(pub):
    chain = L.genesis().register_device("a", pub[0], Status.ALLOWED, 1).register_device("a", pub[0], Status.BLOCKED, 2)
    view = chain.identities()
    assert list(view) == [crypto.one_way_hash(b"a")]
    assert view[crypto.one_way_hash(b"a")].status is Status.BLOCKED
