import os
import stat

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzkey.errors import BindingError, SealAuthError, StoreCorrupted, StoreError, ValidationError
from fuzzkey.probe import ConditionVector
from fuzzkey.sealstore import (
    SEALED_BYTES,
    SealedSecret,
    SoftwareSealStore,
    condition_digest,
    encode_condition_record,
    init_device_root,
)

from .oracles import reference_kdf as ref

SECRET = bytes(range(32))
DIGEST = bytes(32)


def test_init_is_idempotent_and_private(tmp_path):
    path = tmp_path / "sub" / "root.fzks"
    a = init_device_root(path)
    b = init_device_root(path)
    assert a.root_secret == b.root_secret
    assert stat.S_IMODE(os.stat(path).st_mode) == 0o600
    assert len(path.read_bytes()) == 4 + 1 + 32 + 16
    assert path.read_bytes()[:5] == b"FZKS\x01"


def test_distinct_paths_distinct_roots(tmp_path):
    assert init_device_root(tmp_path / "a").root_secret != init_device_root(tmp_path / "b").root_secret


@pytest.mark.parametrize("offset", [0, 4, 5, 20, 36, 37, 52])
def test_corrupted_store_detected(tmp_path, offset):
    path = tmp_path / "root.fzks"
    init_device_root(path)
    data = bytearray(path.read_bytes())
    data[offset] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(StoreCorrupted):
        init_device_root(path)


def test_truncated_store_detected(tmp_path):
    path = tmp_path / "root.fzks"
    path.write_bytes(b"FZKS\x01")
    with pytest.raises(StoreCorrupted):
        init_device_root(path)


def test_unwritable_location(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StoreError):
        init_device_root(blocker / "root.fzks")


def test_seal_round_trip_and_fresh_nonce(store):
    s1 = store.seal(SECRET, DIGEST)
    s2 = store.seal(SECRET, DIGEST)
    assert s1.nonce != s2.nonce and s1.blob != s2.blob
    assert len(s1.to_bytes()) == SEALED_BYTES
    assert store.unseal(SealedSecret.from_bytes(s1.to_bytes()), DIGEST) == SECRET


def test_binding_mismatch_is_distinct_from_tamper(store):
    sealed = store.seal(SECRET, DIGEST)
    with pytest.raises(BindingError):
        store.unseal(sealed, b"\x01" + DIGEST[1:])
    raw = bytearray(sealed.to_bytes())
    for i in range(len(raw)):
        raw[i] ^= 0x80
        with pytest.raises(SealAuthError):
            store.unseal(SealedSecret.from_bytes(bytes(raw)), DIGEST)
        raw[i] ^= 0x80


def test_other_device_cannot_unseal(store, tmp_path):
    other = SoftwareSealStore.open(tmp_path / "other.fzks")
    with pytest.raises(SealAuthError):
        other.unseal(store.seal(SECRET, DIGEST), DIGEST)


def test_sealed_secret_length_checked():
    with pytest.raises(SealAuthError):
        SealedSecret.from_bytes(bytes(SEALED_BYTES - 1))


def test_seal_input_validation(store):
    with pytest.raises(ValidationError):
        store.seal(SECRET[:31], DIGEST)
    with pytest.raises(ValidationError):
        store.seal(SECRET, DIGEST[:31])


def test_condition_digest_pinned():
    record = encode_condition_record(0.0, 0, 0.0, 0.0)
    assert record == bytes(22)
    # oracle value from the pure-Python SHA-256
    assert ref.sha256(record).hex() == "6a4875ddaceaa91fb3369f0f6d962f77442daf1b1d97733457d12bcabdf79441"
    cv = ConditionVector(25.0, 65, 1000.5)
    assert condition_digest(cv, 0.73) == ref.sha256(encode_condition_record(25.0, 65, 1000.5, 0.73))


@settings(max_examples=30, deadline=None)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_seal_round_trip_property(store, secret, digest):
    assert store.unseal(store.seal(secret, digest), digest) == secret


def test_root_secret_never_in_repr(store):
    root_hex = store._root.root_secret.hex()
    assert root_hex not in repr(store)
    assert root_hex not in repr(store._root)
    assert store.device_tag in repr(store)
