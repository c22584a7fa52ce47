import json
import stat

import pytest

from lingtrove.consent import (
    EncryptedObject,
    EncryptedRoot,
    SessionKey,
    contribute,
    create_identity,
    decrypt,
    decrypt_clip,
    encrypt,
    generate_session_key,
    is_encrypted_root,
    load_encrypted,
    load_identity,
    open_encrypted_root,
    open_identity,
    roll_key,
    store_encrypted,
)
from lingtrove.datamodel import LanguageIndex, decode
from lingtrove.errors import (
    ConsentError,
    DecodeError,
    IntegrityError,
    NotFoundError,
    WrongKeyError,
)
from lingtrove.wordlist import EVEN_WORDS, ODD_WORDS, words_for_fingerprint

from conftest import put_clip
from mp3gen import clip_of_seconds

# frozen from an independent SHA-1 reference run
SHA1_OF_32_ZEROS = "de8a847bff8c343d69b853a215e6ee775ef2ef96"


class TestSessionKeys:
    def test_fingerprint_of_zero_key(self):
        key = SessionKey(key=bytes(32))
        assert key.fingerprint == SHA1_OF_32_ZEROS

    def test_fingerprint_shape(self):
        key = generate_session_key()
        assert len(key.fingerprint) == 40
        assert set(key.fingerprint) <= set("0123456789abcdef")

    def test_generated_keys_differ(self):
        assert generate_session_key().fingerprint != generate_session_key().fingerprint

    def test_wrong_size_rejected(self):
        with pytest.raises(ValueError):
            SessionKey(key=b"short")

    def test_jwk_round_trip(self):
        key = generate_session_key()
        jwk = key.to_jwk()
        assert jwk["kty"] == "oct" and jwk["alg"] == "A256GCM"
        assert "=" not in jwk["k"]
        assert SessionKey.from_jwk(jwk) == key

    def test_bad_jwk_rejected(self):
        with pytest.raises(DecodeError):
            SessionKey.from_jwk({"kty": "RSA"})


class TestWordlist:
    def test_zero_byte_even_position(self):
        assert words_for_fingerprint("00" + "11" * 19)[0] == "aardvark"

    def test_zero_byte_odd_position(self):
        assert words_for_fingerprint("1100" + "11" * 18)[1] == "adroitness"

    def test_alternates_lists(self):
        words = words_for_fingerprint("00" * 20)
        assert words == ["aardvark", "adroitness"] * 10

    def test_last_entries(self):
        words = words_for_fingerprint("ff" * 20)
        assert words[0] == EVEN_WORDS[255] == "Zulu"
        assert words[1] == ODD_WORDS[255] == "Yucatan"

    def test_deterministic(self):
        fpr = generate_session_key().fingerprint
        assert words_for_fingerprint(fpr) == words_for_fingerprint(fpr)

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            words_for_fingerprint("abc")
        with pytest.raises(ValueError):
            words_for_fingerprint("zz" * 20)

    def test_tables_complete(self):
        assert len(set(EVEN_WORDS)) == 256
        assert len(set(ODD_WORDS)) == 256


class TestEncryptDecrypt:
    def test_round_trip(self):
        key = generate_session_key()
        for plaintext in (b"", b"x", b"clip bytes" * 100):
            assert decrypt(key, encrypt(key, plaintext)) == plaintext

    def test_fresh_iv_every_time(self):
        key = generate_session_key()
        seen = set()
        for _ in range(200):
            obj = encrypt(key, b"same plaintext")
            assert (obj.keyfpr, obj.iv) not in seen
            seen.add((obj.keyfpr, obj.iv))

    def test_same_plaintext_different_cids(self, store):
        key = generate_session_key()
        a = store_encrypted(store, encrypt(key, b"clip"))
        b = store_encrypted(store, encrypt(key, b"clip"))
        assert a != b

    def test_tampered_ciphertext_fails(self):
        key = generate_session_key()
        obj = encrypt(key, b"attack at dawn")
        for index in (0, len(obj.encdata) - 1):
            raw = bytearray(obj.encdata)
            raw[index] ^= 0x01
            bad = EncryptedObject(keyfpr=obj.keyfpr, iv=obj.iv, encdata=bytes(raw))
            with pytest.raises(IntegrityError):
                decrypt(key, bad)

    def test_tampered_iv_fails(self):
        key = generate_session_key()
        obj = encrypt(key, b"attack at dawn")
        raw = bytearray(obj.iv)
        raw[0] ^= 0x01
        with pytest.raises(IntegrityError):
            decrypt(key, EncryptedObject(keyfpr=obj.keyfpr, iv=bytes(raw),
                                         encdata=obj.encdata))

    def test_wrong_key_detected_before_decrypting(self):
        a, b = generate_session_key(), generate_session_key()
        obj = encrypt(a, b"secret")
        with pytest.raises(WrongKeyError):
            decrypt(b, obj)

    def test_wire_shape(self, store):
        key = generate_session_key()
        cid = store_encrypted(store, encrypt(key, b"payload"))
        obj = json.loads(store.get(cid))
        assert obj["alg"] == {"length": 256, "name": "AES-GCM"}
        assert set(obj) == {"alg", "encdata", "iv", "keyfpr"}
        assert decrypt(key, load_encrypted(store, cid)) == b"payload"


class TestEncryptedRoot:
    def test_round_trip_with_published_key(self):
        key = generate_session_key()
        fpr = key.fingerprint
        cid = "Qm" + "a" * 44
        root = EncryptedRoot(sessions={fpr: cid}, keys={fpr: key})
        obj = root.to_jsonable()
        assert obj[fpr] == cid and obj["keys"][fpr]["kty"] == "oct"
        back = EncryptedRoot.from_jsonable(obj)
        assert back.sessions == root.sessions
        assert back.keys[fpr] == key

    def test_key_without_session_rejected(self):
        key = generate_session_key()
        with pytest.raises(DecodeError):
            EncryptedRoot(sessions={}, keys={key.fingerprint: key})

    def test_detection(self):
        fpr = generate_session_key().fingerprint
        assert is_encrypted_root({fpr: "Qmx"})
        assert is_encrypted_root({"keys": {}, fpr: "Qmx"})
        assert not is_encrypted_root({"br": {"cids": [], "meta": "Qmx"}})
        assert not is_encrypted_root({})


@pytest.fixture
def identity(tmp_path):
    return create_identity(tmp_path / "store")


def make_contribution(store, identity, registry, text="Me a gar ar mor.",
                      seconds=4.8, fpr=None):
    clip = put_clip(store, text, seconds)  # reuse its sentence + meta blocks
    key = identity.session_keys[fpr or identity.active]
    return contribute(identity, key, "br", clip_of_seconds(seconds),
                      clip.sentence_cid, clip.meta_cid, store, registry)


class TestIdentity:
    def test_create_and_load(self, tmp_path):
        identity = create_identity(tmp_path / "store")
        loaded = load_identity(tmp_path / "store", identity.name)
        assert loaded.name == identity.name
        assert loaded.active == identity.active
        assert loaded.session_keys == identity.session_keys

    def test_keystore_is_private(self, identity):
        mode = stat.S_IMODE((identity.directory / "keystore.json").stat().st_mode)
        assert mode == 0o600
        mode = stat.S_IMODE((identity.directory / "name.key").stat().st_mode)
        assert mode == 0o600

    def test_load_missing(self, tmp_path):
        with pytest.raises(NotFoundError):
            load_identity(tmp_path / "store", "f" * 64)

    def test_roll_keeps_prior_keys(self, identity):
        first = identity.active
        key = roll_key(identity)
        assert identity.active == key.fingerprint != first
        assert first in identity.session_keys


class TestContribute:
    def test_first_contribution(self, store, identity, registry):
        root_cid = make_contribution(store, identity, registry)
        assert registry.resolve(identity.name) == root_cid
        root = EncryptedRoot.from_jsonable(json.loads(store.get(root_cid)))
        fpr = identity.active
        assert set(root.sessions) == {fpr}
        assert set(root.keys) == {fpr}
        opened = open_identity(store, registry, identity.name)
        assert opened.encrypted
        (view,) = opened.sessions
        assert view.status == "open"
        assert len(view.clips["br"]) == 1

    def test_second_contribution_appends(self, store, identity, registry):
        first_cid = make_contribution(store, identity, registry)
        second_cid = make_contribution(store, identity, registry,
                                       text="An heol a bar war ar menez.")
        assert first_cid != second_cid
        opened = open_identity(store, registry, identity.name)
        (view,) = opened.sessions
        assert len(view.clips["br"]) == 2

    def test_roll_then_contribute(self, store, identity, registry):
        old_fpr = identity.active
        make_contribution(store, identity, registry)
        roll_key(identity)
        make_contribution(store, identity, registry, text="An heol a bar.")
        root = EncryptedRoot.from_jsonable(
            json.loads(store.get(registry.resolve(identity.name))))
        assert set(root.keys) == set(root.sessions) == {old_fpr, identity.active}
        opened = open_identity(store, registry, identity.name)
        by_fpr = {v.fingerprint: v for v in opened.sessions}
        assert len(by_fpr[old_fpr].clips["br"]) == 1
        assert len(by_fpr[identity.active].clips["br"]) == 1

    def test_clip_audio_decrypts(self, store, identity, registry):
        make_contribution(store, identity, registry, seconds=2.4)
        opened = open_identity(store, registry, identity.name)
        key = identity.session_keys[identity.active]
        (view,) = opened.sessions
        audio = decrypt_clip(store, key, view.clips["br"][0])
        assert audio == clip_of_seconds(2.4)

    def test_clip_list_is_wrapped_not_plaintext(self, store, identity, registry):
        make_contribution(store, identity, registry)
        root = EncryptedRoot.from_jsonable(
            json.loads(store.get(registry.resolve(identity.name))))
        inner = json.loads(store.get(root.sessions[identity.active]))
        enc_list_cid = inner["br"]["cids"][0]
        wrapped = json.loads(store.get(enc_list_cid))
        assert wrapped["alg"]["name"] == "AES-GCM"
        key = identity.session_keys[identity.active]
        clips = decode(decrypt(key, load_encrypted(store, enc_list_cid)), LanguageIndex)
        assert len(clips.clips) == 1


class TestRevoke:
    def test_revoke_only_session(self, store, identity, registry):
        from lingtrove.consent import revoke

        make_contribution(store, identity, registry)
        fpr = identity.active
        revoke_root = revoke(identity, fpr, store, registry)
        root = EncryptedRoot.from_jsonable(json.loads(store.get(revoke_root)))
        assert set(root.sessions) == {fpr}
        assert root.keys == {}
        assert fpr not in identity.session_keys  # local copy destroyed
        assert load_identity(store.root, identity.name).session_keys == {}

    def test_revoke_one_of_two(self, store, identity, registry):
        from lingtrove.consent import revoke

        fpr1 = identity.active
        make_contribution(store, identity, registry)
        roll_key(identity)
        fpr2 = identity.active
        make_contribution(store, identity, registry, text="An heol a bar.")
        revoke(identity, fpr1, store, registry)
        opened = open_identity(store, registry, identity.name)
        status = {v.fingerprint: v.status for v in opened.sessions}
        assert status == {fpr1: "opaque", fpr2: "open"}

    def test_revoke_twice_errors(self, store, identity, registry):
        from lingtrove.consent import revoke

        fpr = identity.active
        make_contribution(store, identity, registry)
        revoke(identity, fpr, store, registry)
        with pytest.raises(ConsentError):
            revoke(identity, fpr, store, registry)

    def test_revoke_unknown_fingerprint(self, store, identity, registry):
        from lingtrove.consent import revoke

        make_contribution(store, identity, registry)
        with pytest.raises(ConsentError):
            revoke(identity, "ab" * 20, store, registry)

    def test_cached_key_still_decrypts(self, store, identity, registry):
        from lingtrove.consent import revoke

        fpr = identity.active
        cached_key = identity.session_keys[fpr]  # consumer stored this earlier
        make_contribution(store, identity, registry)
        cached_root = registry.resolve(identity.name)
        revoke(identity, fpr, store, registry)
        # via the cached root cid
        opened = open_encrypted_root(store, cached_root, extra_keys={fpr: cached_key})
        assert opened.sessions[0].status == "open"
        # and via the live root, which still lists the session
        live = open_identity(store, registry, identity.name,
                             extra_keys={fpr: cached_key})
        assert live.sessions[0].status == "open"
        assert len(live.sessions[0].clips["br"]) == 1


class TestOpenIdentity:
    def test_never_published(self, store, registry):
        with pytest.raises(NotFoundError):
            open_identity(store, registry, "a" * 64)

    def test_classic_root_detected(self, store, registry, tmp_path):
        from lingtrove.cas import NameKey
        from conftest import make_root

        root_cid, _ = make_root(store, [("Me a gar ar mor.", 4.8)])
        key = NameKey.generate()
        registry.publish(key, root_cid)
        opened = open_identity(store, registry, key.name)
        assert not opened.encrypted
        assert "br" in opened.classic_root.entries

    def test_corrupt_session_isolated(self, store, identity, registry):
        fpr1 = identity.active
        make_contribution(store, identity, registry)
        roll_key(identity)
        fpr2 = identity.active
        make_contribution(store, identity, registry, text="An heol a bar.")
        # corrupt session 2's encrypted list in place
        root = EncryptedRoot.from_jsonable(
            json.loads(store.get(registry.resolve(identity.name))))
        inner = json.loads(store.get(root.sessions[fpr2]))
        enc_cid = inner["br"]["cids"][0]
        blob = json.loads(store.get(enc_cid))
        blob["encdata"] = blob["encdata"][:-4] + "AAA="
        (store.blocks / enc_cid).write_bytes(json.dumps(blob).encode())
        opened = open_identity(store, registry, identity.name)
        status = {v.fingerprint: v.status for v in opened.sessions}
        assert status[fpr1] == "open"
        assert status[fpr2] == "corrupt"


class TestLifecycleInvariants:
    def test_root_cid_changes_on_every_mutation(self, store, identity, registry):
        from lingtrove.consent import revoke

        cids = [make_contribution(store, identity, registry),
                make_contribution(store, identity, registry, text="An heol a bar.")]
        roll_key(identity)
        cids.append(make_contribution(store, identity, registry, text="Deuet eo."))
        cids.append(revoke(identity, identity.active, store, registry))
        assert len(set(cids)) == len(cids)

    def test_keys_subset_of_sessions_always(self, store, identity, registry):
        from lingtrove.consent import revoke

        checkpoints = []
        checkpoints.append(make_contribution(store, identity, registry))
        roll_key(identity)
        checkpoints.append(make_contribution(store, identity, registry, text="An heol."))
        first = next(iter(EncryptedRoot.from_jsonable(
            json.loads(store.get(checkpoints[0]))).sessions))
        checkpoints.append(revoke(identity, first, store, registry))
        for cid in checkpoints:
            root = EncryptedRoot.from_jsonable(json.loads(store.get(cid)))
            assert set(root.keys) <= set(root.sessions)


class TestClassicRootCollision:
    def test_contribute_under_catalogue_identity_is_clear_error(self, store, identity, registry):
        from conftest import make_root

        root_cid, _ = make_root(store, [("Me a gar ar mor.", 4.8)])
        registry.publish(identity.name_key, root_cid)
        with pytest.raises(ConsentError, match="classic root"):
            make_contribution(store, identity, registry)
