import numpy as np
import pytest

from rephop.encoding import (
    N_AA,
    N_FEATURES,
    EncodedBag,
    TokenBag,
    abundance_scale,
    encode_repertoire,
    encode_sequence,
    normalize_repertoire,
    pad_batch,
    pad_sequences,
    positional_features,
    unpad_batch,
)
from rephop.repertoire import ALPHABET, Repertoire, Sequence


def two_pass_variance(values):
    values = np.concatenate([np.ravel(v) for v in values])
    mean = sum(values) / len(values)
    return sum((v - mean) ** 2 for v in values) / len(values)


def random_residues(rng, n, lo=3, hi=12):
    return ["".join(rng.choice(list(ALPHABET), rng.integers(lo, hi))) for _ in range(n)]


class TestPositionalFeatures:
    def test_examples(self):
        pos = positional_features(5)
        np.testing.assert_allclose(pos[0], [1, 0, 0])
        np.testing.assert_allclose(pos[2], [0, 1, 0])
        np.testing.assert_allclose(pos[1], [0.5, 0.5, 0])
        np.testing.assert_allclose(pos[4], [0, 0, 1])

    def test_single_position_is_center(self):
        np.testing.assert_allclose(positional_features(1), [[0, 1, 0]])

    @pytest.mark.parametrize("length", [1, 2, 3, 4, 7, 15, 30])
    def test_rows_nonnegative_and_sum_to_one(self, length):
        pos = positional_features(length)
        assert pos.shape == (length, 3)
        assert (pos >= 0).all() and (pos <= 1).all()
        np.testing.assert_allclose(pos.sum(axis=1), 1.0, atol=1e-15)

    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            positional_features(0)


class TestEncodeSequence:
    def test_single_residue(self):
        x = encode_sequence("A")
        assert x.shape == (1, N_FEATURES)
        assert x[0, 0] == 1 and x[0, 1:N_AA].sum() == 0
        np.testing.assert_allclose(x[0, N_AA:], [0, 1, 0])

    def test_one_hot_columns_follow_alphabet(self):
        x = encode_sequence(ALPHABET)
        np.testing.assert_array_equal(x[:, :N_AA], np.eye(N_AA))

    def test_unit_abundance_zeroes_one_hot(self):
        x = encode_sequence(Sequence("CASSL", 1), use_abundance=True)
        assert np.all(x[:, :N_AA] == 0)
        np.testing.assert_allclose(x[:, N_AA:].sum(axis=1), 1.0)

    def test_log_abundance(self):
        # integer abundance nearest e^2; check against its own log
        x = encode_sequence(Sequence("ACD", 7), use_abundance=True)
        np.testing.assert_allclose(x[:, :N_AA].max(axis=1), np.log(7))
        assert abundance_scale(np.exp(2.0)) == pytest.approx(2.0)

    def test_abundance_modes(self):
        assert abundance_scale(3, "log1p") == pytest.approx(np.log(4))
        assert abundance_scale(3, "none") == 1.0
        with pytest.raises(ValueError):
            abundance_scale(3, "sqrt")

    def test_invalid_character(self):
        with pytest.raises(ValueError):
            encode_sequence("ACXB")

    def test_injective_for_fixed_length(self):
        rng = np.random.default_rng(0)
        seqs = {"".join(rng.choice(list(ALPHABET), 6)) for _ in range(200)}
        mats = {encode_sequence(s).tobytes() for s in seqs}
        assert len(mats) == len(seqs)


class TestNormalize:
    def test_unit_variance_unchanged(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal((40, 23))
        v /= v.std()
        out = normalize_repertoire([v[:10], v[10:]])
        np.testing.assert_allclose(np.concatenate(out), v, atol=1e-12)

    def test_zero_bag_unchanged(self):
        bag = [np.zeros((3, 23)), np.zeros((5, 23))]
        out = normalize_repertoire(bag)
        assert all(np.all(o == 0) for o in out)

    def test_random_bag_against_two_pass(self):
        rng = np.random.default_rng(2)
        bag = [encode_sequence(s) for s in random_residues(rng, 15)]
        out = normalize_repertoire(bag)
        assert two_pass_variance(out) == pytest.approx(1.0, abs=1e-9)

    def test_no_centering(self):
        bag = [encode_sequence("CASS")]
        out = normalize_repertoire(bag)
        ratio = out[0][bag[0] != 0] / bag[0][bag[0] != 0]
        np.testing.assert_allclose(ratio, ratio[0])
        assert np.all(out[0][bag[0] == 0] == 0)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        bag = [encode_sequence(s) for s in random_residues(rng, 8)]
        once = normalize_repertoire(bag)
        twice = normalize_repertoire(once)
        for a, b in zip(once, twice):
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_empty_bag(self):
        with pytest.raises(ValueError):
            normalize_repertoire([])


class TestPadding:
    def test_single_sequence_identity(self):
        s = encode_sequence("CASSL")
        x, mask = pad_sequences([s])
        np.testing.assert_array_equal(x[0], s)
        assert mask.all()

    def test_lengths_three_and_five(self):
        x, mask = pad_sequences([encode_sequence("ACD"), encode_sequence("ACDEF")])
        assert x.shape == (2, 5, 23)
        assert np.all(x[0, 3:] == 0)
        np.testing.assert_array_equal(mask[0], [True, True, True, False, False])
        assert mask[1].all()

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        bags = [[encode_sequence(s) for s in random_residues(rng, int(rng.integers(1, 6)))] for _ in range(4)]
        x, mask = pad_batch(bags)
        back = unpad_batch(x, mask)
        assert len(back) == len(bags)
        for orig, rec in zip(bags, back):
            assert len(orig) == len(rec)
            for a, b in zip(orig, rec):
                np.testing.assert_array_equal(a, b)

    def test_pad_too_short(self):
        with pytest.raises(ValueError):
            pad_sequences([encode_sequence("ACDE")], length=2)


class TestTokenBag:
    @pytest.mark.parametrize("use_abundance,mode", [(False, "log"), (True, "log"), (True, "log1p")])
    def test_dense_matches_reference_encoding(self, use_abundance, mode):
        rng = np.random.default_rng(5)
        seqs = [Sequence(s, int(rng.integers(1, 20))) for s in random_residues(rng, 12)]
        rep = Repertoire("r", seqs, 1)
        ref = encode_repertoire(rep, use_abundance, mode)
        bag = TokenBag.from_repertoire(rep, use_abundance, mode).dense()
        assert isinstance(bag, EncodedBag)
        for i, r in enumerate(ref):
            np.testing.assert_allclose(bag.x[i, : len(r)], r, atol=1e-12)
            assert np.all(bag.x[i, len(r):] == 0)
            assert bag.mask[i].sum() == len(r)

    def test_dense_subset_keeps_global_scale(self):
        rng = np.random.default_rng(6)
        rep = Repertoire("r", [Sequence(s) for s in random_residues(rng, 10)], 0)
        tb = TokenBag.from_repertoire(rep)
        full = tb.dense()
        sub = tb.dense([7, 2])
        for j, i in enumerate([7, 2]):
            n = tb.lengths[i]
            np.testing.assert_allclose(sub.x[j, :n], full.x[i, :n])
