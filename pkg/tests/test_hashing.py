"""Hash family unit tests with brute-force oracles."""

import math

import numpy as np
import pytest

from slide.hashing import (
    DophFamily,
    DwtaFamily,
    HashFamilyConfig,
    SimHashFamily,
    WtaFamily,
    _mix,
    new_hash_family,
    pack_subcodes,
    simhash_codes,
    wta_codes,
)
from slide.sparse import SparseVector


def cfg(family, k=2, l=3, dim=16, **kw):
    return HashFamilyConfig(family=family, k_per_table=k, num_tables=l, dim=dim, **kw)


def rand_sparse(rng, dim, nnz):
    idx = np.sort(rng.choice(dim, size=nnz, replace=False))
    vals = rng.standard_normal(nnz)
    vals[vals == 0] = 1.0
    return SparseVector(idx, vals, dim)


# --- oracles -------------------------------------------------------------


def wta_oracle(family, dense):
    """Per-bin argmax by direct scan of each permutation, ties to lowest offset."""
    codes = []
    for i in range(family.n_codes):
        p, b = divmod(i, family.bins_per_perm)
        lo = b * family.bin_size
        hi = min(lo + family.bin_size, family.dim)
        vals = dense[family.perms[p][lo:hi]]
        codes.append(int(np.argmax(vals)))
    return np.array(codes, dtype=np.int64)


def dwta_oracle(family, v):
    """Brute-force densified winner-take-all over the materialized permutations."""
    dense = v.to_dense()
    support = set(v.indices.tolist())
    codes = np.zeros(family.n_codes, dtype=np.int64)
    occupied = np.zeros(family.n_codes, dtype=bool)
    for i in range(family.n_codes):
        p, b = divmod(i, family.bins_per_perm)
        lo = b * family.bin_size
        hi = min(lo + family.bin_size, family.dim)
        dims = family.perms[p][lo:hi]
        entries = [(dense[d], -off) for off, d in enumerate(dims) if int(d) in support]
        if entries:
            val, noff = max(entries)
            codes[i] = -noff
            occupied[i] = True
    for g in range(family.n_codes):
        if not occupied[g]:
            code = 0
            for attempt in range(1, 101):
                donor = _mix(family._densify_salt, g, attempt) % family.n_codes
                if occupied[donor]:
                    code = codes[donor]
                    break
            codes[g] = code
    return codes


def doph_oracle(family, support):
    """Min position per permutation bin over a binary support set."""
    codes = np.zeros(family.n_codes, dtype=np.int64)
    occupied = np.zeros(family.n_codes, dtype=bool)
    for i in support:
        pos = int(family.inv_perm[i])
        b = pos // family.bin_size
        off = pos - b * family.bin_size
        if not occupied[b] or off < codes[b]:
            codes[b] = off
            occupied[b] = True
    for g in range(family.n_codes):
        if not occupied[g]:
            code = 0
            for attempt in range(1, 101):
                donor = _mix(family._densify_salt, g, attempt) % family.n_codes
                if occupied[donor]:
                    code = codes[donor]
                    break
            codes[g] = code
    return codes


def pack(family, codes):
    return pack_subcodes(codes.reshape(family.l, family.k), family.bits_per_code)


# --- construction --------------------------------------------------------


class TestConstruction:
    @pytest.mark.parametrize("family", ["simhash", "wta", "dwta", "doph"])
    def test_equal_configs_hash_identically(self, family):
        c = cfg(family, dim=24, seed=7, wta_bin_size=4)
        v = rand_sparse(np.random.default_rng(0), 24, 10)
        a = new_hash_family(c).hash(v)
        b = new_hash_family(c).hash(v)
        np.testing.assert_array_equal(a, b)
        assert len(a) == c.num_tables

    def test_simhash_sparsity_third_stores_exact_count(self):
        fam = new_hash_family(cfg("simhash", k=2, l=5, dim=9, simhash_sparsity=1 / 3))
        assert fam.proj_indices.shape == (10, 3)
        for row in fam.proj_indices:
            assert len(set(row.tolist())) == 3

    def test_dwta_permutation_count_rounds_up(self):
        # K*L*m/d = 3*2*3/10 = 1.8 -> 2 permutations
        fam = new_hash_family(cfg("dwta", k=3, l=2, dim=10, wta_bin_size=3))
        assert fam.n_perms == math.ceil(3 * 2 * 3 / 10)
        assert fam.n_perms * fam.bins_per_perm >= fam.n_codes

    @pytest.mark.parametrize(
        "bad",
        [
            dict(k=0),
            dict(l=0),
            dict(dim=0),
            dict(family="nope"),
        ],
    )
    def test_invalid_basic_config_rejected(self, bad):
        base = dict(family="simhash", k=2, l=2, dim=8)
        base.update(bad)
        with pytest.raises(ValueError):
            new_hash_family(cfg(**base))

    @pytest.mark.parametrize("sparsity", [0.0, 1.5, -0.2])
    def test_invalid_sparsity_rejected(self, sparsity):
        with pytest.raises(ValueError):
            new_hash_family(cfg("simhash", simhash_sparsity=sparsity))

    def test_bin_size_larger_than_dim_rejected(self):
        with pytest.raises(ValueError):
            new_hash_family(cfg("dwta", dim=8, wta_bin_size=9))

    def test_key_overflowing_64_bits_rejected(self):
        with pytest.raises(ValueError, match="63"):
            new_hash_family(cfg("simhash", k=64, l=1, dim=128))
        with pytest.raises(ValueError, match="63"):
            new_hash_family(cfg("dwta", k=8, l=1, dim=4096, wta_bin_size=512))


# --- simhash -------------------------------------------------------------


class TestSimHash:
    def test_zero_vector_gives_all_zero_keys(self):
        fam = new_hash_family(cfg("simhash", dim=12))
        v = SparseVector(np.empty(0, np.int64), np.empty(0), 12)
        np.testing.assert_array_equal(fam.hash(v), np.zeros(3, dtype=np.int64))

    def test_positive_scaling_invariance(self):
        fam = new_hash_family(cfg("simhash", dim=20, seed=3))
        v = rand_sparse(np.random.default_rng(1), 20, 8)
        np.testing.assert_array_equal(fam.hash(v), fam.hash(v.scaled(2.0)))

    def test_basis_vector_key_matches_stored_signs(self):
        fam = new_hash_family(cfg("simhash", k=4, l=2, dim=6, simhash_sparsity=1.0, seed=11))
        v = SparseVector.from_dense(np.eye(6)[0])
        expected = []
        for t in range(fam.l):
            key = 0
            for j in range(fam.k):
                p = t * fam.k + j
                entries = dict(zip(fam.proj_indices[p].tolist(), fam.proj_signs[p].tolist()))
                if entries.get(0, 0.0) > 0:
                    key |= 1 << j
            expected.append(key)
        np.testing.assert_array_equal(fam.hash(v), np.array(expected, dtype=np.int64))

    def test_batch_matches_single(self):
        fam = new_hash_family(cfg("simhash", k=5, l=4, dim=30, seed=2))
        rng = np.random.default_rng(5)
        w = rng.standard_normal((12, 30))
        batch = fam.hash_batch(w)
        for i in range(12):
            np.testing.assert_array_equal(batch[i], fam.hash(SparseVector.from_dense(w[i])))

    def test_dispatch_rejects_wrong_family(self):
        fam = new_hash_family(cfg("wta", dim=12, wta_bin_size=3))
        v = rand_sparse(np.random.default_rng(0), 12, 4)
        with pytest.raises(TypeError):
            simhash_codes(fam, v)

    def test_dimension_mismatch(self):
        fam = new_hash_family(cfg("simhash", dim=12))
        with pytest.raises(ValueError, match="dim"):
            fam.hash(rand_sparse(np.random.default_rng(0), 13, 4))


# --- wta / dwta ----------------------------------------------------------


class TestWta:
    def test_constant_vector_codes_all_zero(self):
        fam = new_hash_family(cfg("wta", k=2, l=2, dim=12, wta_bin_size=4))
        v = SparseVector.from_dense(np.ones(12))
        codes = fam.hash(v)
        np.testing.assert_array_equal(codes, np.zeros(2, dtype=np.int64))

    def test_matches_brute_force_oracle(self):
        fam = new_hash_family(cfg("wta", k=3, l=2, dim=12, wta_bin_size=4, seed=9))
        rng = np.random.default_rng(42)
        for _ in range(20):
            dense = rng.standard_normal(12)
            expected = pack(fam, wta_oracle(fam, dense))
            np.testing.assert_array_equal(fam.hash(SparseVector.from_dense(dense)), expected)

    def test_ragged_final_bin(self):
        # dim=10, m=4: bins of size 4,4,2 per permutation
        fam = new_hash_family(cfg("wta", k=2, l=3, dim=10, wta_bin_size=4, seed=1))
        rng = np.random.default_rng(0)
        dense = rng.standard_normal(10)
        expected = pack(fam, wta_oracle(fam, dense))
        np.testing.assert_array_equal(fam.hash(SparseVector.from_dense(dense)), expected)


class TestDwta:
    def test_decreasing_values_identity_permutation(self):
        fam = new_hash_family(cfg("dwta", k=2, l=2, dim=12, wta_bin_size=3))
        ident = np.tile(np.arange(12), (fam.n_perms, 1))
        fam.perms = ident
        fam.inv_perms = ident
        v = SparseVector.from_dense(np.arange(12, 0, -1, dtype=float))
        np.testing.assert_array_equal(fam.hash(v), np.zeros(2, dtype=np.int64))

    def test_sparse_matches_densified_oracle(self):
        fam = new_hash_family(cfg("dwta", k=2, l=1, dim=9, wta_bin_size=3, seed=5))
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rand_sparse(rng, 9, int(rng.integers(1, 5)))
            np.testing.assert_array_equal(fam.hash(v), pack(fam, dwta_oracle(fam, v)))

    def test_single_occupied_bin_feeds_all_codes(self):
        fam = new_hash_family(cfg("dwta", k=2, l=2, dim=16, wta_bin_size=4, seed=3))
        # one nonzero -> exactly one (perm, bin) entry occupied per permutation;
        # choose a vector with a single nonzero dimension
        v = SparseVector(np.array([5]), np.array([2.0]), 16)
        codes = fam.hash(v)
        np.testing.assert_array_equal(codes, pack(fam, dwta_oracle(fam, v)))

    def test_dense_input_equals_wta(self):
        c_w = cfg("wta", k=3, l=2, dim=12, wta_bin_size=4, seed=13)
        c_d = cfg("dwta", k=3, l=2, dim=12, wta_bin_size=4, seed=13)
        wta, dwta = new_hash_family(c_w), new_hash_family(c_d)
        rng = np.random.default_rng(3)
        for _ in range(20):
            dense = rng.standard_normal(12)
            dense[dense == 0] = 0.5
            v = SparseVector.from_dense(dense)
            np.testing.assert_array_equal(wta_codes(wta, v), dwta.hash(v))

    def test_monotone_transform_invariance(self):
        fam = new_hash_family(cfg("dwta", k=2, l=3, dim=20, wta_bin_size=5, seed=21))
        famw = new_hash_family(cfg("wta", k=2, l=3, dim=20, wta_bin_size=5, seed=21))
        rng = np.random.default_rng(17)
        for _ in range(20):
            v = rand_sparse(rng, 20, 9)
            t = SparseVector(v.indices, np.exp(v.values), 20)
            np.testing.assert_array_equal(fam.hash(v), fam.hash(t))
            dense = rng.standard_normal(20)
            a = famw.hash(SparseVector.from_dense(dense))
            b = famw.hash(SparseVector.from_dense(np.exp(dense)))
            np.testing.assert_array_equal(a, b)


# --- doph ----------------------------------------------------------------


class TestDoph:
    def test_binarize_keeps_all_when_k_saturates(self):
        fam = new_hash_family(cfg("doph", k=2, l=2, dim=10, doph_top_k=3))
        v = SparseVector(np.array([1, 4, 7]), np.array([0.5, -0.2, 3.0]), 10)
        np.testing.assert_array_equal(fam.binarize(v), [1, 4, 7])

    def test_binarize_top2_by_value(self):
        fam = new_hash_family(cfg("doph", k=2, l=2, dim=5, doph_top_k=2))
        v = SparseVector.from_dense(np.array([5.0, 4.0, 3.0, 2.0, 1.0]))
        np.testing.assert_array_equal(fam.binarize(v), [0, 1])

    def test_matches_min_over_permutation_oracle(self):
        fam = new_hash_family(cfg("doph", k=2, l=2, dim=20, doph_top_k=20, seed=2))
        assert fam.n_codes == 4
        rng = np.random.default_rng(11)
        for _ in range(50):
            nnz = int(rng.integers(1, 8))
            support = np.sort(rng.choice(20, size=nnz, replace=False))
            v = SparseVector(support, np.ones(nnz), 20)
            expected = pack_subcodes(
                doph_oracle(fam, support.tolist()).reshape(fam.l, fam.k),
                fam.bits_per_code,
            )
            np.testing.assert_array_equal(fam.hash(v), expected)


# --- statistical invariants ---------------------------------------------


def unit_pair_at_angle(dim, theta):
    """Two unit vectors at an exact angle, with spread-out coordinates."""
    u = np.ones(dim) / math.sqrt(dim)
    w = np.tile([1.0, -1.0], dim // 2) / math.sqrt(dim)  # orthogonal to u
    y = math.cos(theta) * u + math.sin(theta) * w
    return SparseVector.from_dense(u), SparseVector.from_dense(y)


class TestCollisionStatistics:
    @pytest.mark.parametrize("theta", [0.0, math.pi / 3, math.pi / 2])
    def test_single_bit_collision_rate(self, theta):
        dim = 256
        va, vb = unit_pair_at_angle(dim, theta)
        hits = 0
        trials = 10_000
        for t in range(trials):
            fam = SimHashFamily(cfg("simhash", k=1, l=1, dim=dim, simhash_sparsity=1.0, seed=t))
            hits += int(fam.hash(va)[0] == fam.hash(vb)[0])
        assert abs(hits / trials - (1 - theta / math.pi)) < 0.02

    def test_bucket_key_collision_monotone_in_cosine(self):
        dim = 64
        q, x = unit_pair_at_angle(dim, math.pi / 6)  # cos = 0.866
        _, y = unit_pair_at_angle(dim, math.pi / 3)  # cos = 0.5
        hits_x = hits_y = 0
        for s in range(1000):
            fam = SimHashFamily(cfg("simhash", k=4, l=1, dim=dim, simhash_sparsity=1.0, seed=s))
            kq, kx, ky = fam.hash(q)[0], fam.hash(x)[0], fam.hash(y)[0]
            hits_x += int(kq == kx)
            hits_y += int(kq == ky)
        assert hits_x > hits_y


class TestKeyPacking:
    def test_injective_over_subcode_tuples(self):
        rng = np.random.default_rng(0)
        tuples = {tuple(rng.integers(0, 8, size=5)) for _ in range(500)}
        keys = {int(pack_subcodes(np.array(t), 3)) for t in tuples}
        assert len(keys) == len(tuples)
