import numpy as np
import pytest

from gencomm.errors import ConfigurationError, ContractError
from gencomm.ldpc import (export_alist, import_alist, ldpc_decode, ldpc_encode,
                          ldpc_make)


@pytest.fixture(scope="module")
def code():
    return ldpc_make(256, seed=42)


class TestConstruction:
    def test_rate_half(self, code):
        assert code.rate == 0.5
        assert code.k == 128 and code.n == 256

    def test_exactly_regular(self, code):
        assert np.all(code.H.sum(axis=0) == 3)
        assert np.all(code.H.sum(axis=1) == 6)

    def test_deterministic_per_seed(self):
        assert np.array_equal(ldpc_make(128, seed=9).H, ldpc_make(128, seed=9).H)
        assert not np.array_equal(ldpc_make(128, seed=9).H, ldpc_make(128, seed=10).H)

    def test_odd_length_rejected(self):
        with pytest.raises(ConfigurationError):
            ldpc_make(255, seed=1)

    def test_full_rank_over_gf2(self, code):
        # row-reduce a copy independently
        H = code.H.astype(np.uint8).copy()
        rank = 0
        for c in range(code.n):
            rows = np.nonzero(H[rank:, c])[0]
            if len(rows) == 0:
                continue
            pivot = rank + rows[0]
            H[[rank, pivot]] = H[[pivot, rank]]
            others = np.nonzero(H[:, c])[0]
            others = others[others != rank]
            H[others] ^= H[rank]
            rank += 1
            if rank == code.m:
                break
        assert rank == code.m


class TestEncode:
    def test_codewords_satisfy_every_check(self, code, rng):
        for _ in range(50):
            info = rng.integers(0, 2, size=code.k).astype(np.uint8)
            word = ldpc_encode(code, info)
            assert not np.any((code.H @ word.astype(np.int64)) % 2)

    def test_systematic_info_recovery(self, code, rng):
        info = rng.integers(0, 2, size=code.k).astype(np.uint8)
        word = ldpc_encode(code, info)
        assert np.array_equal(word[code.info_positions], info)

    def test_wrong_length_rejected(self, code):
        with pytest.raises(ContractError):
            ldpc_encode(code, np.zeros(code.k + 1, dtype=np.uint8))


class TestDecode:
    def test_noiseless_converges_in_one_iteration(self, code, rng):
        info = rng.integers(0, 2, size=code.k).astype(np.uint8)
        word = ldpc_encode(code, info)
        llrs = np.where(word == 0, 30.0, -30.0)
        res = ldpc_decode(code, llrs)
        assert res.converged and res.iterations == 1
        assert np.array_equal(res.bits, word)

    def test_all_zero_codeword_moderate_noise(self, code):
        # Eb/N0 = 3 dB on the all-zero codeword; success is overwhelmingly
        # likely at this operating point, so a fixed seed keeps it stable.
        rng = np.random.default_rng(7)
        sigma = 10 ** (-3.0 / 20.0)
        ok = 0
        for _ in range(20):
            y = 1.0 + sigma * rng.standard_normal(code.n)
            res = ldpc_decode(code, np.clip(2.0 * y / sigma**2, -30, 30))
            ok += res.converged and not res.bits.any()
        assert ok >= 18

    def test_nonconvergence_is_flag_not_error(self, code, rng):
        llrs = np.clip(rng.standard_normal(code.n), -30, 30)
        res = ldpc_decode(code, llrs, max_iters=5)
        assert res.iterations <= 5
        assert isinstance(res.converged, bool)

    def test_infinite_llrs_rejected(self, code):
        llrs = np.zeros(code.n)
        llrs[0] = np.inf
        with pytest.raises(ContractError):
            ldpc_decode(code, llrs)

    def test_ber_improves_with_snr(self, code):
        rng = np.random.default_rng(11)
        errors = []
        for ebn0 in (0.0, 4.0):
            sigma2 = 10 ** (-ebn0 / 10.0)
            errs = 0
            for _ in range(40):
                info = rng.integers(0, 2, size=code.k).astype(np.uint8)
                word = ldpc_encode(code, info)
                x = 1.0 - 2.0 * word
                y = x + np.sqrt(sigma2) * rng.standard_normal(code.n)
                res = ldpc_decode(code, np.clip(2.0 * y / sigma2, -30, 30))
                errs += int(np.count_nonzero(res.bits[code.info_positions] != info))
            errors.append(errs)
        assert errors[1] < errors[0]


def test_alist_roundtrip(tmp_path, code):
    path = tmp_path / "code.alist"
    export_alist(code, path)
    loaded = import_alist(path, seed=code.seed)
    assert np.array_equal(loaded.H, code.H)
    first = path.read_text().splitlines()
    assert first[0] == "256 128"
    assert first[1] == "3 6"


def test_alist_layout_is_one_based(tmp_path):
    code = ldpc_make(24, seed=3)
    path = tmp_path / "small.alist"
    export_alist(code, path)
    lines = path.read_text().splitlines()
    col0 = [int(v) for v in lines[4].split()]
    assert sorted(np.nonzero(code.H[:, 0])[0] + 1) == sorted(v for v in col0 if v)
