"""Backend parity and contract tests for the detector enumeration kernel.

The brute-force oracle below rebuilds the posterior mean from first
principles: explicit loop over all bit vectors, weights formed in plain
Python floats without the Gray-code or log-sum-exp machinery.
"""

import itertools
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from replicamud._kernels import BACKEND, _fallback, io_soft_outputs

try:
    from replicamud._kernels import _core
except ImportError:  # pragma: no cover - exercised only on fallback installs
    _core = None

needs_compiled = pytest.mark.skipif(
    _core is None, reason="compiled kernel not built"
)


def naive_soft_outputs(corr, quad):
    n_sym, n_users = corr.shape
    soft = np.zeros((n_sym, n_users))
    for t in range(n_sym):
        shift = None
        entries = []
        for bits in itertools.product((-1.0, 1.0), repeat=n_users):
            b = np.array(bits)
            log_w = float(b @ corr[t] - b @ quad @ b)
            entries.append((log_w, b))
            if shift is None or log_w > shift:
                shift = log_w
        tot = 0.0
        num = np.zeros(n_users)
        for log_w, b in entries:
            w = math.exp(log_w - shift)
            tot += w
            num += w * b
        soft[t] = num / tot
    return soft


def random_instance(rng, n_users, n_sym):
    codes = rng.choice([-1.0, 1.0], size=(n_users, 16)) / 4.0
    gram = codes @ codes.T
    corr = rng.normal(size=(n_sym, n_users)) * 3.0
    return corr, gram


class TestAgainstNaive:
    @pytest.mark.parametrize("n_users", [1, 2, 3, 5, 8])
    def test_matches_explicit_enumeration(self, n_users):
        rng = np.random.default_rng(1234 + n_users)
        corr, gram = random_instance(rng, n_users, 7)
        want = naive_soft_outputs(corr, gram)
        got = io_soft_outputs(corr, gram)
        np.testing.assert_allclose(got, want, atol=1e-10, rtol=0.0)

    def test_extreme_log_weights_stay_finite(self):
        rng = np.random.default_rng(7)
        corr, gram = random_instance(rng, 4, 5)
        # Scale far past exp() overflow territory to exercise the shift.
        got = io_soft_outputs(600.0 * corr, 600.0 * gram)
        assert np.all(np.isfinite(got))
        assert np.all(np.abs(got) <= 1.0)

    def test_single_user_closed_form(self):
        corr = np.array([[0.7], [-1.3], [0.0]])
        gram = np.array([[2.0]])  # constant across hypotheses: cancels
        got = io_soft_outputs(corr, gram)
        np.testing.assert_allclose(got[:, 0], np.tanh(corr[:, 0]), atol=1e-14)


class TestBackendParity:
    @needs_compiled
    @pytest.mark.parametrize("n_users", [1, 2, 3, 5, 8])
    def test_backends_agree(self, n_users):
        rng = np.random.default_rng(99 + n_users)
        corr, gram = random_instance(rng, n_users, 7)
        np.testing.assert_allclose(
            _core.io_soft_outputs(corr, gram),
            _fallback.io_soft_outputs(corr, gram),
            atol=1e-12,
            rtol=0.0,
        )

    @needs_compiled
    def test_backends_agree_on_wide_dynamic_range(self):
        rng = np.random.default_rng(5)
        corr, gram = random_instance(rng, 6, 4)
        np.testing.assert_allclose(
            _core.io_soft_outputs(100.0 * corr, 100.0 * gram),
            _fallback.io_soft_outputs(100.0 * corr, 100.0 * gram),
            atol=1e-12,
            rtol=0.0,
        )

    def test_env_var_forces_fallback(self):
        env = dict(os.environ, REPLICAMUD_PURE_PYTHON="1")
        out = subprocess.run(
            [sys.executable, "-c", "from replicamud._kernels import BACKEND; print(BACKEND)"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "python"

    def test_active_backend_is_named(self):
        assert BACKEND in ("compiled", "python")


class TestValidation:
    @pytest.mark.parametrize("impl", [io_soft_outputs, _fallback.io_soft_outputs])
    def test_shape_errors(self, impl):
        with pytest.raises(ValueError):
            impl(np.zeros(3), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            impl(np.zeros((2, 3)), np.zeros((2, 2)))

    @pytest.mark.parametrize("impl", [io_soft_outputs, _fallback.io_soft_outputs])
    def test_user_count_cap(self, impl):
        with pytest.raises(ValueError):
            impl(np.zeros((1, 63)), np.zeros((63, 63)))

    def test_accepts_non_contiguous_input(self):
        rng = np.random.default_rng(11)
        corr, gram = random_instance(rng, 3, 4)
        strided = np.asfortranarray(corr)
        np.testing.assert_allclose(
            io_soft_outputs(strided, gram), io_soft_outputs(corr, gram), atol=0.0
        )
