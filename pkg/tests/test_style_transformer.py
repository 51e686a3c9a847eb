import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from master_style.attention import scaled_dot_attention
from master_style.features import FeatureMap
from master_style.params import OTHER, STYLE_ENCODER, ParamStore, make_rng
from master_style.style_transformer import (
    StyleCode,
    StyleTransformer,
    fuse,
    interpolate_outputs,
    merge_styles,
)
from master_style.tensor import Tensor

D = 8


def build(fusion="scale_shift", seed=0, d=D, heads=2):
    st_ = StyleTransformer(d_model=d, heads=heads, window=2, shift=1, mlp_ratio=2, fusion=fusion)
    store = ParamStore()
    st_.init_params(store, make_rng(seed))
    return st_, store


def fmap(rng, batch, h, w, d=D, scale=1.0):
    return FeatureMap(Tensor(rng.normal(scale=scale, size=(batch, h * w, d))), h, w)


def zero_params(store, prefix):
    for name, t in store.items():
        if name.startswith(prefix):
            t.data = np.zeros_like(t.data)


class TestParams:
    def test_group_boundary(self):
        _, store = build()
        for name, _ in store.items():
            expected = STYLE_ENCODER if name.startswith("st.enc.") else OTHER
            assert store.group(name) == expected, name

    def test_encoder_streams_share_qk(self):
        _, store = build()
        names = set(store)
        assert "st.enc.k.wq" in names and "st.enc.sigma.wq" not in names and "st.enc.mu.wk" not in names
        for s in ("k", "sigma", "mu"):
            assert {f"st.enc.{s}.wv", f"st.enc.{s}.wo", f"st.enc.{s}.mlp.w1"} <= names

    def test_parameter_count_formula(self):
        _, store = build()
        attn = D * D
        mlp = D * 2 * D + 2 * D + 2 * D * D + D
        enc = 4 * attn + 2 * (2 * attn) + 3 * mlp  # shared q/k; sigma, mu add v/o
        dec = 4 * attn + 4 * attn + 2 * attn + mlp  # self, sigma, mu (v/o only)
        assert store.count([STYLE_ENCODER]) == enc
        assert store.count([OTHER]) == dec

    def test_invalid_construction(self):
        with pytest.raises(ValueError):
            StyleTransformer(d_model=6, heads=4)
        with pytest.raises(ValueError):
            StyleTransformer(fusion="gated")


class TestEncoderLayer:
    def test_shapes(self):
        st_, store = build()
        rng = np.random.default_rng(0)
        code = StyleCode.from_style(fmap(rng, 1, 3, 4))
        new, _ = st_.encoder_layer(store, code)
        for s in ("k", "sigma", "mu"):
            assert getattr(new, s).shape == code.k.shape
            assert (getattr(new, s).height, getattr(new, s).width) == (3, 4)

    def test_single_shared_map(self):
        st_, store = build()
        rng = np.random.default_rng(1)
        code = StyleCode(fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4))
        _, maps = st_.encoder_layer(store, code)
        assert maps["sigma"] is maps["k"] and maps["mu"] is maps["k"]

    def test_zero_weights_pass_through(self):
        st_, store = build()
        zero_params(store, "st.enc.")
        rng = np.random.default_rng(2)
        code = StyleCode(fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4))
        new, _ = st_.encoder_layer(store, code)
        for s in ("k", "sigma", "mu"):
            np.testing.assert_array_equal(getattr(new, s).tokens.data, getattr(code, s).tokens.data)

    def test_initial_code_is_style_feature(self):
        f = fmap(np.random.default_rng(3), 1, 2, 2)
        code = StyleCode.from_style(f)
        assert code.k is f and code.sigma is f and code.mu is f

    def test_mismatched_streams(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            StyleCode(fmap(rng, 1, 2, 2), fmap(rng, 1, 2, 3), fmap(rng, 1, 2, 2))


class TestDecoderLayer:
    def test_neutral_fusion_is_identity(self):
        x = np.random.default_rng(5).normal(size=(2, 6, D))
        out = fuse(Tensor(x), Tensor(np.ones_like(x)), Tensor(np.zeros_like(x)))
        np.testing.assert_array_equal(out.data, x)

    def test_neutral_sigma_mu_inside_layer(self):
        """Constant style values with projections chosen so sigma = 1 and mu = 0."""
        st_, store = build()
        store["st.dec.sigma.wv"].data = np.eye(D)
        store["st.dec.sigma.wo"].data = np.eye(D)
        store["st.dec.mu.wo"].data = np.zeros((D, D))
        rng = np.random.default_rng(6)
        k = fmap(rng, 1, 3, 3)
        ones = FeatureMap(Tensor(np.ones((1, 9, D))), 3, 3)
        _, info = st_.decoder_layer(store, fmap(rng, 2, 4, 4), StyleCode(k, ones, k))
        np.testing.assert_allclose(info["sigma"].data, 1.0, atol=1e-14)
        np.testing.assert_array_equal(info["mu"].data, 0.0)
        np.testing.assert_allclose(info["fused"].data, info["pre_fusion"].data, atol=1e-13)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 3))
    def test_shape_for_any_style_token_count(self, n_style, batch):
        st_, store = build()
        rng = np.random.default_rng(n_style)
        code = StyleCode.from_style(FeatureMap(Tensor(rng.normal(size=(1, n_style, D)))))
        fcs = fmap(rng, batch, 3, 5)
        out, _ = st_.decoder_layer(store, fcs, code)
        assert out.shape == fcs.shape and (out.height, out.width) == (3, 5)

    def test_sigma_and_mu_share_map(self):
        st_, store = build()
        rng = np.random.default_rng(7)
        _, info = st_.decoder_layer(store, fmap(rng, 2, 4, 4), StyleCode.from_style(fmap(rng, 1, 4, 4)))
        np.testing.assert_array_equal(info["sigma_map"].data, info["mu_map"].data)

    def test_scale_shift_formula(self):
        st_, store = build()
        rng = np.random.default_rng(8)
        _, info = st_.decoder_layer(store, fmap(rng, 1, 2, 2), StyleCode.from_style(fmap(rng, 1, 2, 2)))
        np.testing.assert_allclose(info["fused"].data, info["sigma"].data * info["pre_fusion"].data + info["mu"].data)

    def test_width_mismatch(self):
        st_, store = build()
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            st_.decoder_layer(store, fmap(rng, 1, 2, 2, d=4), StyleCode.from_style(fmap(rng, 1, 2, 2)))


class TestForward:
    def test_zero_layers_returns_content(self):
        st_, store = build()
        rng = np.random.default_rng(10)
        fc = fmap(rng, 2, 4, 4)
        out = st_.forward(store, fmap(rng, 1, 4, 4), fc, 0)
        assert out.tokens.data.tobytes() == fc.tokens.data.tobytes()

    def test_negative_layers(self):
        st_, store = build()
        rng = np.random.default_rng(11)
        with pytest.raises(ValueError):
            st_.forward(store, fmap(rng, 1, 2, 2), fmap(rng, 1, 2, 2), -1)

    def test_parameter_count_independent_of_depth(self):
        st_, store = build()
        rng = np.random.default_rng(12)
        counts = set()
        for L in range(1, 7):
            before = store.count()
            st_.forward(store, fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4), L)
            counts.add((before, store.count()))
        assert counts == {(store.count(), store.count())}

    def test_one_layer_is_manual_composition(self):
        st_, store = build()
        rng = np.random.default_rng(13)
        fs, fc = fmap(rng, 1, 4, 4), fmap(rng, 2, 4, 4)
        code, _ = st_.encoder_layer(store, StyleCode(fs, fs, fs))
        manual, _ = st_.decoder_layer(store, fc, code)
        np.testing.assert_array_equal(st_.forward(store, fs, fc, 1).tokens.data, manual.tokens.data)

    def test_depth_changes_output(self):
        st_, store = build()
        rng = np.random.default_rng(14)
        fs, fc = fmap(rng, 1, 4, 4), fmap(rng, 1, 4, 4)
        a = st_.forward(store, fs, fc, 1).tokens.data
        b = st_.forward(store, fs, fc, 2).tokens.data
        assert not np.allclose(a, b)

    @pytest.mark.parametrize("L", [1, 2, 3, 5])
    def test_zeroed_stack_with_neutral_fusion_is_identity(self, L):
        st_, store = build(fusion="identity")
        zero_params(store, "st.")
        rng = np.random.default_rng(15)
        fc = fmap(rng, 2, 4, 4)
        out = st_.forward(store, fmap(rng, 1, 4, 4), fc, L)
        np.testing.assert_array_equal(out.tokens.data, fc.tokens.data)


class TestInterpolate:
    def test_endpoints(self):
        rng = np.random.default_rng(16)
        a, b = fmap(rng, 1, 2, 2), fmap(rng, 1, 2, 2)
        assert interpolate_outputs(a, b, 1.0).tokens.data.tobytes() == a.tokens.data.tobytes()
        assert interpolate_outputs(a, b, 0.0).tokens.data.tobytes() == b.tokens.data.tobytes()

    def test_half_of_opposites_is_zero(self):
        f = fmap(np.random.default_rng(17), 1, 2, 2)
        neg = f.with_tokens(-f.tokens)
        np.testing.assert_array_equal(interpolate_outputs(f, neg, 0.5).tokens.data, 0.0)

    @pytest.mark.parametrize("alpha", [-0.1, 1.5])
    def test_alpha_range(self, alpha):
        f = fmap(np.random.default_rng(18), 1, 2, 2)
        with pytest.raises(ValueError):
            interpolate_outputs(f, f, alpha)


class TestMergeStyles:
    def test_single_is_identity(self):
        f = fmap(np.random.default_rng(19), 1, 2, 2)
        assert merge_styles([f]) is f

    def test_token_counts_add(self):
        rng = np.random.default_rng(20)
        m = merge_styles([fmap(rng, 1, 2, 3), fmap(rng, 1, 4, 3)])
        assert m.n_tokens == 18 and m.channels == D and (m.height, m.width) == (6, 3)
        m = merge_styles([fmap(rng, 1, 2, 3), fmap(rng, 1, 2, 2)])
        assert m.n_tokens == 10 and m.height is None

    def test_errors(self):
        rng = np.random.default_rng(21)
        with pytest.raises(ValueError):
            merge_styles([])
        with pytest.raises(ValueError):
            merge_styles([fmap(rng, 1, 2, 2), fmap(rng, 1, 2, 2, d=4)])

    def test_cross_attention_is_order_independent(self):
        rng = np.random.default_rng(22)
        a, b = fmap(rng, 1, 2, 2), fmap(rng, 1, 3, 2)
        q = Tensor(rng.normal(size=(1, 5, D)))
        ab, ba = merge_styles([a, b]).tokens, merge_styles([b, a]).tokens
        out_ab, _ = scaled_dot_attention(q, ab, ab)
        out_ba, _ = scaled_dot_attention(q, ba, ba)
        np.testing.assert_allclose(out_ab.data, out_ba.data, atol=1e-12)

    def test_decoder_cross_attention_order_independent(self):
        st_, store = build()
        rng = np.random.default_rng(23)
        a = FeatureMap(Tensor(rng.normal(size=(1, 4, D))))
        b = FeatureMap(Tensor(rng.normal(size=(1, 6, D))))
        fcs = fmap(rng, 1, 2, 2)
        out_ab, _ = st_.decoder_layer(store, fcs, StyleCode.from_style(merge_styles([a, b])))
        out_ba, _ = st_.decoder_layer(store, fcs, StyleCode.from_style(merge_styles([b, a])))
        np.testing.assert_allclose(out_ab.tokens.data, out_ba.tokens.data, atol=1e-12)
