import math

import numpy as np
import pytest

from hatemtl.encoder import (
    BOS_ID,
    PAD_ID,
    UNK_ID,
    EncoderConfig,
    TextEncoder,
    Tokenizer,
    build_tokenizer,
    encode_text,
    forward_with_loss,
    init_params,
    inter_user_representation,
    intra_user_representation,
    load_pretrained_embeddings,
    loss_and_gradients,
    tokenizer_from_texts,
)
from hatemtl.encoder.ops import cross_entropy
from hatemtl.mtl import TaskHead, init_head
from hatemtl.corpus import TaskId


def small_config(kind, **kw):
    defaults = dict(
        kind=kind, embedding_dim=8, output_dim=5, layers=2, heads=2,
        hidden_dim=12, num_filters=3, kernel_widths=(1, 2, 3), hidden_nodes=6,
    )
    defaults.update(kw)
    return EncoderConfig(**defaults)


def small_tokenizer(max_length=6):
    return Tokenizer(vocab={"a": 3, "b": 4, "c": 5, "d": 6, "e": 7}, max_length=max_length)


# -------------------------------------------------------------- tokenizer


def test_build_tokenizer_single_doc():
    tok = build_tokenizer([["a", "b"]], max_vocab=10, max_length=4)
    assert set(tok.vocab) == {"a", "b"}
    assert tok.vocab_size == 5


def test_tokenizer_unknown_maps_to_unk():
    tok = build_tokenizer([["a"]], max_vocab=1, max_length=4)
    ids = tok.encode_tokens(["zzz"])
    assert ids[1] == UNK_ID


def test_tokenizer_frequency_cutoff():
    corpus = [["a", "a", "b"], ["a", "c", "b"]]
    tok = build_tokenizer(corpus, max_vocab=2, max_length=4)
    assert "a" in tok.vocab and "b" in tok.vocab and "c" not in tok.vocab


def test_tokenizer_permutation_invariant():
    corpus = [["a", "b", "c"], ["b", "c"], ["c"]]
    t1 = build_tokenizer(corpus, max_vocab=10, max_length=4)
    t2 = build_tokenizer(list(reversed(corpus)), max_vocab=10, max_length=4)
    assert t1.vocab == t2.vocab


def test_encode_exact_length_and_specials():
    tok = small_tokenizer(max_length=4)
    ids = tok.encode("a b c d e")
    assert ids.shape == (4,)
    assert ids[0] == BOS_ID
    assert list(ids[1:]) == [3, 4, 5]  # truncated
    short = tok.encode("a")
    assert list(short) == [BOS_ID, 3, PAD_ID, PAD_ID]


def test_tokenizer_id_contiguity_enforced():
    with pytest.raises(ValueError):
        Tokenizer(vocab={"a": 3, "b": 9}, max_length=4)


# ------------------------------------------------------------- encode_text


@pytest.mark.parametrize("kind", ["transformer", "cnn", "gru"])
def test_zero_params_give_zero_vector(kind):
    tok = small_tokenizer()
    cfg = small_config(kind)
    params = init_params(cfg, tok, seed=0)
    for t in params.tensors.values():
        t[...] = 0.0
    vec = encode_text("a b c", tok, params, cfg)
    np.testing.assert_array_equal(vec, np.zeros(cfg.output_dim, dtype=np.float32))
    # a bias on the projection shifts every output
    params.tensors["proj.b"][...] = 1.5
    vec = encode_text("a b c", tok, params, cfg)
    np.testing.assert_allclose(vec, np.full(cfg.output_dim, 1.5), atol=1e-7)


@pytest.mark.parametrize("kind", ["transformer", "cnn", "gru"])
def test_identical_texts_identical_vectors(kind):
    tok = small_tokenizer()
    cfg = small_config(kind)
    params = init_params(cfg, tok, seed=1)
    v1 = encode_text("a b e", tok, params, cfg)
    v2 = encode_text("a b e", tok, params, cfg)
    np.testing.assert_array_equal(v1, v2)


@pytest.mark.parametrize("kind", ["transformer", "cnn", "gru"])
def test_output_dimension_matches_config(kind):
    tok = small_tokenizer()
    cfg = small_config(kind, output_dim=9)
    params = init_params(cfg, tok, seed=2)
    assert encode_text("a", tok, params, cfg).shape == (9,)


def test_cnn_pre_projection_dim_is_filters_times_widths():
    cfg = EncoderConfig(kind="cnn", num_filters=100, kernel_widths=(1, 2, 3, 4))
    assert cfg.pre_projection_dim == 400


def test_paper_scale_defaults():
    cfg = EncoderConfig(kind="cnn")
    assert cfg.num_filters == 100 and cfg.kernel_widths == (1, 2, 3, 4)
    assert EncoderConfig(kind="gru").hidden_nodes == 100


def test_shape_mismatch_rejected():
    tok = small_tokenizer()
    cfg = small_config("transformer")
    params = init_params(cfg, tok, seed=0)
    other = small_config("transformer", output_dim=7)
    with pytest.raises(ValueError, match="projection"):
        encode_text("a", tok, params, other)


def test_embedding_preload(tmp_path):
    tok = small_tokenizer()
    cfg = small_config("gru")
    params = init_params(cfg, tok, seed=0)
    row = " ".join(["0.5"] * cfg.embedding_dim)
    path = tmp_path / "emb.txt"
    path.write_text(f"a {row}\nmissing {row}\n", "utf-8")
    loaded = load_pretrained_embeddings(path, tok, params)
    assert loaded == 1
    np.testing.assert_allclose(params["embedding"][3], 0.5)


def test_embedding_preload_bad_width(tmp_path):
    tok = small_tokenizer()
    params = init_params(small_config("gru"), tok, seed=0)
    path = tmp_path / "emb.txt"
    path.write_text("a 0.5 0.5\n", "utf-8")
    with pytest.raises(ValueError, match="expected"):
        load_pretrained_embeddings(path, tok, params)


# ----------------------------------------------------------------- pooling


def batch_encoder(kind="gru", seed=3):
    tok = small_tokenizer()
    cfg = small_config(kind)
    params = init_params(cfg, tok, seed=seed)
    return TextEncoder(params, cfg, tok)


def test_intra_empty_history_zero_vector():
    enc = batch_encoder()
    out = intra_user_representation((), enc.encode_batch, enc.output_dim)
    np.testing.assert_array_equal(out, np.zeros(enc.output_dim))


def test_intra_single_tweet_equals_encoding():
    enc = batch_encoder()
    out = intra_user_representation(("a b",), enc.encode_batch, enc.output_dim)
    np.testing.assert_allclose(out, enc.encode("a b"), atol=1e-7)


def test_intra_batch_size_invariant():
    enc = batch_encoder()
    history = tuple(f"a b {w}" for w in "cdeab cdeaa ccc dd e ab ba ce de ea".split())
    a = intra_user_representation(history, enc.encode_batch, enc.output_dim, batch=5)
    b = intra_user_representation(history, enc.encode_batch, enc.output_dim, batch=10)
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_intra_caps_history():
    enc = batch_encoder()
    history = ("a",) * 8
    capped = intra_user_representation(history, enc.encode_batch, enc.output_dim, m_cap=3)
    direct = intra_user_representation(history[:3], enc.encode_batch, enc.output_dim)
    np.testing.assert_array_equal(capped, direct)


def test_inter_empty_zero_and_permutation_invariant():
    enc = batch_encoder()
    assert inter_user_representation([], enc.encode_batch, enc.output_dim).sum() == 0.0
    tweets = ["a b", "c d", "e e", "b a"]
    a = inter_user_representation(tweets, enc.encode_batch, enc.output_dim)
    b = inter_user_representation(list(reversed(tweets)), enc.encode_batch, enc.output_dim)
    np.testing.assert_allclose(a, b, atol=1e-6)


# -------------------------------------------------------------------- loss


def make_head(classes=3, dim=5, seed=0):
    task = TaskId("t", tuple(f"c{i}" for i in range(classes)))
    return init_head(task, dim, seed)


def test_uniform_logits_loss_is_log_c():
    logits = np.zeros((4, 3))
    loss, _p, _d = cross_entropy(logits, np.array([0, 1, 2, 0]))
    assert loss == pytest.approx(math.log(3), abs=1e-12)


def test_perfect_logits_loss_near_zero():
    margin = 20.0
    logits = np.full((3, 3), -margin)
    np.fill_diagonal(logits, margin)
    loss, _p, _d = cross_entropy(logits, np.array([0, 1, 2]))
    assert loss < 1e-3


def test_label_out_of_range_rejected():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((2, 3)), np.array([0, 3]))


def test_forward_with_loss_matches_scalar_recomputation():
    tok = small_tokenizer()
    cfg = small_config("transformer")
    params = init_params(cfg, tok, seed=4)
    head = make_head(classes=3, dim=cfg.output_dim, seed=5)
    batch = [("a b", 0), ("c d e", 2), ("e", 1)]
    loss, logits = forward_with_loss(batch, params, cfg, head, tok)
    # independent scalar oracle: -mean log softmax at the gold index
    expected = 0.0
    for row, (_t, y) in zip(logits, batch):
        z = row - row.max()
        expected += -(z[y] - math.log(np.exp(z).sum()))
    expected /= len(batch)
    assert loss == pytest.approx(expected, rel=1e-6)


def test_gradient_batch_duplication_invariant():
    tok = small_tokenizer()
    cfg = small_config("gru")
    params = init_params(cfg, tok, seed=6)
    head = make_head(classes=2, dim=cfg.output_dim, seed=7)
    ids = tok.encode_batch(["a b", "c"])
    y = np.array([0, 1])
    _l, _lg, g1, dw1, db1 = loss_and_gradients(ids, y, params, cfg, head.w, head.b)
    ids2 = np.concatenate([ids, ids])
    y2 = np.concatenate([y, y])
    _l, _lg, g2, dw2, db2 = loss_and_gradients(ids2, y2, params, cfg, head.w, head.b)
    for name in g1:
        np.testing.assert_allclose(g1[name], g2[name], atol=1e-5)
    np.testing.assert_allclose(dw1, dw2, atol=1e-5)


def test_head_bias_gradient_zero_at_symmetric_point():
    tok = small_tokenizer()
    cfg = small_config("cnn")
    params = init_params(cfg, tok, seed=8)
    for t in params.tensors.values():
        t[...] = 0.0
    head = make_head(classes=2, dim=cfg.output_dim, seed=9)
    head.w[...] = 0.0
    head.b[...] = 0.0
    ids = tok.encode_batch(["a", "b"])
    y = np.array([0, 1])  # balanced labels, all-equal logits
    _l, _lg, _g, _dw, db = loss_and_gradients(ids, y, params, cfg, head.w, head.b)
    np.testing.assert_allclose(db, 0.0, atol=1e-12)


# ----------------------------------------------------- toy gradient check


def central_difference_check(kind, rel_tol=1e-3, eps=1e-5):
    tok = small_tokenizer()
    cfg = small_config(kind)
    params = init_params(cfg, tok, seed=10, dtype=np.float64)
    rng = np.random.default_rng(11)
    for t in params.tensors.values():
        t += rng.normal(0.0, 0.05, t.shape)
    ids = tok.encode_batch(["a b c", "c d", "e e a b c", "b"])
    y = np.array([0, 1, 2, 0])
    head_w = rng.normal(0.0, 0.1, (cfg.output_dim, 3))
    head_b = rng.normal(0.0, 0.1, 3)

    loss, _lg, grads, dhw, dhb = loss_and_gradients(ids, y, params, cfg, head_w, head_b)
    flat = params.flat()
    analytic = np.concatenate([grads[n].ravel() for n in params.tensors])

    def loss_at(vec):
        probe = params.copy()
        probe.set_flat(vec)
        l, *_ = loss_and_gradients(ids, y, probe, cfg, head_w, head_b)
        return l

    worst = 0.0
    for i in range(flat.size):
        stepped = flat.copy()
        stepped[i] += eps
        lp = loss_at(stepped)
        stepped[i] -= 2 * eps
        lm = loss_at(stepped)
        numeric = (lp - lm) / (2 * eps)
        rel = abs(numeric - analytic[i]) / max(abs(numeric) + abs(analytic[i]), 1e-4)
        worst = max(worst, rel)
    assert worst < rel_tol, f"{kind}: worst relative error {worst}"


@pytest.mark.parametrize("kind", ["transformer", "cnn", "gru"])
def test_every_coordinate_matches_finite_differences(kind):
    central_difference_check(kind)
