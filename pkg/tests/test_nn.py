"""Engine pieces: gradients, attention, masks, losses, optimizer, model and checkpoints."""

import math

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from numgrad import causal_probe, check_grads, engine_cases, tiny_config
from smilesfix.errors import (
    CheckpointError, ConfigError, DimMismatch, IdOutOfRange, NonPositiveSigma, ShapeMismatch, StepOutOfRange,
)
from smilesfix.nn import PRESETS, Adam, Seq2SeqTransformer, TransformerConfig, clip_gradients, cosine_lr
from smilesfix.nn import functional as F
from smilesfix.nn.checkpoint import MAGIC, load_checkpoint
from smilesfix.nn.decoding import autoregressive, beam_search
from smilesfix.nn.training import build_model, derive_seed, load_model, save_model

D = torch.float64


# ------------------------------------------------------------------ gradients
@pytest.mark.parametrize("name", sorted(engine_cases()))
def test_finite_difference_gradients(name):
    f, inputs = engine_cases(seed=1)[name]
    assert check_grads(f, inputs, max_coords=40) < 1e-4


@given(st.integers(0, 1000))
def test_attention_gradients_random_shapes(seed):
    g = torch.Generator().manual_seed(seed)
    n, m, d = (int(x) for x in torch.randint(1, 5, (3,), generator=g))
    q = torch.randn(n, d, generator=g, dtype=D, requires_grad=True)
    k = torch.randn(m, d, generator=g, dtype=D, requires_grad=True)
    v = torch.randn(m, d, generator=g, dtype=D, requires_grad=True)
    proj = torch.randn(n, d, generator=g, dtype=D)
    f = lambda: (F.scaled_dot_product_attention(q, k, v)[0] * proj).sum()  # noqa: E731
    assert check_grads(f, [q, k, v]) < 1e-4


# ------------------------------------------------------------------ attention and masks
def test_attention_uniform_on_identical_keys():
    q = torch.zeros(1, 4, dtype=D)
    k = torch.ones(2, 4, dtype=D)
    v = torch.tensor([[1.0, 0, 0, 0], [0, 1.0, 0, 0]], dtype=D)
    out, w = F.scaled_dot_product_attention(q, k, v)
    assert w.tolist() == [[0.5, 0.5]]
    assert out.tolist() == [[0.5, 0.5, 0.0, 0.0]]


def test_attention_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        F.scaled_dot_product_attention(torch.zeros(2, 3), torch.zeros(2, 4), torch.zeros(2, 4))


@given(st.integers(0, 10_000))
def test_softmax_rows_normalized(seed):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(5, 7, generator=g, dtype=torch.float32) * 20
    s = F.softmax(x)
    assert bool((s >= 0).all())
    assert float((s.sum(-1) - 1).abs().max()) <= 1e-6


def test_causal_mask():
    assert F.causal_mask(1).tolist() == [[0.0]]
    m = F.causal_mask(4)
    for s in range(4):
        for t in range(4):
            assert (m[s, t] == 0) if t <= s else (m[s, t] == float("-inf"))
    _, w = F.scaled_dot_product_attention(torch.randn(4, 3, dtype=D), torch.randn(4, 3, dtype=D),
                                          torch.randn(4, 3, dtype=D), m)
    assert w[0].tolist() == [1.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("variational", [False, True])
def test_causal_invariance_exact(variational):
    torch.manual_seed(0)
    cfg = tiny_config(variational=variational, property_dim=2 if variational else 0, n_layers=2)
    model = Seq2SeqTransformer(cfg).double().eval()
    assert causal_probe(model) == 0.0


def test_incremental_decoding_matches_teacher_forcing():
    torch.manual_seed(1)
    cfg = tiny_config(variational=True, property_dim=2, n_layers=2)
    model = Seq2SeqTransformer(cfg).double().eval()
    src = torch.randint(5, 29, (3, 7))
    props = torch.randn(3, 2, dtype=D)
    dec = torch.cat([torch.zeros(3, 1, dtype=torch.long), torch.randint(5, 29, (3, 5))], dim=1)
    with torch.no_grad():
        enc = model.latent(model.encode(src, props), None)
        full = model.decode(enc, dec, props)
        logits, state = model.start(enc, dec[:, 0], props)
        steps = [logits]
        for t in range(1, dec.shape[1]):
            logits, state = model.step(state, dec[:, t])
            steps.append(logits)
    assert torch.allclose(torch.stack(steps, dim=1), full, atol=1e-10)


def test_decoder_distribution_normalized():
    torch.manual_seed(2)
    model = Seq2SeqTransformer(tiny_config()).double().eval()
    with torch.no_grad():
        logits = model.decode(model.encode(torch.randint(5, 29, (2, 6))), torch.randint(5, 29, (2, 4)))
    p = F.softmax(logits)
    assert float((p.sum(-1) - 1).abs().max()) <= 1e-6


def test_greedy_decoding_deterministic_and_beam_consistent():
    torch.manual_seed(3)
    model = Seq2SeqTransformer(tiny_config()).double().eval()
    src = torch.randint(5, 29, (2, 6))
    with torch.no_grad():
        enc = model.encode(src)
        a = autoregressive(model, enc)
        b = autoregressive(model, enc)
        beams = beam_search(model, enc, beam=1)
    assert a == b
    assert [h[0][0] for h in beams] == a
    assert all(len(s) <= model.config.max_len for s in a)


# ------------------------------------------------------------------ embeddings
def test_embed_tokens():
    table = torch.randn(29, 4, dtype=D)
    out = F.embed_tokens(torch.tensor([[3, 3]]), table)
    assert torch.equal(out[0, 0], out[0, 1])
    with pytest.raises(IdOutOfRange):
        F.embed_tokens(torch.tensor([29]), table)


def test_embedding_gradient_touches_only_looked_up_rows():
    table = torch.randn(6, 3, dtype=D, requires_grad=True)
    F.embed_tokens(torch.tensor([1, 4, 4]), table).sum().backward()
    touched = (table.grad.abs().sum(1) > 0).tolist()
    assert touched == [False, True, False, False, True, False]


def test_embed_properties():
    w, b = torch.randn(2, 5, dtype=D), torch.randn(2, 5, dtype=D)
    p = torch.tensor([[0.7, -1.2]], dtype=D)
    e1 = F.embed_properties(p, w, b) - b
    e2 = F.embed_properties(2 * p, w, b) - b
    assert torch.allclose(e2, 2 * e1, atol=1e-15)
    assert F.embed_properties(torch.zeros(3, 0, dtype=D), torch.zeros(0, 5, dtype=D),
                              torch.zeros(0, 5, dtype=D)).shape == (3, 0, 5)
    with pytest.raises(DimMismatch):
        F.embed_properties(torch.zeros(1, 3, dtype=D), w, b)


# ------------------------------------------------------------------ latent and losses
def test_reparameterize():
    mu, sigma = torch.tensor([1.5, -2.0], dtype=D), torch.tensor([0.5, 2.0], dtype=D)
    assert torch.equal(F.reparameterize(mu, sigma, torch.zeros(2, dtype=D)), mu)
    with pytest.raises(NonPositiveSigma):
        F.reparameterize(mu, torch.tensor([0.0, 1.0], dtype=D), torch.zeros(2, dtype=D))


def test_reparameterize_sample_variance():
    g = torch.Generator().manual_seed(4)
    mu, sigma = torch.tensor([0.3], dtype=D), torch.tensor([1.7], dtype=D)
    z = F.reparameterize(mu, sigma, torch.randn(100_000, 1, generator=g, dtype=D))
    assert abs(float(z.var()) / 1.7 ** 2 - 1) < 0.05


def test_reparameterize_small_sigma_limit():
    z = F.reparameterize(torch.zeros(1000, dtype=D), torch.full((1000,), 1e-12, dtype=D),
                         torch.randn(1000, dtype=D))
    assert float(z.var()) < 1e-20


def test_kl_analytic():
    assert float(F.kl_loss(torch.zeros(1, 1, dtype=D), torch.ones(1, 1, dtype=D))) == 0.0
    assert abs(float(F.kl_loss(torch.ones(1, 1, dtype=D), torch.ones(1, 1, dtype=D))) - 0.5) <= 1e-9
    with pytest.raises(NonPositiveSigma):
        F.kl_loss(torch.zeros(1, 1), torch.zeros(1, 1))


@given(st.integers(0, 10_000))
def test_kl_nonnegative_and_logvar_form_agrees(seed):
    g = torch.Generator().manual_seed(seed)
    mu = torch.randn(3, 4, generator=g, dtype=D)
    logvar = torch.randn(3, 4, generator=g, dtype=D)
    a = float(F.kl_loss(mu, torch.exp(0.5 * logvar)))
    b = float(F.kl_from_logvar(mu, logvar))
    assert a >= 0 and b >= 0
    assert abs(a - b) <= 1e-9 * max(1.0, a)


def test_cross_entropy_uniform_is_log_vocab():
    ce = float(F.cross_entropy(torch.zeros(2, 3, 29, dtype=D), torch.tensor([[5, 6, 7], [8, 9, 10]])))
    assert abs(ce - math.log(29)) <= 1e-9
    assert abs(math.log(29) - 3.3673) < 1e-4


def test_cross_entropy_confident_and_padding():
    logits = torch.full((1, 3, 29), -50.0, dtype=D)
    tgt = torch.tensor([[5, 6, 2]])
    logits[0, 0, 5] = logits[0, 1, 6] = 50.0
    # the pad position has uniform, wrong-looking logits but is excluded
    logits[0, 2] = 0.0
    assert float(F.cross_entropy(logits, tgt, ignore_index=2)) < 1e-30
    with pytest.raises(IdOutOfRange):
        F.cross_entropy(logits, torch.tensor([[5, 6, 29]]))


def test_mse():
    p = torch.randn(4, 3, dtype=D)
    assert float(F.mse_property_loss(p, p)) == 0.0
    assert abs(float(F.mse_property_loss(p + 0.25, p)) - 0.0625) <= 1e-12
    with pytest.raises(DimMismatch):
        F.mse_property_loss(torch.zeros(2, 3), torch.zeros(2, 2))


# ------------------------------------------------------------------ optimizer and schedule
def test_cosine_schedule():
    assert cosine_lr(0, 100, 1e-3, 1e-5) == 1e-3
    assert abs(cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5) <= 1e-9
    assert abs(cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2) <= 1e-12
    with pytest.raises(StepOutOfRange):
        cosine_lr(101, 100, 1e-3)


def test_adam_zero_grads_leave_params():
    p = torch.randn(3, dtype=D)
    before = p.clone()
    Adam([p], lr=0.1).step([torch.zeros(3, dtype=D)])
    assert torch.equal(p, before)


def test_adam_first_step_is_lr():
    p = torch.zeros(4, dtype=D)
    g = torch.tensor([3.0, -0.2, 1e-3, 50.0], dtype=D)
    Adam([p], lr=0.01).step([g])
    # bias-corrected first step is lr * g / (|g| + eps)
    assert torch.allclose(p.abs(), torch.full((4,), 0.01, dtype=D), rtol=1e-4)
    assert torch.equal(torch.sign(p), -torch.sign(g))


def test_adam_quadratic_convergence():
    x = torch.tensor([1.0], dtype=D, requires_grad=True)
    opt = Adam([x])
    for step in range(500):
        opt.zero_grad()
        (x ** 2).sum().backward()
        opt.step(lr=cosine_lr(step, 500, 0.05, 0.0))
    assert abs(float(x.detach())) < 1e-3


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        Adam([torch.zeros(3)]).step([torch.zeros(4)])


def test_clip_examples():
    g = [torch.tensor([0.3, 0.4])]
    clip_gradients(g, 1.0)
    assert g[0].tolist() == pytest.approx([0.3, 0.4])
    g = [torch.tensor([3.0, 4.0], dtype=D)]
    norm = clip_gradients(g, 2.5)
    assert norm == 5.0
    assert g[0].tolist() == pytest.approx([1.5, 2.0])


@given(st.integers(0, 10_000), st.floats(0.01, 10))
def test_clip_bound(seed, max_norm):
    gen = torch.Generator().manual_seed(seed)
    grads = [torch.randn(3, 4, generator=gen, dtype=D) * 5, torch.randn(7, generator=gen, dtype=D)]
    clip_gradients(grads, max_norm)
    total = math.sqrt(sum(float((g ** 2).sum()) for g in grads))
    assert total <= max_norm + 1e-9


# ------------------------------------------------------------------ config and model
def test_presets():
    p, d = PRESETS["paper"], PRESETS["desk"]
    assert (p.n_layers, p.n_heads, p.d_model, p.d_ff, p.dropout, p.d_z, p.max_len) == (6, 8, 512, 2048, 0.25, 128, 80)
    assert (d.n_layers, d.n_heads, d.d_model, d.d_ff, d.dropout, d.d_z, d.max_len) == (2, 4, 128, 256, 0.1, 32, 80)
    assert p.d_model == p.n_heads * p.d_head
    with pytest.raises(ConfigError):
        TransformerConfig(d_model=10, n_heads=3)


def test_encoder_output_shape():
    cfg = tiny_config(variational=True, property_dim=3)
    model = Seq2SeqTransformer(cfg).double().eval()
    ids = torch.randint(5, 29, (4, cfg.seq_width))
    enc = model.encode(ids, torch.zeros(4, 3, dtype=D))
    assert enc.mu.shape == (4, cfg.seq_width + 3, cfg.d_z) == model.latent_shape(4)


def test_dropout_zero_is_deterministic():
    torch.manual_seed(5)
    model = Seq2SeqTransformer(tiny_config(dropout=0.0)).double().train()
    src, dec = torch.randint(5, 29, (2, 6)), torch.randint(5, 29, (2, 5))
    a = model.decode(model.encode(src), dec)
    b = model.decode(model.encode(src), dec)
    assert torch.equal(a, b)


def test_init_is_seeded():
    a = build_model(tiny_config(), 7, D)
    b = build_model(tiny_config(), 7, D)
    c = build_model(tiny_config(), 8, D)
    pa, pb, pc = (torch.cat([p.reshape(-1) for p in m.parameters()]) for m in (a, b, c))
    assert torch.equal(pa, pb) and not torch.equal(pa, pc)


def test_weight_init_bounds():
    torch.manual_seed(0)
    model = Seq2SeqTransformer(tiny_config())
    for name, p in model.named_parameters():
        if name.endswith("weight") and p.dim() == 2 and "tokens" not in name:
            assert float(p.abs().max()) <= 1 / math.sqrt(p.shape[1]) + 1e-12, name


def test_derive_seed_stable():
    assert derive_seed(0, "train-gen") == derive_seed(0, "train-gen")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert 0 <= derive_seed(123, "x") < 2 ** 63


# ------------------------------------------------------------------ checkpoints
def test_checkpoint_round_trip(tmp_path):
    model = build_model(tiny_config(variational=True, property_dim=2), 3, D)
    opt = Adam(list(model.parameters()))
    for p in model.parameters():
        p.grad = torch.ones_like(p)
    opt.step()
    path = tmp_path / "m.ckpt"
    save_model(path, "generator", model, opt, {"step": 1})
    assert path.read_bytes()[:8] == MAGIC
    m2, o2, meta = load_model(path, "generator")
    assert meta == {"step": 1}
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), m2.named_parameters()):
        assert n1 == n2 and torch.equal(p1, p2) and p2.dtype == D
    assert o2.step_count == 1
    assert all(torch.equal(a, b) for a, b in zip(opt.m, o2.m))


def test_checkpoint_errors(tmp_path):
    model = build_model(tiny_config(), 0, torch.float32)
    path = tmp_path / "m.ckpt"
    save_model(path, "fixer", model)
    with pytest.raises(CheckpointError):
        load_model(path, "generator")
    raw = path.read_bytes()
    (tmp_path / "trunc.ckpt").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "trunc.ckpt")
    (tmp_path / "magic.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "magic.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")
