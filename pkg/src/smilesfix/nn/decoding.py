"""Greedy, temperature-sampled and beam-search decoding with an incremental cache."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from smilesfix.nn.model import Encoded, Seq2SeqTransformer
from smilesfix.smiles.vocab import EOS_ID, MASK_ID, PAD_ID, SOS_ID, UNK_ID

# Decoders may only emit content tokens or eos.
BANNED_IDS = (SOS_ID, PAD_ID, UNK_ID, MASK_ID)


def _ban(logits: torch.Tensor) -> torch.Tensor:
    logits = logits.clone()
    logits[:, list(BANNED_IDS)] = float("-inf")
    return logits


def row_gumbel(seeds: Sequence, steps: int, vocab: int) -> np.ndarray:
    """Gumbel noise with an independent stream per row, so results do not depend on batching."""
    return np.stack([np.random.default_rng(list(s)).gumbel(size=(steps, vocab)) for s in seeds])


@torch.no_grad()
def autoregressive(model: Seq2SeqTransformer, enc: Encoded, props: torch.Tensor | None = None,
                   temperature: float = 0.0, noise: np.ndarray | None = None,
                   max_steps: int | None = None) -> list[list[int]]:
    """Decode a batch one token at a time; returns content ids (eos stripped).

    ``temperature`` 0 is argmax; otherwise sampling by the Gumbel-max trick with
    ``noise`` of shape (b, max_steps, V).
    """
    b = enc.memory.shape[0]
    max_steps = model.config.max_len + 1 if max_steps is None else max_steps
    if temperature > 0 and noise is None:
        raise ValueError("sampling needs a noise array")
    logits, state = model.start(enc, torch.full((b,), SOS_ID, dtype=torch.long), props)
    out = [[] for _ in range(b)]
    done = np.zeros(b, dtype=bool)
    for t in range(max_steps):
        scores = _ban(logits).to(torch.float64)
        if temperature > 0:
            scores = scores / temperature + torch.from_numpy(noise[:, t])
        tok = scores.argmax(dim=-1).numpy()
        for i in range(b):
            if not done[i]:
                if tok[i] == EOS_ID:
                    done[i] = True
                else:
                    out[i].append(int(tok[i]))
        if done.all() or t == max_steps - 1:
            break
        feed = torch.from_numpy(np.where(done, PAD_ID, tok)).long()
        logits, state = model.step(state, feed)
    # Rows that never emitted eos are truncated at max_len content tokens.
    return [seq[: model.config.max_len] for seq in out]


@torch.no_grad()
def beam_search(model: Seq2SeqTransformer, enc: Encoded, props: torch.Tensor | None = None,
                beam: int = 5, max_steps: int | None = None) -> list[list[tuple[list[int], float]]]:
    """Per input row, ``beam`` hypotheses as (content ids, summed log-prob), best first."""
    from smilesfix.nn.functional import log_softmax

    b = enc.memory.shape[0]
    max_steps = model.config.max_len + 1 if max_steps is None else max_steps
    V = model.config.vocab_size
    logits, state = model.start(enc, torch.full((b,), SOS_ID, dtype=torch.long), props)
    logp = log_softmax(_ban(logits).to(torch.float64))
    k = min(beam, V - len(BANNED_IDS))
    scores, tok = logp.topk(k, dim=-1)  # (b, k)
    seqs = tok[:, :, None]  # (b, k, t)
    finished = tok == EOS_ID
    state = state.select(torch.arange(b).repeat_interleave(k))
    for _ in range(1, max_steps):
        if bool(finished.all()):
            break
        feed = torch.where(finished, torch.full_like(tok, PAD_ID), tok).reshape(-1)
        logits, state = model.step(state, feed)
        lp = log_softmax(_ban(logits).to(torch.float64)).reshape(b, k, V)
        frozen = torch.full((V,), float("-inf"), dtype=torch.float64)
        frozen[PAD_ID] = 0.0
        lp = torch.where(finished[:, :, None], frozen, lp)
        cand = (scores[:, :, None] + lp).reshape(b, k * V)
        scores, flat = cand.topk(k, dim=-1)
        src = flat // V
        tok = flat % V
        seqs = torch.cat([seqs.gather(1, src[:, :, None].expand(-1, -1, seqs.shape[2])), tok[:, :, None]], dim=2)
        finished = finished.gather(1, src) | (tok == EOS_ID)
        state = state.select((torch.arange(b)[:, None] * k + src).reshape(-1))
    results = []
    for i in range(b):
        hyps = []
        for j in range(k):
            ids = []
            for t in seqs[i, j].tolist():
                if t in (EOS_ID, PAD_ID):
                    break
                ids.append(t)
            hyps.append((ids[: model.config.max_len], float(scores[i, j])))
        hyps.sort(key=lambda h: -h[1])
        results.append(hyps)
    return results
