"""Small decoder-only transformer for next-symbol prediction.

Architecture choices (the benchmark leaves them open, so these are ours):
pre-norm blocks, learned positional embeddings, GELU MLP at 4x width, a
prepended BOS token so position t predicts symbol t from strictly earlier
symbols, and a zero-initialized output head so the untrained model starts at
the uniform distribution (first-batch loss is exactly ln V).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dimension {dim} not divisible by heads {heads}")
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        shape = (b, t, self.heads, d // self.heads)
        q, k, v = (z.view(shape).transpose(1, 2) for z in (q, k, v))
        attn = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        x = x + self.proj(attn.transpose(1, 2).reshape(b, t, d))
        return x + self.mlp(self.ln2(x))


class CausalTransformer(nn.Module):
    def __init__(self, vocab: int, dim: int, heads: int, layers: int, max_len: int):
        super().__init__()
        self.vocab = vocab
        self.max_len = max_len
        self.bos = vocab  # extra input-only token id
        self.tok = nn.Embedding(vocab + 1, dim)
        self.pos = nn.Embedding(max_len, dim)
        self.blocks = nn.ModuleList(Block(dim, heads) for _ in range(layers))
        self.ln_out = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, vocab)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b, t = tokens.shape
        if t > self.max_len:
            raise ValueError(f"sequence length {t} exceeds context window {self.max_len}")
        x = self.tok(tokens) + self.pos(torch.arange(t, device=tokens.device))
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_out(x))

    def inputs_for(self, symbols: torch.Tensor) -> torch.Tensor:
        """Shift right and prepend BOS: position t sees symbols < t."""
        b, t = symbols.shape
        bos = torch.full((b, 1), self.bos, dtype=symbols.dtype, device=symbols.device)
        return torch.cat([bos, symbols[:, :-1]], dim=1)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def uniform_loss(vocab: int) -> float:
    """Cross-entropy of the uniform predictor, the zero-init starting point."""
    return math.log(vocab)
