import math

import torch
import torch.nn as nn


class TwoLayerMLP(nn.Module):
    """Linear, LayerNorm, GELU, Linear"""

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(input_dim, hidden_dim),
            nn.LayerNorm(hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, output_dim),
        )

    def forward(self, input: torch.Tensor) -> torch.Tensor:
        return self.mlp(input)


class FeedForward(nn.Module):
    """Position-wise feed-forward sublayer"""

    def __init__(self, dim: int, multiplier: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, multiplier * dim),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(multiplier * dim, dim),
        )

    def forward(self, input: torch.Tensor) -> torch.Tensor:
        return self.net(input)


class RelativeAttention(nn.Module):
    """
    Multi-head attention where every query/key pair carries an embedding of
    their relative pose. The pair embedding adds a per-head bias to the
    logits and a term to the attended values.

    query: (..., Q, D), key: (..., K, D) or (K, D), pair: (Q, K, D).
    """

    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.to_query = nn.Linear(dim, dim)
        self.to_key = nn.Linear(dim, dim)
        self.to_value = nn.Linear(dim, dim)
        self.pair_bias = nn.Linear(dim, heads)
        self.pair_value = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        return x.unflatten(-1, (self.heads, self.head_dim)).transpose(-3, -2)

    def forward(
        self, query: torch.Tensor, key: torch.Tensor, pair: torch.Tensor
    ) -> torch.Tensor:
        q = self._split(self.to_query(query))
        k = self._split(self.to_key(key))
        v = self._split(self.to_value(key))
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        logits = logits + self.pair_bias(pair).permute(2, 0, 1)
        weights = self.dropout(torch.softmax(logits, dim=-1))
        pair_values = self.pair_value(pair).unflatten(
            -1, (self.heads, self.head_dim)
        )
        attended = weights @ v + torch.einsum(
            '...hqk,qkhd->...hqd', weights, pair_values
        )

        return self.out(attended.transpose(-3, -2).flatten(-2))


class AttentionBlock(nn.Module):
    """Pre-norm residual attention followed by a feed-forward sublayer"""

    def __init__(self, dim: int, heads: int, dropout: float, ff: int = 4):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attention = RelativeAttention(dim, heads, dropout)
        self.ff_norm = nn.LayerNorm(dim)
        self.ff = FeedForward(dim, ff, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, pair: torch.Tensor) -> torch.Tensor:
        normed = self.norm(x)
        x = x + self.dropout(self.attention(normed, normed, pair))

        return x + self.dropout(self.ff(self.ff_norm(x)))


class DenoiserBlock(nn.Module):
    """Agent-to-map cross-attention, agent self-attention, feed-forward"""

    def __init__(self, dim: int, heads: int, dropout: float, ff: int = 4):
        super().__init__()
        self.map_norm = nn.LayerNorm(dim)
        self.map_attention = RelativeAttention(dim, heads, dropout)
        self.agent_norm = nn.LayerNorm(dim)
        self.agent_attention = RelativeAttention(dim, heads, dropout)
        self.ff_norm = nn.LayerNorm(dim)
        self.ff = FeedForward(dim, ff, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        x: torch.Tensor,
        map_tokens: torch.Tensor,
        agent_map_pair: torch.Tensor,
        agent_pair: torch.Tensor,
    ) -> torch.Tensor:
        if map_tokens.shape[-2] > 0:
            x = x + self.dropout(
                self.map_attention(
                    self.map_norm(x), map_tokens, agent_map_pair
                )
            )
        normed = self.agent_norm(x)
        x = x + self.dropout(self.agent_attention(normed, normed, agent_pair))

        return x + self.dropout(self.ff(self.ff_norm(x)))


def step_embedding(steps: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer diffusion steps"""

    half = dim // 2
    frequencies = torch.exp(
        -math.log(10000.0)
        * torch.arange(half, dtype=torch.float64, device=steps.device)
        / half
    )
    angles = steps.to(torch.float64)[..., None] * frequencies

    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
