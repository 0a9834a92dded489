"""Label names become vectors, and representations get pulled into their span.

Verbalizes a handful of slot tags, embeds them with a fresh label encoder,
then projects a random token vector onto the resulting label space and
checks that the leftover part is orthogonal to every label.
"""
import numpy as np

from dgif.data_io import build_label_vocab
from dgif.encoder import EncoderConfig, init_encoder
from dgif.label_space import SLOT, LabelSet, embed_labels, inject, l_inter
from dgif.numerics import Tensor

tags = ["O", "B-fromloc.city_name", "I-fromloc.city_name", "B-timeRange", "B-music_genre"]
labels = LabelSet.from_names(SLOT, tags)
for name, words in zip(labels.names, labels.verbalized):
    print(f"{name:<22} -> {' '.join(words)}")

cfg = EncoderConfig(d=16, blocks=1, heads=2, max_len=8, pool_dim=8, ff_dim=32)
vocab = build_label_vocab(labels)
params = init_encoder(cfg, len(vocab), np.random.default_rng(0))
space = embed_labels(labels, vocab, params, cfg, ridge=0.0)
print("\nGram matrix of the label embeddings:")
print(np.array2string(space.gram.data, precision=2, suppress_small=True))

x = Tensor(np.random.default_rng(1).normal(size=cfg.d))
proj = inject(x, space)
residual = x.data - proj.projected.data
print("\ncoefficients on each label:", np.round(proj.coefficients.data, 3))
print(f"|x| = {np.linalg.norm(x.data):.3f}, |projection| = {np.linalg.norm(proj.projected.data):.3f}")
print("largest residual dot product with a label:", f"{np.max(np.abs(space.basis.data @ residual)):.1e}")

# inter-label similarity term for an utterance whose gold tags are O and B-timeRange
print("\ninter-label regularizer for {O, B-timeRange}:", round(l_inter(space, [0, 3]).item(), 4))
