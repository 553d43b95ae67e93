"""Pool-based active-learning annotation loop with noisy-label-robust training.

A task model (linear or one-hidden-layer softmax over pluggable features) is
trained on labels produced by an imperfect annotator -- a simulated noisy
oracle or an LLM behind a chat-completions API.  Pool examples are selected
for annotation by an acquisition strategy (random / entropy / least
confidence / k-means diversity), and training uses per-batch learnable
sample weights derived from the alignment between per-example gradients and
a clean-validation gradient.
"""

__version__ = "0.1.0"
