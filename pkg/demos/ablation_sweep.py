"""Switch off components one at a time and compare held-out accuracy.

Each variant trains from the same seed on the same corpus for 10 epochs, so
differences come from the architecture alone. At this budget the variant
without the graph is far ahead: the graph layers mix each token with its
neighbours and need many more epochs to separate begin and inside tags (the
README discusses this). Takes about a minute and a half on one CPU core.
"""
from dgif.config import TrainConfig
from dgif.data_io import SyntheticSpec, generate_synthetic
from dgif.evaluation import evaluate
from dgif.model import ablate
from dgif.training import train

corpus = generate_synthetic(SyntheticSpec(samples=250, seed=0)).samples
train_set, test_set = corpus[:200], corpus[200:]
base = TrainConfig(d=64, epochs=10)

for flags in ({}, {"disable_lar": True}, {"disable_lar": True, "disable_lsi": True},
              {"disable_lar": True, "disable_lsi": True, "disable_gil": True}):
    config = base.replace(**flags)
    model = train(train_set, config).model
    report = evaluate(test_set, model.predict(test_set))
    print(f"{ablate(config).describe()}\n    slot_f1 {report.slot_f1:.3f}  intent_acc {report.intent_acc:.3f}"
          f"  overall {report.overall_acc:.3f}")
