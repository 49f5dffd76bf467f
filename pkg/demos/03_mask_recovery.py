"""Recovering a hidden 64-bit mask from a bit-match reward."""

from evoconn import Trainer, build_config, extract

cfg = build_config("maskmatch", {"bits": 64, "target_seed": 3},
                   optimizer={"population_size": 256}, run={"seed": 0})
t = Trainer(cfg)
target = t.task.target
for g in range(50):
    returns = t.evaluate()
    t.apply(returns)
    mask = extract(t.state)
    matched = sum(int((a.to_dense() == b.to_dense()).sum()) for a, b in zip(mask.blocks(), target.blocks()))
    print(f"generation {g}: mean reward {returns.mean():6.2f}, extracted mask matches {matched}/64 bits")
    if mask == target:
        print("target recovered")
        break
