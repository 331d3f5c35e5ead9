# Generalizing to an unseen base model: meta-train an evaluator
# initialization over several per-model tasks, then adapt it to a new model
# with a few gradient steps on a small labeled probe set.  Prediction on the
# new model's target workloads stays label-free.

import numpy as np

from driftgauge import (
    GaussianWorkloadSpec,
    MetaInstance,
    MetaTask,
    ReptileConfig,
    SWDConfig,
    adapt_to_model,
    compute_delta,
    gen_gaussian_workload,
    mae,
    meta_train,
    predict,
    synthetic_accuracy_fn,
)

D = 12
source = gen_gaussian_workload(
    GaussianWorkloadSpec(dim=D, count=1500, mean=np.zeros(D), stddev=np.ones(D)), seed=1
)
cfg = SWDConfig(seed=9)
rng = np.random.default_rng(2)

# a shared pool of sampled workloads; every model is scored on the same pool
pool = []
for i in range(80):
    spec = GaussianWorkloadSpec(
        dim=D, count=int(rng.integers(300, 1200)),
        mean=float(rng.uniform(0, 3.5)) * np.eye(D)[0],
        stddev=float(rng.uniform(0.9, 1.4)) * np.ones(D),
    )
    pool.append(compute_delta(source, gen_gaussian_workload(spec, seed=500 + i), cfg))


def model_task(task_id, bias, idxs, tag):
    # each "base model" differs by an accuracy offset on the shared function
    return [
        MetaInstance(
            delta=pool[j],
            accuracy=synthetic_accuracy_fn(pool[j], bias, noise_seed=tag * 1000 + j,
                                           noise_scale=0.01),
            task_id=task_id, sample_set_id=f"s{j}", sample_set_size=100,
        )
        for j in idxs
    ]


tasks = [
    MetaTask(task_id=f"model{k}", instances=model_task(f"model{k}", b, range(48), k))
    for k, b in enumerate(rng.uniform(-1.0, 1.0, 12))
]
rcfg = ReptileConfig(seed=4)  # 5 inner steps, 600 rounds by default
theta, norm = meta_train(tasks, 5, rcfg)
print(f"meta-trained on {len(tasks)} models x {len(tasks[0].instances)} sampled workloads")

# a new model arrives: 32 probe workloads with known accuracy, the rest unseen
new_bias = 1.3
probe = model_task("new", new_bias, range(0, 32), 99)
held_out = model_task("new", new_bias, range(48, 80), 99)

before = mae([predict(theta, norm, i.delta) for i in held_out],
             [i.accuracy for i in held_out])
adapted = adapt_to_model(theta, norm, probe, rcfg)
after = mae([predict(adapted, norm, i.delta) for i in held_out],
            [i.accuracy for i in held_out])
print(f"held-out MAE on the new model: {before:.4f} before, {after:.4f} after "
      f"({(before - after) / before:.0%} reduction from {rcfg.inner_steps} inner steps)")
