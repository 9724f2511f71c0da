"""The optimum batch size, in miniature.

Train the shallow digit network at a fixed learning rate for a few batch
sizes: too small and the gradient noise wrecks training entirely, too large
and the run lands in sharper minima that generalize worse.  The test
accuracy peaks in between.

This demo trades steps for speed; the full experiment (10000 steps, 5
repeats, the complete grid) is the `fig4_batch_peak` preset:

    sgdlab preset fig4_batch_peak --out-dir runs/

Run:  python demos/demo_batch_size_peak.py     (~2 minutes)
"""

from sgdlab import models, optim
from sgdlab.experiments import TaskSpec, _seed_for
from sgdlab.numkit import RngStream

task = TaskSpec()  # 1000 images, 14x14, 100 hidden units
pair = task.build()

print(f"task: N={task.train_n}, d={task.d}, hidden={task.hidden}; "
      f"eps=1.0, m=0.9, 4000 steps, one seed\n")
print(f"{'batch':>6} {'train acc':>10} {'test acc':>9}")
for batch in (10, 50, 100, 200, 1000):
    seed = _seed_for(0, batch, 0)
    model = models.init_mlp(task.d, task.hidden, 10, RngStream(seed).split(2))
    config = optim.TrainConfig(epsilon=1.0, batch=batch, steps=4000, seed=seed,
                               momentum=0.9, eval_every=4000)
    try:
        _, trajectory = optim.train(model, pair, config, mode="momentum")
        last = trajectory[-1]
        print(f"{batch:6d} {last.train_acc:10.3f} {last.test_acc:9.3f}")
    except optim.DivergedError as err:
        print(f"{batch:6d}    diverged at step {err.step}")

print(
    "\nThe B=10 run never escapes chance level, B=1000 trails the interior"
    "\npeak: noise scale g = eps*N/(B*(1-m)) is the knob both ends turn."
)
