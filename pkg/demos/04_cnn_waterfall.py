"""A small convolutional network on waterfall gradient patches.

conv 5x5 x 20 (valid) -> ReLU -> 2x2 max-pool -> dense -> softmax, trained
with minibatch SGD and momentum on the summed cross-entropy.
"""
# %%
import os
import tempfile

import numpy as np

from dasdetect.cnn import TrainConfig, load_checkpoint, predict_image, save_checkpoint, train_cnn
from dasdetect.datasets import make_patch_dataset

train = make_patch_dataset(100, 100, seed=0)
test = make_patch_dataset(50, 50, seed=1)
print("patch shape:", train[0].pixels.shape)

# %% Training stops early once every training patch is right.
net = train_cnn(train, TrainConfig(epochs=50, batch_size=128, lr=0.001, momentum=0.9))
for epoch, (loss, acc) in enumerate(net.history, 1):
    if epoch == 1 or epoch % 5 == 0 or epoch == len(net.history):
        print(f"epoch {epoch:2d}  loss {loss:8.2f}  train acc {100 * acc:5.1f}%")

# %%
X = np.stack([p.pixels for p in test])
y = np.array([p.label == "Excavator" for p in test])
print("held-out accuracy:", np.mean((net.predict_proba(X) > 0.5) == y))
for p in test[::25]:
    print("predicted", predict_image(net, p), "truth", p.label)

# %% CNN1 checkpoints carry parameters and momentum buffers.
path = os.path.join(tempfile.mkdtemp(), "net.ckpt")
print("checkpoint bytes:", save_checkpoint(net, path))
back = load_checkpoint(path)
print("identical:", all(np.array_equal(net.params[k], back.params[k]) for k in net.params))
