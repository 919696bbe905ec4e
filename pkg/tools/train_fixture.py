#!/usr/bin/env python3
"""Train the desk-scale digit CNN offline and write the shipped fixtures.

Architecture: conv(8@3x3) -> relu -> maxpool2 -> conv(16@3x3) -> relu -> fc(10)
on the scikit-learn 8x8 digits set (first 1000 train / remaining 797 test).
Plain numpy SGD; weights, activation scales, and the test split are frozen
into src/fecim/data/.
"""
import sys

sys.path.insert(0, "src")

import numpy as np
from sklearn.datasets import load_digits

from fecim.tensorio import save_tensors

rng = np.random.default_rng(20240701)

digits = load_digits()
images = digits.images.astype(np.float64)  # (1797, 8, 8), values 0..16
labels = digits.target.astype(np.int64)

train_x, train_y = images[:1000], labels[:1000]
test_x, test_y = images[1000:], labels[1000:]

# Input quantization grid: 4-bit unsigned, scale 16/15.
INPUT_SCALE = 16.0 / 15.0
x_train = np.clip(np.round(train_x / INPUT_SCALE), 0, 15)
x_test = np.clip(np.round(test_x / INPUT_SCALE), 0, 15)

# Float training happens on the quantized input grid (in real units).
xf_train = (x_train * INPUT_SCALE / 16.0)[:, None, :, :]  # normalize to ~[0,1]
xf_test = (x_test * INPUT_SCALE / 16.0)[:, None, :, :]


def im2col(x, kh, kw):
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((n, oh * ow, c * kh * kw))
    idx = 0
    for dy in range(kh):
        for dx in range(kw):
            patch = x[:, :, dy : dy + oh, dx : dx + ow]
            cols[:, :, idx * c : (idx + 1) * c] = patch.transpose(0, 2, 3, 1).reshape(n, oh * ow, c)
            idx += 1
    return cols


class ConvNet:
    def __init__(self):
        self.w1 = rng.normal(0, 0.35, (8, 1, 3, 3))
        self.b1 = np.zeros(8)
        self.w2 = rng.normal(0, 0.12, (16, 8, 3, 3))
        self.b2 = np.zeros(16)
        self.w3 = rng.normal(0, 0.25, (10, 16))
        self.b3 = np.zeros(10)

    @staticmethod
    def _convmat(w):
        out_c, in_c, kh, kw = w.shape
        return w.transpose(2, 3, 1, 0).reshape(kh * kw * in_c, out_c)

    def forward(self, x, train=False):
        n = x.shape[0]
        c1 = im2col(x, 3, 3)                       # (n, 36, 9)
        a1 = c1 @ self._convmat(self.w1) + self.b1  # (n, 36, 8)
        a1 = a1.reshape(n, 6, 6, 8).transpose(0, 3, 1, 2)
        r1 = np.maximum(a1, 0)
        p1 = r1.reshape(n, 8, 3, 2, 3, 2).max(axis=(3, 5))  # (n, 8, 3, 3)
        c2 = im2col(p1, 3, 3)                      # (n, 1, 72)
        a2 = c2 @ self._convmat(self.w2) + self.b2  # (n, 1, 16)
        r2 = np.maximum(a2, 0).reshape(n, 16)
        logits = r2 @ self.w3.T + self.b3
        if train:
            self.cache = (x, c1, a1, r1, p1, c2, a2, r2)
        return logits

    def backward(self, logits, y, lr):
        x, c1, a1, r1, p1, c2, a2, r2 = self.cache
        n = x.shape[0]
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), y] -= 1.0
        d_logits = p / n
        g_w3 = d_logits.T @ r2
        g_b3 = d_logits.sum(axis=0)
        d_r2 = d_logits @ self.w3
        d_a2 = (d_r2 * (r2 > 0)).reshape(n, 1, 16)
        wm2 = self._convmat(self.w2)
        g_wm2 = np.einsum("npl,npo->lo", c2, d_a2)
        g_b2 = d_a2.sum(axis=(0, 1))
        d_c2 = d_a2 @ wm2.T                         # (n, 1, 72)
        # col2im for the 3x3 pool output (3x3 spatial, single position)
        d_p1 = np.zeros_like(p1)
        idx = 0
        for dy in range(3):
            for dx in range(3):
                d_p1[:, :, dy, dx] += d_c2[:, 0, idx * 8 : (idx + 1) * 8]
                idx += 1
        # maxpool backward
        d_r1 = np.zeros_like(r1)
        r1v = r1.reshape(n, 8, 3, 2, 3, 2)
        m = r1v.max(axis=(3, 5), keepdims=True)
        mask = (r1v == m)
        mask = mask / np.maximum(mask.sum(axis=(3, 5), keepdims=True), 1)
        d_r1 = (mask * d_p1[:, :, :, None, :, None]).reshape(n, 8, 6, 6)
        d_a1 = d_r1 * (a1 > 0)
        d_a1_cols = d_a1.transpose(0, 2, 3, 1).reshape(n, 36, 8)
        wm1 = self._convmat(self.w1)
        g_wm1 = np.einsum("npl,npo->lo", c1, d_a1_cols)
        g_b1 = d_a1_cols.sum(axis=(0, 1))

        self.w3 -= lr * g_w3
        self.b3 -= lr * g_b3
        self.w2 -= lr * g_wm2.reshape(3, 3, 8, 16).transpose(3, 2, 0, 1)
        self.b2 -= lr * g_b2
        self.w1 -= lr * g_wm1.reshape(3, 3, 1, 8).transpose(3, 2, 0, 1)
        self.b1 -= lr * g_b1


net = ConvNet()
n_train = len(xf_train)
for epoch in range(60):
    order = rng.permutation(n_train)
    lr = 0.5 if epoch < 40 else 0.1
    for start in range(0, n_train, 32):
        idx = order[start : start + 32]
        logits = net.forward(xf_train[idx], train=True)
        net.backward(logits, train_y[idx], lr)
    if (epoch + 1) % 10 == 0:
        acc_tr = (net.forward(xf_train).argmax(1) == train_y).mean()
        acc_te = (net.forward(xf_test).argmax(1) == test_y).mean()
        print(f"epoch {epoch+1}: train {acc_tr:.4f} test {acc_te:.4f}", flush=True)

# Activation scales for quantization: high percentile of the training
# activations at each quantization point (input is exact by construction).
c1 = im2col(xf_train, 3, 3)
a1 = np.maximum(c1 @ net._convmat(net.w1) + net.b1, 0)
scale1 = float(np.quantile(a1, 0.999))
n = xf_train.shape[0]
p1 = a1.reshape(n, 6, 6, 8).transpose(0, 3, 1, 2)
p1 = p1.reshape(n, 8, 3, 2, 3, 2).max(axis=(3, 5))
a2 = np.maximum(im2col(p1, 3, 3) @ net._convmat(net.w2) + net.b2, 0)
scale2 = float(np.quantile(a2, 0.999))

print(f"act scales: conv1 {scale1:.4f} conv2 {scale2:.4f}")

save_tensors(
    "src/fecim/data/digits_cnn.tc",
    {
        "conv1.w": net.w1,
        "conv1.b": net.b1,
        "conv1.act_scale": np.array([scale1]),
        "conv2.w": net.w2,
        "conv2.b": net.b2,
        "conv2.act_scale": np.array([scale2]),
        "fc.w": net.w3,
        "fc.b": net.b3,
        "input_scale": np.array([INPUT_SCALE / 16.0]),
    },
)
save_tensors(
    "src/fecim/data/digits_test.tc",
    {
        "images": x_test[:, None, :, :].astype(np.uint8),
        "labels": test_y.astype(np.uint8),
    },
)
print("float test accuracy:", (net.forward(xf_test).argmax(1) == test_y).mean())
print("fixtures written")
