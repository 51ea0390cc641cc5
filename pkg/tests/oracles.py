"""Slow, independent reference implementations used as test oracles."""
import math

import numpy as np

from poinfer.nn import FC, BatchNorm, Conv, Dropout, MaxPool, ReLU, Softmax


def naive_conv(image, W, b):
    """Same-padded stride-1 convolution with explicit loops; image is (H, W, C)."""
    H, Wd, C = image.shape
    k = W.shape[0]
    r = k // 2
    out = np.zeros((H, Wd, W.shape[3]))
    for n in range(W.shape[3]):
        for y in range(H):
            for x in range(Wd):
                s = b[n]
                for dy in range(k):
                    for dx in range(k):
                        yy, xx = y + dy - r, x + dx - r
                        if 0 <= yy < H and 0 <= xx < Wd:
                            for c in range(C):
                                s += image[yy, xx, c] * W[dy, dx, c, n]
                out[y, x, n] = s
    return out


def naive_fc(x, W, b):
    return np.array([sum(x[i] * W[i, j] for i in range(W.shape[0])) + b[j] for j in range(W.shape[1])])


def naive_logits(net, weights, image):
    h = np.asarray(image, dtype=np.float64)
    for layer in net.layers:
        if isinstance(layer, Conv):
            p = weights[layer.name]
            h = naive_conv(h, p["weight"].astype(np.float64), p["bias"].astype(np.float64))
        elif isinstance(layer, FC):
            p = weights[layer.name]
            h = naive_fc(h.reshape(-1), p["weight"].astype(np.float64), p["bias"].astype(np.float64))
        elif isinstance(layer, ReLU):
            h = np.where(h > 0, h, 0.0)
        elif isinstance(layer, MaxPool):
            s = layer.size
            out = np.empty((h.shape[0] // s, h.shape[1] // s, h.shape[2]))
            for y in range(out.shape[0]):
                for x in range(out.shape[1]):
                    for c in range(out.shape[2]):
                        out[y, x, c] = max(h[y * s + i, x * s + j, c] for i in range(s) for j in range(s))
            h = out
        elif isinstance(layer, BatchNorm):
            p = weights[layer.name]
            h = np.array([[[(h[y, x, c] - p["mean"][c]) / math.sqrt(p["var"][c] + layer.eps) * p["gamma"][c] + p["beta"][c]
                            for c in range(h.shape[2])] for x in range(h.shape[1])] for y in range(h.shape[0])])
        elif isinstance(layer, (Dropout, Softmax)):
            pass
    return h
