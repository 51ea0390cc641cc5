from .data import Dataset, balanced_split, load_cifar10_bin, load_idx, mnist_sample, read_idx
from .estimator import CNNClassifier
from .forward import evaluate_accuracy, fold_batchnorm, forward, logits, predict
from .layers import FC, BatchNorm, Conv, Dropout, MaxPool, NetworkSpec, ReLU, Softmax, architecture, cifar_cnn, mnist_cnn
from .train import EarlyStopping, TrainConfig, to_torch, train
from .weights import WeightStore, init_weights, load_weights, save_weights

__all__ = [
    "architecture",
    "balanced_split",
    "BatchNorm",
    "cifar_cnn",
    "CNNClassifier",
    "Conv",
    "Dataset",
    "Dropout",
    "EarlyStopping",
    "evaluate_accuracy",
    "FC",
    "fold_batchnorm",
    "forward",
    "init_weights",
    "load_cifar10_bin",
    "load_idx",
    "load_weights",
    "logits",
    "MaxPool",
    "mnist_cnn",
    "mnist_sample",
    "NetworkSpec",
    "predict",
    "read_idx",
    "ReLU",
    "save_weights",
    "Softmax",
    "to_torch",
    "train",
    "TrainConfig",
    "WeightStore",
]
