"""Simulated edge devices: local shards, per-device autoencoders, and latent
export through a sink (in-process hub or wire client)."""

from __future__ import annotations

import socket
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import (
    NotFittedError,
    ShapeMismatchError,
    SinkFailure,
    TooManyDevicesError,
)
from .train import TrainConfig, train_autoencoder
from .wire import ACK_ACCEPTED, LatentRecord, encode_record, record_from_tensor
from .zoo import build_autoencoder


def partition_dataset(data, n_devices, mode="iid", rng=None):
    """Disjoint covering shards.

    iid: shuffled near-equal split (sizes differ by at most 1);
    label-shard: stable sort by label, contiguous cuts (non-iid locality).
    """
    if n_devices < 1 or n_devices > len(data):
        raise TooManyDevicesError(
            f"cannot split {len(data)} samples across {n_devices} devices")
    if mode == "iid":
        if rng is None:
            rng = np.random.default_rng(0)
        order = rng.permutation(len(data))
    elif mode == "label-shard":
        order = np.argsort(data.labels, kind="stable")
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return [data.subset(chunk) for chunk in np.array_split(order, n_devices)]


class DeviceNode:
    """One edge device: a local shard, a device-unique encoder after fit, and
    a decoder held back for out-of-band registration at the server."""

    def __init__(self, device_id, train_data, test_data=None):
        self.device_id = int(device_id)
        self.data = {"train": train_data, "test": test_data}
        self._pair = None
        self._trained = None
        self._next_record_id = 0
        self.fitted = False

    def fit_autoencoder(self, cr, cfg: TrainConfig):
        """Build and train this device's autoencoder on its local shard only.

        The effective seed mixes the config seed with the device id, so
        devices never share weights. Refitting replaces the weights; record
        ids keep counting.
        """
        local = self.data["train"]
        if local is None or len(local) == 0:
            raise NotFittedError(f"device {self.device_id} has no local data")
        pair = build_autoencoder(local.sample_shape, cr)
        seed = int(np.random.SeedSequence([cfg.seed, self.device_id]).generate_state(1)[0])
        trained, history = train_autoencoder(
            pair, local.images, TrainConfig(
                epochs=cfg.epochs, batch_size=cfg.batch_size,
                optimizer=cfg.optimizer, lr=cfg.lr, seed=seed,
                patience=cfg.patience))
        self._pair = pair
        self._trained = trained
        self.fitted = True
        return history

    @property
    def latent_shape(self):
        self._require_fit()
        return self._pair.latent_shape

    def _require_fit(self):
        if not self.fitted:
            raise NotFittedError(f"device {self.device_id} is not fitted")

    def export_decoder(self):
        """Decoder network for server-side registration. This path is
        out-of-band; decoders never ride the per-sample channel."""
        self._require_fit()
        return self._trained.decoder

    def encoder_network(self):
        self._require_fit()
        return self._trained.encoder

    def encode(self, sample, label=None) -> LatentRecord:
        """Run the encoder in inference mode and wrap the result."""
        self._require_fit()
        sample = np.asarray(sample, dtype=np.float32)
        if tuple(sample.shape) != tuple(self.data["train"].sample_shape):
            raise ShapeMismatchError(
                f"sample {sample.shape} vs encoder input "
                f"{self.data['train'].sample_shape}")
        latent = self._trained.encoder.forward(sample, training=False)
        rec = record_from_tensor(self.device_id, self._next_record_id, label, latent)
        self._next_record_id += 1
        return rec

    def export_latents(self, split, sink) -> int:
        """Encode every sample of a split and push the records in dataset
        order; returns the emitted count. A sink failure aborts the export
        and reports how many records made it out."""
        self._require_fit()
        data = self.data[split]
        if data is None:
            raise ValueError(f"device {self.device_id} holds no {split!r} split")
        emitted = 0
        for i in range(len(data)):
            rec = self.encode(data.images[i], int(data.labels[i]))
            try:
                sink.push(rec)
            except Exception as exc:
                raise SinkFailure(
                    f"sink failed after {emitted} records: {exc}",
                    emitted=emitted) from exc
            emitted += 1
        return emitted


def make_devices(train, test, n_devices, mode="iid", rng=None):
    """Partition both splits the same way and wrap them in DeviceNodes."""
    if rng is None:
        rng = np.random.default_rng(0)
    train_shards = partition_dataset(train, n_devices, mode, rng)
    test_shards = (partition_dataset(test, n_devices, mode, rng)
                   if test is not None and len(test) >= n_devices else [None] * n_devices)
    return [DeviceNode(i, tr, te)
            for i, (tr, te) in enumerate(zip(train_shards, test_shards))]


@dataclass
class HubSink:
    """In-process sink: serializes each record and hands the frame bytes to
    the hub, so the wire codec is exercised even without a socket."""

    hub: object
    split: str

    def push(self, record):
        ack = self.hub.ingest(encode_record(record), self.split)
        if ack != ACK_ACCEPTED:
            raise SinkFailure(f"hub rejected record with ack 0x{ack:02x}")


class WireClientSink:
    """TCP sink: one frame out, one ack byte back."""

    def __init__(self, host, port, timeout=10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)

    def push(self, record):
        self._sock.sendall(encode_record(record))
        ack = self._sock.recv(1)
        if len(ack) != 1:
            raise SinkFailure("connection closed before ack")
        if ack[0] != ACK_ACCEPTED:
            raise SinkFailure(f"server rejected record with ack 0x{ack[0]:02x}")

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
