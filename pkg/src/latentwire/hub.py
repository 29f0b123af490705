"""Server side: framed ingestion, latent aggregation, classifier training
and serving, and per-device decoder reconstruction."""

from __future__ import annotations

import socketserver
import threading

import numpy as np

from .data import LabeledDataset
from .errors import (
    HeterogeneousShapeError,
    MissingDecoderError,
    NoClassifierError,
    ShapeMismatchError,
)
from .network import Network
from .train import evaluate, train_classifier
from .wire import (
    ACK_ACCEPTED,
    ACK_DUPLICATE,
    FrameScanner,
    UNLABELED,
    WireDecodeError,
    decode_record,
)
from .zoo import build_vanilla_classifier, infer_shapes


class Hub:
    """Aggregation point. The latent store is append-only during ingestion
    and guarded by a lock, so concurrent connections cannot lose or
    duplicate records."""

    def __init__(self):
        self._lock = threading.Lock()
        self.store = []  # (LatentRecord, split), ingestion order
        self.seen = set()  # (device_id, record_id), global
        self.counters = {}  # device_id -> accepted count
        self.decoders = {}  # device_id -> Network
        self.classifier = None

    def register_decoder(self, device_id, decoder: Network):
        """Out-of-band decoder registration; re-registration replaces."""
        infer_shapes(decoder.spec)  # spec must shape-check
        with self._lock:
            self.decoders[int(device_id)] = decoder

    def ingest(self, frame_bytes, split) -> int:
        """Decode one frame and append the record; returns the ack code.

        Invalid frames and duplicate (device id, record id) pairs leave the
        store untouched.
        """
        try:
            record = decode_record(frame_bytes)
        except WireDecodeError as err:
            return err.ack
        key = (record.device_id, record.record_id)
        with self._lock:
            if key in self.seen:
                return ACK_DUPLICATE
            self.seen.add(key)
            self.store.append((record, split))
            self.counters[record.device_id] = self.counters.get(record.device_id, 0) + 1
        return ACK_ACCEPTED

    def records(self, split):
        with self._lock:
            return [rec for rec, s in self.store if s == split]

    def assemble(self, split, num_classes=None) -> LabeledDataset:
        """Latent records of one split as a dataset, in ingestion order."""
        records = self.records(split)
        if not records:
            return LabeledDataset(np.zeros((0, 1), np.float32), np.zeros(0, np.int64),
                                  num_classes or 1, split)
        shape = records[0].shape
        for rec in records:
            if rec.shape != shape:
                raise HeterogeneousShapeError(
                    f"latents of shape {rec.shape} and {shape} in split {split!r}")
        images = np.stack([rec.tensor for rec in records])
        labels = np.array([rec.label for rec in records], dtype=np.int64)
        if (labels == UNLABELED).any():
            raise ShapeMismatchError("split contains unlabeled records")
        if num_classes is None:
            num_classes = int(labels.max()) + 1
        return LabeledDataset(images, labels, num_classes, split)

    def train_classifier(self, model, cfg, num_classes=None):
        """Fit a classifier on the assembled train split; `model` is a
        family name ("A"/"B") or an explicit ModelSpec."""
        data = self.assemble("train", num_classes)
        if len(data) == 0:
            raise NoClassifierError("no train-split latents ingested")
        if isinstance(model, str):
            model = build_vanilla_classifier(data.sample_shape, model, data.num_classes)
        net, history = train_classifier(model, data, cfg)
        self.classifier = net
        return history

    def predict(self, record) -> int:
        if self.classifier is None:
            raise NoClassifierError("train a classifier before predicting")
        if record.shape != self.classifier.input_shape:
            raise ShapeMismatchError(
                f"record {record.shape} vs classifier input "
                f"{self.classifier.input_shape}")
        out = self.classifier.forward(record.tensor, training=False)
        return int(np.argmax(out))

    def reconstruct(self, record) -> np.ndarray:
        decoder = self.decoders.get(record.device_id)
        if decoder is None:
            raise MissingDecoderError(f"no decoder for device {record.device_id}")
        if tuple(record.shape) != tuple(decoder.input_shape):
            raise ShapeMismatchError(
                f"record {record.shape} vs decoder input {decoder.input_shape}")
        return decoder.forward(record.tensor, training=False)

    def evaluate(self, split, num_classes=None):
        """Accuracy of the stored classifier over one assembled split."""
        if self.classifier is None:
            raise NoClassifierError("train a classifier before evaluating")
        return evaluate(self.classifier, self.assemble(split, num_classes))


def serve_stream(hub, chunks, split, ack_writer=None):
    """Ingestion loop over an ordered byte source.

    Scans frames out of the stream, ingests each, and emits one ack byte per
    frame attempt; garbage between frames is skipped by magic resync.
    Returns (accepted, rejected) counts.
    """
    scanner = FrameScanner()
    accepted = rejected = 0
    for chunk in chunks:
        if not chunk:
            break
        for event in scanner.feed(chunk):
            ack = hub.ingest(event.span, split) if event.ok else event.error.ack
            if ack == ACK_ACCEPTED:
                accepted += 1
            else:
                rejected += 1
            if ack_writer is not None:
                ack_writer(bytes([ack]))
    return accepted, rejected


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        def chunks():
            while True:
                data = self.request.recv(65536)
                if not data:
                    return
                yield data

        try:
            serve_stream(self.server.hub, chunks(), self.server.split,
                         ack_writer=self.request.sendall)
        except (ConnectionError, OSError):
            pass  # that connection only


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class HubServer:
    """TCP front end; each connection feeds frames for one split."""

    def __init__(self, hub, split="train", host="127.0.0.1", port=0):
        self._server = _Server((host, port), _Handler)
        self._server.hub = hub
        self._server.split = split
        self._thread = None

    @property
    def address(self):
        return self._server.server_address

    def start(self):
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
