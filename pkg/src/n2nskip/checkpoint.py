"""JSON checkpoints: dense weights as flat decimal arrays, masks as coordinates."""

import json

import numpy as np

from n2nskip.net import Network, SkipConn


def _coords(mask):
    return [[int(r), int(c)] for r, c in zip(*np.nonzero(mask))]


def _mask(coords, shape):
    m = np.zeros(shape, dtype=bool)
    if coords:
        idx = np.asarray(coords, dtype=np.int64)
        m[idx[:, 0], idx[:, 1]] = True
    return m


def _flat(w):
    return [float(v) for v in np.asarray(w, dtype=np.float64).ravel()]


def to_dict(net):
    return {
        "layer_dims": [int(d) for d in net.layer_dims],
        "k": int(net.k),
        "layers": [
            {"weights": _flat(w), "bias": _flat(b), "mask": _coords(m)}
            for w, b, m in zip(net.seq_weights, net.biases, net.seq_masks)
        ],
        "skips": [
            {
                "from": int(s.from_layer),
                "to": int(s.to_layer),
                "weights": _flat(s.weight),
                "mask": _coords(s.mask),
            }
            for s in net.skips
        ],
    }


def from_dict(doc):
    dims = tuple(int(d) for d in doc["layer_dims"])
    weights, masks, biases = [], [], []
    for i, layer in enumerate(doc["layers"]):
        shape = (dims[i + 1], dims[i])
        weights.append(np.array(layer["weights"], dtype=np.float64).reshape(shape))
        biases.append(np.array(layer["bias"], dtype=np.float64))
        masks.append(_mask(layer["mask"], shape))
    skips = []
    for s in doc.get("skips", []):
        shape = (dims[s["to"]], dims[s["from"]])
        skips.append(
            SkipConn(
                int(s["from"]),
                int(s["to"]),
                np.array(s["weights"], dtype=np.float64).reshape(shape),
                _mask(s["mask"], shape),
            )
        )
    return Network(dims, int(doc["k"]), weights, masks, biases, skips)


def dumps(net):
    return json.dumps(to_dict(net), sort_keys=True, separators=(",", ":"))


def save(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(net))
        fh.write("\n")


def load(path):
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh))
