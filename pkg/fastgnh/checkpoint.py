"""
Self-describing binary container for networks, batches, precomputations
and H-matrices.

Layout::

    FASTGNH 1\\n
    kind: "<kind>"\\n
    <key>: <json value>\\n          (any number of metadata lines)
    arrays: [{"name", "dtype", "shape"}, ...]\\n
    end-header\\n
    <payload>

The payload concatenates the arrays listed in `arrays`, in order, each
little-endian and column-major, with no padding. A network stores one
float64 array per layer (`W0`, `W1`, ...) so the payload is exactly the
weight vector.
"""
import json
import logging
import os

import numpy as np

from .exceptions import FormatError
from .hmatrix.compress import HMatrix, LowRankBlock
from .hmatrix.tree import IndexTree, TreeNode
from .network import Batch, MlpNetwork, WeightLayout
from .precompute import GnhPrecomp, precompute
from .util import digest_arrays


logger = logging.getLogger(__name__)

MAGIC = b"FASTGNH 1\n"
END_HEADER = b"end-header\n"
MAX_HEADER = 1 << 24


def write_container(path, kind, meta, arrays):
    """
    Parameters
    ----------
    kind: str
    meta: dict
        JSON-serializable metadata, one header line per key
    arrays: List[Tuple[str, np.ndarray]]
    """
    descriptors = []
    payloads = []
    for name, array in arrays:
        array = np.asarray(array)
        little = array.astype(array.dtype.newbyteorder("<"), copy=False)
        descriptors.append(
            {"name": name, "dtype": little.dtype.str, "shape": list(little.shape)}
        )
        payloads.append(little.tobytes(order="F"))
    lines = [MAGIC, f"kind: {json.dumps(kind)}\n".encode("ascii")]
    for key, value in meta.items():
        lines.append(f"{key}: {json.dumps(value)}\n".encode("ascii"))
    lines.append(f"arrays: {json.dumps(descriptors)}\n".encode("ascii"))
    lines.append(END_HEADER)
    with open(path, "wb") as fh:
        fh.writelines(lines)
        fh.writelines(payloads)


def _read_header(data):
    if not data.startswith(MAGIC):
        raise FormatError("Not a fastgnh container (bad magic)", offset=0)
    offset = len(MAGIC)
    meta = {}
    while True:
        end = data.find(b"\n", offset)
        if end < 0 or end > MAX_HEADER:
            raise FormatError("Header is not terminated by end-header", offset=offset)
        line = data[offset : end + 1]
        if line == END_HEADER:
            return meta, end + 1
        key, sep, value = line[:-1].decode("ascii", errors="replace").partition(": ")
        if not sep:
            raise FormatError(f"Malformed header line '{line[:40]!r}'", offset=offset)
        try:
            meta[key] = json.loads(value)
        except ValueError:
            raise FormatError(f"Header value for '{key}' is not valid JSON", offset=offset)
        offset = end + 1


def read_container(path, kind=None):
    """
    Returns `(meta, arrays)` where `arrays` maps names to numpy arrays.

    Raises
    ------
    FormatError
        On a bad header, a kind mismatch or a truncated or oversized payload
    """
    with open(path, "rb") as fh:
        data = fh.read()
    meta, offset = _read_header(data)
    if kind is not None and meta.get("kind") != kind:
        raise FormatError(
            f"Expected a '{kind}' container, found '{meta.get('kind')}'", offset=len(MAGIC)
        )
    arrays = {}
    for descriptor in meta.pop("arrays", []):
        dtype = np.dtype(descriptor["dtype"])
        shape = tuple(descriptor["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(data):
            raise FormatError(
                f"Payload of '{descriptor['name']}' is truncated: needs {nbytes} bytes, "
                f"{len(data) - offset} left",
                offset=offset,
            )
        if nbytes == 0:
            array = np.zeros(0, dtype=dtype)
        else:
            array = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
        arrays[descriptor["name"]] = array.reshape(shape, order="F").astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} unexpected trailing bytes", offset=offset)
    return meta, arrays


def _require(meta, keys, path):
    missing = [key for key in keys if key not in meta]
    if missing:
        raise FormatError(f"{path} is missing header keys: {', '.join(missing)}", offset=len(MAGIC))


def save_network(net: MlpNetwork, path):
    meta = {
        "layers": net.n_layers,
        "shapes": [list(w.shape) for w in net.weights],
        "activations": list(net.activations),
        "loss": net.loss,
        "bias_mode": net.bias_mode,
    }
    write_container(path, "network", meta, [(f"W{l}", w) for l, w in enumerate(net.weights)])


def load_network(path) -> MlpNetwork:
    meta, arrays = read_container(path, "network")
    _require(meta, ("layers", "shapes", "activations", "loss", "bias_mode"), path)
    weights = []
    for l, shape in enumerate(meta["shapes"]):
        w = arrays.get(f"W{l}")
        if w is None or list(w.shape) != list(shape):
            raise FormatError(f"Layer {l} payload does not match its header shape", offset=len(MAGIC))
        weights.append(w)
    return MlpNetwork(weights, meta["activations"], meta["loss"], meta["bias_mode"])


def save_batch(batch: Batch, path, **meta):
    write_container(path, "batch", dict(meta, n=batch.n), [("inputs", batch.inputs), ("labels", batch.labels)])


def load_batch(path) -> Batch:
    _, arrays = read_container(path, "batch")
    if "inputs" not in arrays or "labels" not in arrays:
        raise FormatError(f"{path} lacks inputs or labels", offset=len(MAGIC))
    return Batch.create(arrays["inputs"], arrays["labels"])


def problem_digest(net: MlpNetwork, batch: Batch, dtype=np.float64):
    """Cache key of a precomputation: weights, network kinds, batch and storage type"""
    kinds = np.array(list(net.activations) + [net.loss, net.bias_mode, np.dtype(dtype).str])
    return digest_arrays(*net.weights, batch.inputs, batch.labels, kinds)


def save_precomp(pre: GnhPrecomp, path, digest=None):
    meta = {
        "shapes": [list(s) for s in pre.layout.shapes],
        "n": pre.n,
        "dtype": pre.dtype.str,
        "digest": digest,
    }
    arrays = [(f"C{l}", c) for l, c in enumerate(pre.c_tensors)]
    arrays += [(f"X{l}", x) for l, x in enumerate(pre.activations)]
    write_container(path, "precomp", meta, arrays)


def load_precomp(path) -> GnhPrecomp:
    meta, arrays = read_container(path, "precomp")
    _require(meta, ("shapes", "n"), path)
    layers = len(meta["shapes"])
    c_tensors = [np.array(arrays[f"C{l}"]) for l in range(layers)]
    activations = [np.array(arrays[f"X{l}"]) for l in range(layers)]
    return GnhPrecomp(c_tensors, activations, WeightLayout(meta["shapes"]))


def cached_precompute(net, batch, curv, trace, cache_dir, dtype=np.float64, **kwargs):
    """
    `precompute` backed by an on-disk cache keyed by `problem_digest`.
    """
    digest = problem_digest(net, batch, dtype)
    path = os.path.join(cache_dir, f"{digest[:24]}.precomp")
    if os.path.exists(path):
        meta, _ = read_container(path, "precomp")
        if meta.get("digest") == digest:
            logger.info("Loaded precomputation from cache %s", path)
            return load_precomp(path)
    pre = precompute(net, batch, curv, trace, dtype=dtype, **kwargs)
    os.makedirs(cache_dir, exist_ok=True)
    save_precomp(pre, path, digest)
    return pre


def save_hmatrix(hm: HMatrix, path):
    nodes = [
        [n.node_id, n.level, n.start, n.stop, n.parent, list(n.children)]
        for n in hm.tree.nodes
    ]
    meta = {
        "N": hm.size,
        "leaf_size": hm.tree.leaf_size,
        "nodes": nodes,
        "ranks": {str(k): v for k, v in sorted(hm.ranks.items())},
        "capped": sorted(k for k, b in hm.offdiag.items() if b.capped),
        "lam": hm.lam,
        "settings": hm.settings,
        "timings": hm.timings,
    }
    arrays = [("permutation", hm.tree.permutation.astype(np.int64))]
    arrays += [(f"D{k}", block) for k, block in sorted(hm.leaf_blocks.items())]
    for k, block in sorted(hm.offdiag.items()):
        arrays += [(f"U{k}", block.u), (f"V{k}", block.vt)]
    write_container(path, "hmatrix", meta, arrays)


def load_hmatrix(path) -> HMatrix:
    meta, arrays = read_container(path, "hmatrix")
    _require(meta, ("N", "leaf_size", "nodes", "lam"), path)
    nodes = [
        TreeNode(i, level, start, stop, parent, tuple(children))
        for i, level, start, stop, parent, children in meta["nodes"]
    ]
    tree = IndexTree(arrays["permutation"].astype(int), nodes, meta["leaf_size"])
    capped = set(meta.get("capped", []))
    leaves = {n.node_id: arrays[f"D{n.node_id}"] for n in nodes if n.is_leaf}
    offdiag = {
        n.node_id: LowRankBlock(arrays[f"U{n.node_id}"], arrays[f"V{n.node_id}"], n.node_id in capped)
        for n in nodes
        if not n.is_leaf
    }
    return HMatrix(tree, leaves, offdiag, meta["lam"], meta.get("settings"), meta.get("timings"))
