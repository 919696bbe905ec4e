"""Hardware-in-the-loop inference on the simulated MAC rows.

A quantized network's integer dot products are decomposed bit-serially:
unsigned activation bit-planes stream over the word lines while each weight
bit-plane occupies its own bank of 8-cell rows (offset-binary for signed
weights).  Every 8-element segment is one analog MAC — cell reads, charge
share, threshold decode — and the decoded levels are recombined digitally
with shift-add.  With exact decode the result is bit-identical to integer
software inference; temperature and process variation enter only through
the analog row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .array import RowConfig, cell_output, mac_row
from .device import Temperature
from .params import Design
from .tensorio import load_tensors

ROW_CELLS = 8


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the float network.

    kind: 'conv' (3x3, stride 1, valid), 'fc', 'relu', 'maxpool' (2x2).
    Conv/fc layers carry float weights plus the activation scale recorded
    for their output at fixture-build time.
    """

    kind: str
    name: str = ""
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    act_scale: float = 1.0

    def __hash__(self):
        return hash((self.kind, self.name))


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_scale: float = 1.0

    def __hash__(self):
        return hash(tuple(l.name for l in self.layers))


@dataclass(frozen=True)
class QuantLayer:
    kind: str
    name: str = ""
    weight_q: np.ndarray | None = None   # int64
    bias_q: np.ndarray | None = None     # int64, in accumulator units
    w_scale: float = 1.0
    requant: float = 1.0                 # accumulator -> next activation scale
    out_clip: int = 0                    # max next-activation integer (0: none)

    def __hash__(self):
        return hash((self.kind, self.name))


@dataclass(frozen=True)
class QuantizedNetwork:
    layers: tuple
    w_bits: int
    a_bits: int

    def __hash__(self):
        return hash((self.w_bits, self.a_bits, tuple(l.name for l in self.layers)))


@dataclass
class HwInferenceReport:
    accuracy: float
    total_energy: float
    decode_errors: dict      # layer name -> count of mis-decoded segments
    n_images: int
    n_mac_rows: int


def quantize_weights(w: np.ndarray, bits: int) -> tuple[np.ndarray, float]:
    """Symmetric per-layer uniform quantization; |error| <= scale/2 per weight."""
    w = np.asarray(w, dtype=np.float64)
    if not np.isfinite(w).all():
        raise ValueError("weights must be finite")
    if bits == 1:
        scale = float(np.max(np.abs(w))) or 1.0
        wq = np.where(w >= 0, 1, -1).astype(np.int64)
        return wq, scale
    q_max = 2 ** (bits - 1) - 1
    scale = float(np.max(np.abs(w))) / q_max if np.max(np.abs(w)) > 0 else 1.0
    wq = np.clip(np.round(w / scale), -q_max, q_max).astype(np.int64)
    return wq, scale


def quantize(network: NetworkSpec, w_bits: int = 4, a_bits: int = 4) -> QuantizedNetwork:
    """Quantize a float network to integer weights and activation pipelines.

    Activations are unsigned a_bits integers (inputs and post-ReLU values);
    each conv/fc layer's accumulator is rescaled into the next activation
    grid with a recorded multiplier, so the integer forward pass is fully
    deterministic.
    """
    layers = []
    a_clip = 2**a_bits - 1
    in_scale = network.input_scale
    for layer in network.layers:
        if layer.kind in ("conv", "fc"):
            wq, w_scale = quantize_weights(layer.weight, w_bits)
            acc_scale = w_scale * in_scale  # volts... accumulator LSB in real units
            bias_q = (
                np.round(np.asarray(layer.bias, dtype=np.float64) / acc_scale).astype(np.int64)
                if layer.bias is not None
                else None
            )
            out_scale = layer.act_scale / a_clip
            layers.append(
                QuantLayer(
                    kind=layer.kind,
                    name=layer.name,
                    weight_q=wq,
                    bias_q=bias_q,
                    w_scale=w_scale,
                    requant=acc_scale / out_scale,
                    out_clip=a_clip,
                )
            )
            in_scale = out_scale
        else:
            layers.append(QuantLayer(kind=layer.kind, name=layer.name))
    return QuantizedNetwork(layers=tuple(layers), w_bits=w_bits, a_bits=a_bits)


def dequantize_error_bound(layer: LayerSpec, qlayer: QuantLayer) -> float:
    """Max |w - w_scale * wq| over the layer (the scale/2 contract)."""
    return float(np.max(np.abs(layer.weight - qlayer.w_scale * qlayer.weight_q)))


# -----------------------------------------------------------------------
# Bit-serial row mapping
# -----------------------------------------------------------------------

@dataclass(frozen=True)
class RowMapping:
    """How one dot product of length L maps onto 8-cell rows.

    segments: tuples of input-index ranges (start, stop), one per row;
    weight_planes: number of offset-binary weight bit planes;
    plane_shift: additive recombination weight per plane (2^j, or 2 for
    1-bit weights); offset: subtracted multiple of sum(activations).
    """

    length: int
    w_bits: int
    segments: tuple
    weight_planes: int
    plane_shifts: tuple
    offset: int

    def recombine(self, plane_segment_levels, act_plane_sums, act_shifts) -> int:
        """Shift-add the decoded levels back into the signed dot product.

        plane_segment_levels[j][i][s]: decoded level for weight plane j,
        activation plane i, segment s; act_plane_sums[i]: sum of activation
        plane i (for the offset-binary correction).
        """
        total = 0
        for i, a_shift in enumerate(act_shifts):
            for j in range(self.weight_planes):
                seg_sum = sum(plane_segment_levels[j][i])
                total += a_shift * self.plane_shifts[j] * seg_sum
            total -= a_shift * self.offset * act_plane_sums[i]
        return total


def build_row_mapping(length: int, w_bits: int) -> RowMapping:
    segments = tuple(
        (start, min(start + ROW_CELLS, length)) for start in range(0, length, ROW_CELLS)
    )
    if w_bits == 1:
        return RowMapping(length, 1, segments, 1, (2,), 1)
    return RowMapping(
        length,
        w_bits,
        segments,
        w_bits,
        tuple(2**j for j in range(w_bits)),
        2 ** (w_bits - 1),
    )


def _weight_planes(wq: np.ndarray, w_bits: int) -> np.ndarray:
    """Offset-binary bit planes, shape (planes, ...) of 0/1 ints."""
    if w_bits == 1:
        off = ((wq + 1) // 2).astype(np.int64)  # {-1,1} -> {0,1}
        return off[None, ...]
    off = wq + 2 ** (w_bits - 1)
    planes = [(off >> j) & 1 for j in range(w_bits)]
    return np.stack(planes).astype(np.int64)


def _activation_planes(a: np.ndarray, a_bits: int) -> np.ndarray:
    planes = [(a >> i) & 1 for i in range(a_bits)]
    return np.stack(planes).astype(np.int64)


def hw_dot(
    inputs,
    weights,
    design: Design,
    cfg: RowConfig,
    temp: Temperature,
    w_bits: int = 4,
    a_bits: int = 4,
    offsets=None,
) -> int:
    """One integer dot product through the analog MAC rows.

    ``inputs`` are unsigned (< 2**a_bits), ``weights`` signed integers
    representable in w_bits.  ``offsets`` optionally carries one FeFET
    threshold offset per physical cell, shaped (weight_planes, n_segments,
    8).  Exact decode makes the result equal the integer dot product.
    """
    a = np.asarray(inputs, dtype=np.int64)
    w = np.asarray(weights, dtype=np.int64)
    if a.shape != w.shape or a.ndim != 1:
        raise ValueError("inputs and weights must be equal-length vectors")
    if (a < 0).any() or (a >= 2**a_bits).any():
        raise ValueError("inputs must be unsigned a_bits integers")
    mapping = build_row_mapping(len(a), w_bits)
    w_planes = _weight_planes(w, w_bits)
    a_planes = _activation_planes(a, a_bits)
    act_shifts = [2**i for i in range(a_bits)]

    levels = [
        [[0] * len(mapping.segments) for _ in range(a_bits)]
        for _ in range(mapping.weight_planes)
    ]
    for j in range(mapping.weight_planes):
        for i in range(a_bits):
            for s, (lo, hi) in enumerate(mapping.segments):
                row_in = list(a_planes[i, lo:hi]) + [0] * (ROW_CELLS - (hi - lo))
                row_w = list(w_planes[j, lo:hi]) + [0] * (ROW_CELLS - (hi - lo))
                row_off = list(offsets[j][s]) if offsets is not None else None
                res = mac_row(design, row_in, row_w, temp, cfg, offsets=row_off)
                levels[j][i][s] = res.decoded
    act_sums = [int(a_planes[i].sum()) for i in range(a_bits)]
    return mapping.recombine(levels, act_sums, act_shifts)


# -----------------------------------------------------------------------
# Vectorized analog matmul (the path `evaluate` uses)
# -----------------------------------------------------------------------

class _RowBank:
    """Per-(weight-plane, segment) cell voltages for a weight matrix.

    With zero variation all cells of a configuration are identical and the
    bank reduces to four scalars per temperature; with per-cell offsets it
    holds the input-high/input-low voltage and energy of every physical
    cell.  Results are exactly those of mac_row over the same cells.
    """

    def __init__(self, design, cfg, temp, wq, w_bits, sigma, rng):
        self.cfg = cfg
        self.gamma = cfg.c_o / (cfg.n_cells * cfg.c_o + cfg.c_acc)
        self.c_total = cfg.n_cells * cfg.c_o + cfg.c_acc
        planes = _weight_planes(wq, w_bits)         # (P, L, M)
        p, l, m = planes.shape
        n_seg = math.ceil(l / ROW_CELLS)
        self.planes = planes
        self.n_seg = n_seg
        padded = np.zeros((p, n_seg * ROW_CELLS, m), dtype=np.int64)
        padded[:, :l, :] = planes
        self.stored = padded                         # 0/1 stored bits
        if sigma > 0.0:
            offs = rng.normal(0.0, sigma, size=padded.shape)
        else:
            offs = np.zeros(padded.shape)
        # Padded positions beyond L never see an active input and their
        # stored bit is 0; keep their offsets for faithful leak handling.
        self.v1 = np.empty(padded.shape)
        self.v0 = np.empty(padded.shape)
        self.e1 = np.empty(padded.shape)
        self.e0 = np.empty(padded.shape)
        uniq: dict = {}
        it = np.nditer(padded, flags=["multi_index"])
        for stored in it:
            idx = it.multi_index
            key = (int(stored), round(float(offs[idx]), 12))
            if key not in uniq:
                s_bit, off = key
                uniq[key] = (
                    cell_output(design, 1, s_bit, temp, cfg, off),
                    cell_output(design, 0, s_bit, temp, cfg, off),
                )
            (v1, e1), (v0, e0) = uniq[key]
            self.v1[idx] = v1
            self.v0[idx] = v0
            self.e1[idx] = e1
            self.e0[idx] = e0
        self.thresholds = np.asarray(cfg.decode_thresholds)

    def matmul(self, a_planes):
        """a_planes: (A, N, L) 0/1.  Returns (levels, true_counts, energy).

        levels[p][i]: (N, M) decoded MAC levels for weight plane p and
        activation plane i; true_counts the exact popcounts for decode-error
        audit; energy the total Joules across all rows evaluated.
        """
        n_a, n_img, l = a_planes.shape
        pad_l = self.stored.shape[1]
        a_pad = np.zeros((n_a, n_img, pad_l), dtype=np.int64)
        a_pad[:, :, :l] = a_planes
        levels = []
        true_counts = []
        energy = 0.0
        for p in range(self.stored.shape[0]):
            lv_p, tc_p = [], []
            for i in range(n_a):
                e_sum = np.zeros((n_img, self.stored.shape[2]))
                k_true = np.zeros((n_img, self.stored.shape[2]), dtype=np.int64)
                seg_levels = np.zeros((n_img, self.stored.shape[2]), dtype=np.int64)
                for s in range(self.n_seg):
                    sl = slice(s * ROW_CELLS, (s + 1) * ROW_CELLS)
                    a_seg = a_pad[i, :, sl].astype(np.float64)       # (N, 8)
                    v1 = self.v1[p, sl, :]                            # (8, M)
                    v0 = self.v0[p, sl, :]
                    vo_sum = a_seg @ v1 + (1.0 - a_seg) @ v0          # (N, M)
                    v_acc = self.gamma * vo_sum
                    seg_levels += np.searchsorted(self.thresholds, v_acc, side="right")
                    k_true += a_pad[i, :, sl] @ self.stored[p, sl, :]
                    # cell read energies plus the charge-share loss
                    e_sum += a_seg @ self.e1[p, sl, :] + (1.0 - a_seg) @ self.e0[p, sl, :]
                    vo_sq = a_seg @ (v1 * v1) + (1.0 - a_seg) @ (v0 * v0)
                    e_sum += 0.5 * self.cfg.c_o * vo_sq - 0.5 * self.c_total * v_acc * v_acc
                lv_p.append(seg_levels)
                tc_p.append(k_true)
                energy += float(e_sum.sum())
            levels.append(lv_p)
            true_counts.append(tc_p)
        return levels, true_counts, energy


def _hw_matmul(a_int, wq, bank, w_bits, a_bits):
    """Analog integer matmul: a_int (N, L) unsigned, wq (L, M) signed.

    Returns (acc (N, M) int64, decode_errors, energy, n_rows).
    """
    a_planes = _activation_planes(a_int, a_bits)     # (A, N, L)
    levels, true_counts, energy = bank.matmul(a_planes)
    n, m = a_int.shape[0], wq.shape[1]
    acc = np.zeros((n, m), dtype=np.int64)
    errors = 0
    mapping = build_row_mapping(wq.shape[0], w_bits)
    act_sums = a_planes.sum(axis=2)                  # (A, N)
    for p, shift in enumerate(mapping.plane_shifts):
        for i in range(a_bits):
            acc += (2**i) * shift * levels[p][i]
            errors += int((levels[p][i] != true_counts[p][i]).sum())
    for i in range(a_bits):
        acc -= (2**i) * mapping.offset * act_sums[i][:, None]
    n_rows = mapping.weight_planes * a_bits * bank.n_seg * n * m
    return acc, errors, energy, n_rows


# -----------------------------------------------------------------------
# Forward passes
# -----------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """x: (N, C, H, W) -> (N, out_h*out_w, C*kh*kw), stride 1, valid."""
    n, c, h, w = x.shape
    out_h, out_w = h - kh + 1, w - kw + 1
    cols = np.empty((n, out_h * out_w, c * kh * kw), dtype=x.dtype)
    idx = 0
    for dy in range(kh):
        for dx in range(kw):
            patch = x[:, :, dy : dy + out_h, dx : dx + out_w]
            cols[:, :, idx * c : (idx + 1) * c] = patch.transpose(0, 2, 3, 1).reshape(
                n, out_h * out_w, c
            )
            idx += 1
    return cols


def _conv_weight_matrix(wq: np.ndarray) -> np.ndarray:
    """(out_c, in_c, kh, kw) -> (in_c*kh*kw, out_c) matching _im2col order."""
    out_c, in_c, kh, kw = wq.shape
    return wq.transpose(2, 3, 1, 0).reshape(kh * kw * in_c, out_c)


def int_forward(qnet: QuantizedNetwork, images: np.ndarray, matmul=None, stats=None):
    """Integer forward pass; ``matmul`` swaps in the analog path.

    images: (N, 1, 8, 8) unsigned integers already on the input grid.
    Returns logits (N, 10) int64.
    """
    x = images.astype(np.int64)
    shape_hw = x.shape[2:]
    for layer in qnet.layers:
        if layer.kind == "conv":
            n, c, h, w = x.shape
            kh, kw = layer.weight_q.shape[2:]
            cols = _im2col(x, kh, kw)                       # (N, P, L)
            wmat = _conv_weight_matrix(layer.weight_q)      # (L, out_c)
            flat = cols.reshape(-1, cols.shape[2])
            if matmul is None:
                acc = flat @ wmat
            else:
                acc = matmul(layer.name, flat, wmat)
            out_h, out_w = h - kh + 1, w - kw + 1
            acc = acc.reshape(n, out_h * out_w, -1)
            if layer.bias_q is not None:
                acc = acc + layer.bias_q[None, None, :]
            x = acc.transpose(0, 2, 1).reshape(n, -1, out_h, out_w)
            x = _requantize(x, layer)
        elif layer.kind == "fc":
            n = x.shape[0]
            flat = x.reshape(n, -1)
            if matmul is None:
                acc = flat @ layer.weight_q.T
            else:
                acc = matmul(layer.name, flat, layer.weight_q.T.copy())
            if layer.bias_q is not None:
                acc = acc + layer.bias_q[None, :]
            x = acc  # final layer: raw accumulator logits
        elif layer.kind == "relu":
            x = np.maximum(x, 0)
        elif layer.kind == "maxpool":
            n, c, h, w = x.shape
            x = x.reshape(n, c, h // 2, 2, w // 2, 2).max(axis=(3, 5))
        else:
            raise ValueError(f"unknown layer kind {layer.kind}")
    return x


def _requantize(acc: np.ndarray, layer: QuantLayer) -> np.ndarray:
    """Accumulator -> next unsigned activation grid (deterministic)."""
    scaled = np.floor(acc * layer.requant + 0.5).astype(np.int64)
    return np.clip(scaled, 0, layer.out_clip)


def hw_forward(
    qnet: QuantizedNetwork,
    images: np.ndarray,
    design: Design,
    cfg: RowConfig,
    temp: Temperature,
    sigma: float = 0.0,
    seed: int = 0,
):
    """Hardware-path logits plus per-layer decode errors and energy.

    Every conv/fc dot product routes through the simulated rows at the
    given temperature; ``sigma`` > 0 samples one FeFET threshold offset per
    physical cell (deterministic for a seed).
    """
    rng = np.random.default_rng(seed)
    banks = {}
    for layer in qnet.layers:
        if layer.kind == "conv":
            wmat = _conv_weight_matrix(layer.weight_q)
            banks[layer.name] = _RowBank(design, cfg, temp, wmat, qnet.w_bits, sigma, rng)
        elif layer.kind == "fc":
            banks[layer.name] = _RowBank(
                design, cfg, temp, layer.weight_q.T.copy(), qnet.w_bits, sigma, rng
            )
    decode_errors = {name: 0 for name in banks}
    stats = {"energy": 0.0, "rows": 0}

    def matmul(name, a_int, wq):
        acc, errors, energy, n_rows = _hw_matmul(
            a_int, wq, banks[name], qnet.w_bits, qnet.a_bits
        )
        decode_errors[name] += errors
        stats["energy"] += energy
        stats["rows"] += n_rows
        return acc

    logits = int_forward(qnet, images, matmul=matmul)
    return logits, decode_errors, stats["energy"], stats["rows"]


def evaluate(
    qnet: QuantizedNetwork,
    images: np.ndarray,
    labels: np.ndarray,
    design: Design,
    cfg: RowConfig,
    temp: Temperature,
    sigma: float = 0.0,
    seed: int = 0,
) -> HwInferenceReport:
    """Full hardware-in-the-loop inference: accuracy, energy, decode audit."""
    logits, decode_errors, energy, n_rows = hw_forward(
        qnet, images, design, cfg, temp, sigma=sigma, seed=seed
    )
    pred = logits.argmax(axis=1)
    accuracy = float((pred == labels).mean())
    return HwInferenceReport(
        accuracy=accuracy,
        total_energy=energy,
        decode_errors=decode_errors,
        n_images=len(labels),
        n_mac_rows=n_rows,
    )


# -----------------------------------------------------------------------
# Shipped fixtures
# -----------------------------------------------------------------------

def load_network_fixture() -> NetworkSpec:
    """The shipped desk-scale digit CNN (trained offline)."""
    data = load_tensors(resources.files("fecim.data").joinpath("digits_cnn.tc"))
    layers = (
        LayerSpec("conv", "conv1", data["conv1.w"], data["conv1.b"],
                  float(data["conv1.act_scale"][0])),
        LayerSpec("relu", "relu1"),
        LayerSpec("maxpool", "pool1"),
        LayerSpec("conv", "conv2", data["conv2.w"], data["conv2.b"],
                  float(data["conv2.act_scale"][0])),
        LayerSpec("relu", "relu2"),
        LayerSpec("fc", "fc", data["fc.w"], data["fc.b"], 1.0),
    )
    return NetworkSpec(layers=layers, input_scale=float(data["input_scale"][0]))


def load_digits_fixture() -> tuple[np.ndarray, np.ndarray]:
    """(images (N,1,8,8) uint8 on the 0..15 input grid, labels (N,) uint8)."""
    data = load_tensors(resources.files("fecim.data").joinpath("digits_test.tc"))
    return data["images"].astype(np.int64), data["labels"].astype(np.int64)
