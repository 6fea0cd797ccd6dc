#pragma once

#include "vgw/tape.hpp"
#include "vgw/tensor.hpp"

namespace vgw {

// ---------------------------------------------------------------------------
// Elementwise. Broadcasting is restricted to identical shapes or a scalar
// (numel == 1) on either side; anything else is a shape error naming both
// shapes. Results are recorded on the current tape when any input
// participates in gradient flow.
// ---------------------------------------------------------------------------
template <class S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <class S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <class S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <class S> Tensor<S> scale(const Tensor<S>& a, double c);
template <class S> Tensor<S> abs(const Tensor<S>& a);
template <class S> Tensor<S> relu(const Tensor<S>& a);
template <class S> Tensor<S> leaky_relu(const Tensor<S>& a, double slope = 0.2);
template <class S> Tensor<S> sigmoid(const Tensor<S>& a);
template <class S> Tensor<S> tanh(const Tensor<S>& a);
template <class S> Tensor<S> square(const Tensor<S>& a);

/// x [N,C,H,W] scaled per-pixel by s [N,1,H,W]; gradients flow to both.
template <class S> Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& s);

// ---------------------------------------------------------------------------
// Reductions (to a scalar tensor of shape {1}).
// ---------------------------------------------------------------------------
template <class S> Tensor<S> sum(const Tensor<S>& a);
template <class S> Tensor<S> mean(const Tensor<S>& a);

// ---------------------------------------------------------------------------
// Structure.
// ---------------------------------------------------------------------------
/// Concatenates along the channel axis (axis 1; axis 0 for rank-1 tensors).
template <class S> Tensor<S> concat_channel(const std::vector<Tensor<S>>& xs);
/// Channels [c0, c0+count) along axis 1.
template <class S> Tensor<S> slice_channel(const Tensor<S>& x, int c0, int count);
/// Spatial window [y0,y0+h) x [x0,x0+w) of an NCHW tensor.
template <class S> Tensor<S> crop(const Tensor<S>& x, int y0, int x0, int h, int w);

// ---------------------------------------------------------------------------
// Neural-net primitives.
// ---------------------------------------------------------------------------
/// x [N,C,H,W], w [O,C,K,K], bias [O]; stride in {1,2}; zero padding `pad`.
/// Output extent (H + 2*pad - K)/stride + 1 must divide exactly.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride,
                 int pad);

/// x [N,F], w [O,F], bias [O] -> [N,O].
template <class S> Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias);

/// Softmax along the channel axis (axis 1; axis 0 for rank-1), max-subtracted.
template <class S> Tensor<S> softmax_channel(const Tensor<S>& x);

/// Per-(sample, channel) normalization to zero mean, unit population std.
template <class S> Tensor<S> normalize_instance(const Tensor<S>& x, double eps = 1e-5);

/// Channel Gram matrix F F^T / (H*W) per sample: [N,C,H,W] -> [N,C,C].
template <class S> Tensor<S> gram_matrix(const Tensor<S>& x);

// ---------------------------------------------------------------------------
// Resampling. All exact-2x; downsample requires even extents.
// ---------------------------------------------------------------------------
template <class S> Tensor<S> upsample_nearest2x(const Tensor<S>& x);
template <class S> Tensor<S> downsample_avg2x(const Tensor<S>& x);
/// Half-pixel bilinear 2x with clamped borders.
template <class S> Tensor<S> upsample_bilinear2x(const Tensor<S>& x);

// Convenience operators for composing graphs.
template <class S> Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <class S> Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <class S> Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }

}  // namespace vgw
