#include "winmatch/stem.hpp"

#include <cmath>

namespace winmatch {

MbBlockParams MbBlockParams::init(int c, Rng& rng) {
  MbBlockParams p;
  p.m1 = MbconvParams::init(c, c, 1, rng);
  p.m2 = MbconvParams::init(c, c, 1, rng);
  return p;
}

TransBlockParams TransBlockParams::init(int c_in, int c_out, Rng& rng) {
  TransBlockParams p;
  p.mb = MbconvParams::init(c_in, c_out, 2, rng);
  // Slightly contractive: keeps descriptor magnitudes small enough for the
  // raw dot-product similarities downstream to stay in softmax's linear range.
  p.pool_proj.w = Tensor::randn({c_in, c_out}, rng, 0.5 / std::sqrt(double(c_in)), true);
  p.pool_proj.b = Tensor::zeros({c_out}, true);
  return p;
}

StemParams StemParams::init(const std::vector<int>& channels, Rng& rng) {
  if (channels.size() != 4) throw ParamError("stem: expected four channel widths");
  for (int c : channels)
    if (c <= 0) throw ParamError("stem: channel widths must be positive");
  StemParams p;
  p.channels = channels;
  p.entry.w = Tensor::randn({3, 3, 1, channels[0]}, rng, 1.0 / 3.0, true);
  p.entry.b = Tensor::zeros({channels[0]}, true);
  p.entry_norm.gamma = Tensor::full({channels[0]}, 1.0, true);
  p.entry_norm.beta = Tensor::zeros({channels[0]}, true);
  p.t2 = TransBlockParams::init(channels[0], channels[0], rng);
  p.stage1 = {MbBlockParams::init(channels[0], rng)};
  p.t4 = TransBlockParams::init(channels[0], channels[1], rng);
  p.stage2 = {MbBlockParams::init(channels[1], rng), MbBlockParams::init(channels[1], rng)};
  p.t8 = TransBlockParams::init(channels[1], channels[2], rng);
  p.stage3 = {MbBlockParams::init(channels[2], rng), MbBlockParams::init(channels[2], rng),
              MbBlockParams::init(channels[2], rng)};
  p.t16 = TransBlockParams::init(channels[2], channels[3], rng);
  p.merge_proj.w =
      Tensor::randn({channels[3], channels[2]}, rng, 0.5 / std::sqrt(double(channels[3])), true);
  p.merge_proj.b = Tensor::zeros({channels[2]}, true);
  p.merge_norm.gamma = Tensor::full({channels[2]}, 1.0, true);
  p.merge_norm.beta = Tensor::zeros({channels[2]}, true);
  p.merge_mb = MbconvParams::init(channels[2], channels[2], 1, rng);
  return p;
}

namespace {

void collect_mbconv(const MbconvParams& p, std::vector<Tensor>& out) {
  out.push_back(p.expand.w);
  out.push_back(p.expand.b);
  out.push_back(p.dw.w);
  out.push_back(p.dw.b);
  out.push_back(p.project.w);
  out.push_back(p.project.b);
}

void collect_trans(const TransBlockParams& p, std::vector<Tensor>& out) {
  collect_mbconv(p.mb, out);
  out.push_back(p.pool_proj.w);
  out.push_back(p.pool_proj.b);
}

}  // namespace

std::vector<Tensor> StemParams::parameters() const {
  std::vector<Tensor> out{entry.w, entry.b, entry_norm.gamma, entry_norm.beta};
  collect_trans(t2, out);
  for (const auto& b : stage1) {
    collect_mbconv(b.m1, out);
    collect_mbconv(b.m2, out);
  }
  collect_trans(t4, out);
  for (const auto& b : stage2) {
    collect_mbconv(b.m1, out);
    collect_mbconv(b.m2, out);
  }
  collect_trans(t8, out);
  for (const auto& b : stage3) {
    collect_mbconv(b.m1, out);
    collect_mbconv(b.m2, out);
  }
  collect_trans(t16, out);
  out.push_back(merge_proj.w);
  out.push_back(merge_proj.b);
  out.push_back(merge_norm.gamma);
  out.push_back(merge_norm.beta);
  collect_mbconv(merge_mb, out);
  return out;
}

void StemParams::zero_all() {
  for (Tensor& t : parameters()) std::fill(t.data->begin(), t.data->end(), 0.0);
}

Tensor mb_block(const Tensor& f, const MbBlockParams& p, PadMode pad) {
  Tensor y = add(f, mbconv(f, p.m1, pad));
  return add(y, mbconv(y, p.m2, pad));
}

Tensor trans_block(const Tensor& f, const TransBlockParams& p, PadMode pad) {
  if (f.shape[0] % 2 || f.shape[1] % 2)
    throw PartitionError("trans_block: extents must be even, got " + shape_str(f.shape));
  Tensor conv_path = mbconv(f, p.mb, pad);
  Tensor pool_path = pointwise(maxpool2x2(f), p.pool_proj.w, p.pool_proj.b);
  return add(conv_path, pool_path);
}

PyramidFeatures stem_forward(const Tensor& image, const StemParams& p, PadMode pad) {
  if (image.rank() != 3 || image.shape[2] != 1)
    throw ShapeError("stem_forward: expected {H, W, 1}, got " + shape_str(image.shape));
  if (image.shape[0] % 16 || image.shape[1] % 16)
    throw PartitionError("stem_forward: extents must be multiples of 16, got " +
                         shape_str(image.shape));

  Tensor e = silu(layer_norm_channels(conv3x3(image, p.entry.w, p.entry.b, 1, pad),
                                      p.entry_norm.gamma, p.entry_norm.beta));
  Tensor d2 = trans_block(e, p.t2, pad);
  Tensor s1 = d2;
  for (const auto& b : p.stage1) s1 = mb_block(s1, b, pad);

  Tensor d4 = trans_block(s1, p.t4, pad);
  Tensor s2 = d4;
  for (const auto& b : p.stage2) s2 = mb_block(s2, b, pad);

  Tensor d8 = trans_block(s2, p.t8, pad);
  Tensor s3 = d8;
  for (const auto& b : p.stage3) s3 = mb_block(s3, b, pad);

  Tensor d16 = trans_block(s3, p.t16, pad);

  Tensor up = upsample_nearest2x(d16);
  Tensor merged = add(pointwise(up, p.merge_proj.w, p.merge_proj.b), s3);
  Tensor normed = layer_norm_channels(merged, p.merge_norm.gamma, p.merge_norm.beta);
  Tensor eighth = add(merged, mbconv(normed, p.merge_mb, pad));

  PyramidFeatures out;
  out.half = s1;
  out.eighth = eighth;
  return out;
}

}  // namespace winmatch
