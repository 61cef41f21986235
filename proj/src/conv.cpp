#include "winmatch/conv.hpp"

#include <cmath>

namespace winmatch {

namespace {

void check_map(const Tensor& f, const char* op) {
  if (f.rank() != 3)
    throw ShapeError(std::string(op) + ": feature map must be {h, w, c}, got " +
                     shape_str(f.shape));
}

void check_stride(const Tensor& f, int stride, const char* op) {
  if (stride != 1 && stride != 2)
    throw ParamError(std::string(op) + ": stride must be 1 or 2");
  if (stride == 2 && (f.shape[0] % 2 || f.shape[1] % 2))
    throw PartitionError(std::string(op) + ": stride 2 needs even extents, got " +
                         shape_str(f.shape));
}

// Resolves a (possibly out-of-range) source coordinate. Returns false when a
// zero-padded tap falls outside the map.
inline bool resolve(int v, int extent, PadMode pad, int& out) {
  if (v >= 0 && v < extent) {
    out = v;
    return true;
  }
  if (pad == PadMode::Zero) return false;
  out = ((v % extent) + extent) % extent;
  return true;
}

Tensor make_conv_output(const Tensor& f, int stride, int c_out,
                        std::vector<Tensor> parents) {
  std::vector<int> shape{f.shape[0] / stride, f.shape[1] / stride, c_out};
  bool rg = false;
  if (grad_enabled())
    for (const Tensor& p : parents)
      if (p.requires_grad) rg = true;
  Tensor out = Tensor::zeros(shape, rg);
  if (rg) {
    out.node = std::make_shared<Node>();
    out.node->parents = std::move(parents);
  }
  return out;
}

}  // namespace

MbconvParams MbconvParams::init(int c_in, int c_out, int stride, Rng& rng,
                                int expansion) {
  const int c_mid = c_in * expansion;
  MbconvParams p;
  p.expand.w = Tensor::randn({c_in, c_mid}, rng, 1.0 / std::sqrt(double(c_in)), true);
  p.expand.b = Tensor::zeros({c_mid}, true);
  p.dw.w = Tensor::randn({3, 3, c_mid}, rng, 1.0 / 3.0, true);
  p.dw.b = Tensor::zeros({c_mid}, true);
  // Damped projection keeps residual branches near-identity at init, so
  // stacked blocks do not amplify feature magnitudes into softmax saturation.
  p.project.w = Tensor::randn({c_mid, c_out}, rng, 0.1 / std::sqrt(double(c_mid)), true);
  p.project.b = Tensor::zeros({c_out}, true);
  p.stride = stride;
  return p;
}

void MbconvParams::zero() {
  for (Tensor* t : {&expand.w, &expand.b, &dw.w, &dw.b, &project.w, &project.b})
    std::fill(t->data->begin(), t->data->end(), 0.0);
}

Tensor mbconv(const Tensor& f, const MbconvParams& p, PadMode pad) {
  Tensor expanded = silu(pointwise(f, p.expand.w, p.expand.b));
  Tensor mixed = silu(depthwise3x3(expanded, p.dw.w, p.dw.b, p.stride, pad));
  return pointwise(mixed, p.project.w, p.project.b);
}

Tensor conv3x3(const Tensor& f, const Tensor& w, const Tensor& b, int stride,
               PadMode pad) {
  check_map(f, "conv3x3");
  check_stride(f, stride, "conv3x3");
  if (w.rank() != 4 || w.shape[0] != 3 || w.shape[1] != 3 || w.shape[2] != f.shape[2])
    throw ShapeError("conv3x3: kernel " + shape_str(w.shape) + " does not fit map " +
                     shape_str(f.shape));
  const int h = f.shape[0], wid = f.shape[1], ci = f.shape[2], co = w.shape[3];
  if (b.rank() != 1 || b.shape[0] != co)
    throw ShapeError("conv3x3: bias " + shape_str(b.shape) + " vs c_out " + std::to_string(co));

  Tensor out = make_conv_output(f, stride, co, {f, w, b});
  const int ho = h / stride, wo = wid / stride;
  const auto& wd = *w.data;
  for (int i = 0; i < ho; ++i)
    for (int j = 0; j < wo; ++j) {
      double* orow = &(*out.data)[(static_cast<std::size_t>(i) * wo + j) * co];
      for (int o = 0; o < co; ++o) orow[o] = b.at(o);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int y, x;
          if (!resolve(i * stride + dy, h, pad, y)) continue;
          if (!resolve(j * stride + dx, wid, pad, x)) continue;
          const std::size_t kbase =
              ((static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * ci) * co;
          for (int a = 0; a < ci; ++a) {
            const double fv = f.at(y, x, a);
            if (fv == 0.0) continue;
            const double* krow = &wd[kbase + static_cast<std::size_t>(a) * co];
            for (int o = 0; o < co; ++o) orow[o] += fv * krow[o];
          }
        }
    }
  if (out.node)
    out.node->backprop = [h, wid, ci, co, ho, wo, stride, pad](const Tensor& o) {
      const Tensor& f = o.node->parents[0];
      const Tensor& w = o.node->parents[1];
      const Tensor& b = o.node->parents[2];
      const auto& wd = *w.data;
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const double* grow = &(*o.grad)[(static_cast<std::size_t>(i) * wo + j) * co];
          if (b.requires_grad)
            for (int oc = 0; oc < co; ++oc) (*b.grad)[oc] += grow[oc];
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int y, x;
              if (!resolve(i * stride + dy, h, pad, y)) continue;
              if (!resolve(j * stride + dx, wid, pad, x)) continue;
              const std::size_t kbase =
                  ((static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * ci) * co;
              for (int a = 0; a < ci; ++a) {
                const std::size_t fi = (static_cast<std::size_t>(y) * wid + x) * ci + a;
                const double fv = (*f.data)[fi];
                const double* krow = &wd[kbase + static_cast<std::size_t>(a) * co];
                double facc = 0.0;
                for (int oc = 0; oc < co; ++oc) {
                  const double g = grow[oc];
                  if (w.requires_grad)
                    (*w.grad)[kbase + static_cast<std::size_t>(a) * co + oc] += fv * g;
                  facc += krow[oc] * g;
                }
                if (f.requires_grad) (*f.grad)[fi] += facc;
              }
            }
        }
    };
  return out;
}

Tensor depthwise3x3(const Tensor& f, const Tensor& k, const Tensor& b, int stride,
                    PadMode pad) {
  check_map(f, "depthwise3x3");
  check_stride(f, stride, "depthwise3x3");
  const int h = f.shape[0], wid = f.shape[1], c = f.shape[2];
  if (k.rank() != 3 || k.shape[0] != 3 || k.shape[1] != 3 || k.shape[2] != c)
    throw ShapeError("depthwise3x3: kernel " + shape_str(k.shape) + " does not fit map " +
                     shape_str(f.shape));
  if (b.rank() != 1 || b.shape[0] != c)
    throw ShapeError("depthwise3x3: bias " + shape_str(b.shape) + " vs c " + std::to_string(c));

  Tensor out = make_conv_output(f, stride, c, {f, k, b});
  const int ho = h / stride, wo = wid / stride;
  for (int i = 0; i < ho; ++i)
    for (int j = 0; j < wo; ++j) {
      double* orow = &(*out.data)[(static_cast<std::size_t>(i) * wo + j) * c];
      for (int a = 0; a < c; ++a) orow[a] = b.at(a);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int y, x;
          if (!resolve(i * stride + dy, h, pad, y)) continue;
          if (!resolve(j * stride + dx, wid, pad, x)) continue;
          const double* frow = &(*f.data)[(static_cast<std::size_t>(y) * wid + x) * c];
          const double* krow = &(*k.data)[(static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * c];
          for (int a = 0; a < c; ++a) orow[a] += frow[a] * krow[a];
        }
    }
  if (out.node)
    out.node->backprop = [h, wid, c, ho, wo, stride, pad](const Tensor& o) {
      const Tensor& f = o.node->parents[0];
      const Tensor& k = o.node->parents[1];
      const Tensor& b = o.node->parents[2];
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const double* grow = &(*o.grad)[(static_cast<std::size_t>(i) * wo + j) * c];
          if (b.requires_grad)
            for (int a = 0; a < c; ++a) (*b.grad)[a] += grow[a];
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int y, x;
              if (!resolve(i * stride + dy, h, pad, y)) continue;
              if (!resolve(j * stride + dx, wid, pad, x)) continue;
              const std::size_t fbase = (static_cast<std::size_t>(y) * wid + x) * c;
              const std::size_t kbase =
                  (static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * c;
              for (int a = 0; a < c; ++a) {
                if (k.requires_grad) (*k.grad)[kbase + a] += (*f.data)[fbase + a] * grow[a];
                if (f.requires_grad) (*f.grad)[fbase + a] += (*k.data)[kbase + a] * grow[a];
              }
            }
        }
    };
  return out;
}

Tensor pointwise(const Tensor& f, const Tensor& w, const Tensor& b) {
  check_map(f, "pointwise");
  if (w.rank() != 2 || w.shape[0] != f.shape[2])
    throw ShapeError("pointwise: weight " + shape_str(w.shape) + " does not fit map " +
                     shape_str(f.shape));
  const int h = f.shape[0], wid = f.shape[1];
  Tensor flat = reshape(f, {h * wid, f.shape[2]});
  Tensor mixed = add_bias_rows(matmul(flat, w), b);
  return reshape(mixed, {h, wid, w.shape[1]});
}

Tensor maxpool2x2(const Tensor& f) {
  check_map(f, "maxpool2x2");
  const int h = f.shape[0], w = f.shape[1], c = f.shape[2];
  if (h % 2 || w % 2)
    throw PartitionError("maxpool2x2: extents must be even, got " + shape_str(f.shape));
  bool rg = grad_enabled() && f.requires_grad;
  Tensor out = Tensor::zeros({h / 2, w / 2, c}, rg);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  for (int i = 0; i < h / 2; ++i)
    for (int j = 0; j < w / 2; ++j)
      for (int a = 0; a < c; ++a) {
        double best = -1e308;
        std::size_t best_idx = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t fi =
                (static_cast<std::size_t>(2 * i + dy) * w + (2 * j + dx)) * c + a;
            if ((*f.data)[fi] > best) {
              best = (*f.data)[fi];
              best_idx = fi;
            }
          }
        const std::size_t oi = (static_cast<std::size_t>(i) * (w / 2) + j) * c + a;
        (*out.data)[oi] = best;
        (*argmax)[oi] = best_idx;
      }
  if (rg) {
    out.node = std::make_shared<Node>();
    out.node->parents = {f};
    out.node->backprop = [argmax](const Tensor& o) {
      const Tensor& f = o.node->parents[0];
      if (!f.requires_grad) return;
      const std::size_t n = o.numel();
      for (std::size_t i = 0; i < n; ++i) (*f.grad)[(*argmax)[i]] += (*o.grad)[i];
    };
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& f) {
  check_map(f, "upsample_nearest2x");
  const int h = f.shape[0], w = f.shape[1], c = f.shape[2];
  bool rg = grad_enabled() && f.requires_grad;
  Tensor out = Tensor::zeros({2 * h, 2 * w, c}, rg);
  for (int i = 0; i < 2 * h; ++i)
    for (int j = 0; j < 2 * w; ++j)
      for (int a = 0; a < c; ++a) out.at(i, j, a) = f.at(i / 2, j / 2, a);
  if (rg) {
    out.node = std::make_shared<Node>();
    out.node->parents = {f};
    out.node->backprop = [h, w, c](const Tensor& o) {
      const Tensor& f = o.node->parents[0];
      if (!f.requires_grad) return;
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j)
          for (int a = 0; a < c; ++a)
            (*f.grad)[(static_cast<std::size_t>(i / 2) * w + j / 2) * c + a] +=
                (*o.grad)[(static_cast<std::size_t>(i) * 2 * w + j) * c + a];
    };
  }
  return out;
}

Tensor layer_norm_channels(const Tensor& f, const Tensor& gamma, const Tensor& beta,
                           double eps) {
  check_map(f, "layer_norm_channels");
  const int c = f.shape[2];
  if (gamma.rank() != 1 || gamma.shape[0] != c || beta.rank() != 1 || beta.shape[0] != c)
    throw ShapeError("layer_norm_channels: affine params do not match channel width " +
                     std::to_string(c));
  const int positions = f.shape[0] * f.shape[1];
  bool rg = grad_enabled() && (f.requires_grad || gamma.requires_grad || beta.requires_grad);
  Tensor out = Tensor::zeros(f.shape, rg);
  for (int p = 0; p < positions; ++p) {
    const double* row = &(*f.data)[static_cast<std::size_t>(p) * c];
    double mu = 0.0;
    for (int a = 0; a < c; ++a) mu += row[a];
    mu /= c;
    double var = 0.0;
    for (int a = 0; a < c; ++a) var += (row[a] - mu) * (row[a] - mu);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    double* orow = &(*out.data)[static_cast<std::size_t>(p) * c];
    for (int a = 0; a < c; ++a)
      orow[a] = gamma.at(a) * (row[a] - mu) * inv + beta.at(a);
  }
  if (rg) {
    out.node = std::make_shared<Node>();
    out.node->parents = {f, gamma, beta};
    out.node->backprop = [positions, c, eps](const Tensor& o) {
      const Tensor& f = o.node->parents[0];
      const Tensor& gamma = o.node->parents[1];
      const Tensor& beta = o.node->parents[2];
      for (int p = 0; p < positions; ++p) {
        const double* row = &(*f.data)[static_cast<std::size_t>(p) * c];
        const double* grow = &(*o.grad)[static_cast<std::size_t>(p) * c];
        double mu = 0.0;
        for (int a = 0; a < c; ++a) mu += row[a];
        mu /= c;
        double var = 0.0;
        for (int a = 0; a < c; ++a) var += (row[a] - mu) * (row[a] - mu);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        // dxhat, plus the two reduction terms of the standard LN backward.
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int a = 0; a < c; ++a) {
          const double xhat = (row[a] - mu) * inv;
          const double dxhat = grow[a] * gamma.at(a);
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          if (gamma.requires_grad) (*gamma.grad)[a] += grow[a] * xhat;
          if (beta.requires_grad) (*beta.grad)[a] += grow[a];
        }
        if (f.requires_grad)
          for (int a = 0; a < c; ++a) {
            const double xhat = (row[a] - mu) * inv;
            const double dxhat = grow[a] * gamma.at(a);
            (*f.grad)[static_cast<std::size_t>(p) * c + a] +=
                inv * (dxhat - sum_dxhat / c - xhat * sum_dxhat_xhat / c);
          }
      }
    };
  }
  return out;
}

}  // namespace winmatch
