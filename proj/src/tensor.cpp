#include "winmatch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace winmatch {

namespace {

thread_local bool g_grad_enabled = true;

void check_axis(const Tensor& t, int axis, const char* op) {
  if (axis < 0 || axis >= t.rank())
    throw ParamError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(t.rank()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
}

// Builds the output tensor for an op. A graph node is attached only when
// recording is enabled and some parent participates in differentiation.
Tensor make_output(std::vector<int> shape, std::vector<Tensor> parents) {
  bool rg = false;
  if (grad_enabled())
    for (const Tensor& p : parents)
      if (p.requires_grad) rg = true;
  Tensor out = Tensor::zeros(std::move(shape), rg);
  if (rg) {
    out.node = std::make_shared<Node>();
    out.node->parents = std::move(parents);
  }
  return out;
}

// Splits a shape around `axis` into (outer, len, inner) loop extents.
void axis_extents(const std::vector<int>& shape, int axis, std::size_t& outer,
                  std::size_t& len, std::size_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[i]);
  len = static_cast<std::size_t>(shape[axis]);
  inner = 1;
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i)
    inner *= static_cast<std::size_t>(shape[i]);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  for (int e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad)
    t.grad = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  if (values.size() != t.numel())
    throw ShapeError("from: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(t.shape));
  *t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t = zeros({}, requires_grad);
  (*t.data)[0] = value;
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stdev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : *t.data) v = rng.normal() * stdev;
  return t;
}

int Tensor::size(int axis) const {
  check_axis(*this, axis, "size");
  return shape[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape); }

double& Tensor::at(int i) {
  return (*data)[static_cast<std::size_t>(i)];
}
double& Tensor::at(int i, int j) {
  return (*data)[static_cast<std::size_t>(i) * shape[1] + j];
}
double& Tensor::at(int i, int j, int k) {
  return (*data)[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}
double Tensor::at(int i) const { return (*data)[static_cast<std::size_t>(i)]; }
double Tensor::at(int i, int j) const {
  return (*data)[static_cast<std::size_t>(i) * shape[1] + j];
}
double Tensor::at(int i, int j, int k) const {
  return (*data)[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
}

double Tensor::value() const {
  if (numel() != 1) throw ContractError("value: tensor is not scalar, shape " + shape_str(shape));
  return (*data)[0];
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_output(a.shape, {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      for (int p = 0; p < 2; ++p) {
        const Tensor& t = o.node->parents[p];
        if (!t.requires_grad) continue;
        for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i];
      }
    };
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_output(a.shape, {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& a = o.node->parents[0];
      const Tensor& b = o.node->parents[1];
      if (a.requires_grad)
        for (std::size_t i = 0; i < n; ++i) (*a.grad)[i] += (*o.grad)[i];
      if (b.requires_grad)
        for (std::size_t i = 0; i < n; ++i) (*b.grad)[i] -= (*o.grad)[i];
    };
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_output(a.shape, {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& a = o.node->parents[0];
      const Tensor& b = o.node->parents[1];
      if (a.requires_grad)
        for (std::size_t i = 0; i < n; ++i) (*a.grad)[i] += (*o.grad)[i] * (*b.data)[i];
      if (b.requires_grad)
        for (std::size_t i = 0; i < n; ++i) (*b.grad)[i] += (*o.grad)[i] * (*a.data)[i];
    };
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  Tensor out = make_output(a.shape, {a, b});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    if ((*b.data)[i] == 0.0) throw NumericError("div: zero denominator");
    (*out.data)[i] = (*a.data)[i] / (*b.data)[i];
  }
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& a = o.node->parents[0];
      const Tensor& b = o.node->parents[1];
      for (std::size_t i = 0; i < n; ++i) {
        const double bi = (*b.data)[i];
        const double g = (*o.grad)[i];
        if (a.requires_grad) (*a.grad)[i] += g / bi;
        if (b.requires_grad) (*b.grad)[i] -= g * (*a.data)[i] / (bi * bi);
      }
    };
  return out;
}

Tensor scale(const Tensor& t, double s) {
  Tensor out = make_output(t.shape, {t});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*t.data)[i] * s;
  if (out.node)
    out.node->backprop = [n, s](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i] * s;
    };
  return out;
}

Tensor smul(const Tensor& t, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("smul: scale must be scalar, got " + shape_str(s.shape));
  Tensor out = make_output(t.shape, {t, s});
  const std::size_t n = out.numel();
  const double sv = (*s.data)[0];
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*t.data)[i] * sv;
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      const Tensor& s = o.node->parents[1];
      const double sv = (*s.data)[0];
      if (t.requires_grad)
        for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i] * sv;
      if (s.requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (*o.grad)[i] * (*t.data)[i];
        (*s.grad)[0] += acc;
      }
    };
  return out;
}

Tensor add_bias_rows(const Tensor& t, const Tensor& bias) {
  if (t.rank() != 2 || bias.rank() != 1 || t.shape[1] != bias.shape[0])
    throw ShapeError("add_bias_rows: " + shape_str(t.shape) + " vs bias " +
                     shape_str(bias.shape));
  Tensor out = make_output(t.shape, {t, bias});
  const int rows = t.shape[0], cols = t.shape[1];
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = t.at(r, c) + bias.at(c);
  if (out.node)
    out.node->backprop = [rows, cols](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      const Tensor& bias = o.node->parents[1];
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const double g = (*o.grad)[static_cast<std::size_t>(r) * cols + c];
          if (t.requires_grad) (*t.grad)[static_cast<std::size_t>(r) * cols + c] += g;
          if (bias.requires_grad) (*bias.grad)[c] += g;
        }
    };
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects 2-D operands, got " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  if (a.shape[1] != b.shape[0])
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], p = b.shape[1];
  Tensor out = make_output({m, p}, {a, b});
  for (int i = 0; i < m; ++i)
    for (int kk = 0; kk < k; ++kk) {
      const double av = a.at(i, kk);
      if (av == 0.0) continue;
      for (int j = 0; j < p; ++j) out.at(i, j) += av * b.at(kk, j);
    }
  if (out.node)
    out.node->backprop = [m, k, p](const Tensor& o) {
      const Tensor& a = o.node->parents[0];
      const Tensor& b = o.node->parents[1];
      // dA += dC . B^T ; dB += A^T . dC
      if (a.requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) {
            const double g = (*o.grad)[static_cast<std::size_t>(i) * p + j];
            if (g == 0.0) continue;
            for (int kk = 0; kk < k; ++kk)
              (*a.grad)[static_cast<std::size_t>(i) * k + kk] += g * b.at(kk, j);
          }
      if (b.requires_grad)
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = a.at(i, kk);
            if (av == 0.0) continue;
            for (int j = 0; j < p; ++j)
              (*b.grad)[static_cast<std::size_t>(kk) * p + j] +=
                  av * (*o.grad)[static_cast<std::size_t>(i) * p + j];
          }
    };
  return out;
}

Tensor transpose(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("transpose: expects 2-D, got " + shape_str(t.shape));
  const int r = t.shape[0], c = t.shape[1];
  Tensor out = make_output({c, r}, {t});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = t.at(i, j);
  if (out.node)
    out.node->backprop = [r, c](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          (*t.grad)[static_cast<std::size_t>(i) * c + j] +=
              (*o.grad)[static_cast<std::size_t>(j) * r + i];
    };
  return out;
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
  if (shape_numel(shape) != t.numel())
    throw ShapeError("reshape: cannot view " + shape_str(t.shape) + " as " + shape_str(shape));
  Tensor out = make_output(std::move(shape), {t});
  *out.data = *t.data;
  if (out.node)
    out.node->backprop = [](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      const std::size_t n = t.numel();
      for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i];
    };
  return out;
}

Tensor narrow(const Tensor& t, int axis, int start, int len) {
  check_axis(t, axis, "narrow");
  if (len <= 0 || start < 0 || start + len > t.shape[axis])
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") outside axis of extent " +
                     std::to_string(t.shape[axis]));
  std::vector<int> out_shape = t.shape;
  out_shape[axis] = len;
  std::size_t outer, full, inner;
  axis_extents(t.shape, axis, outer, full, inner);
  Tensor out = make_output(out_shape, {t});
  for (std::size_t o = 0; o < outer; ++o)
    for (int l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i)
        (*out.data)[(o * len + l) * inner + i] =
            (*t.data)[(o * full + start + l) * inner + i];
  if (out.node)
    out.node->backprop = [outer, full, inner, start, len](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (int l = 0; l < len; ++l)
          for (std::size_t i = 0; i < inner; ++i)
            (*t.grad)[(ou * full + start + l) * inner + i] +=
                (*o.grad)[(ou * len + l) * inner + i];
    };
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ParamError("concat: no operands");
  check_axis(parts[0], axis, "concat");
  std::vector<int> out_shape = parts[0].shape;
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank())
      throw ShapeError("concat: rank mismatch " + shape_str(p.shape) + " vs " +
                       shape_str(parts[0].shape));
    for (int ax = 0; ax < p.rank(); ++ax)
      if (ax != axis && p.shape[ax] != parts[0].shape[ax])
        throw ShapeError("concat: off-axis extents disagree, " + shape_str(p.shape) + " vs " +
                         shape_str(parts[0].shape));
    total += p.shape[axis];
  }
  out_shape[axis] = total;
  std::size_t outer, len_total, inner;
  axis_extents(out_shape, axis, outer, len_total, inner);
  Tensor out = make_output(out_shape, parts);
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t len = static_cast<std::size_t>(p.shape[axis]);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i)
          (*out.data)[(o * len_total + off + l) * inner + i] =
              (*p.data)[(o * len + l) * inner + i];
    off += len;
  }
  if (out.node)
    out.node->backprop = [outer, len_total, inner, offsets, axis](const Tensor& o) {
      for (std::size_t pi = 0; pi < o.node->parents.size(); ++pi) {
        const Tensor& p = o.node->parents[pi];
        if (!p.requires_grad) continue;
        const std::size_t len = static_cast<std::size_t>(p.shape[axis]);
        const std::size_t off = offsets[pi];
        for (std::size_t ou = 0; ou < outer; ++ou)
          for (std::size_t l = 0; l < len; ++l)
            for (std::size_t i = 0; i < inner; ++i)
              (*p.grad)[(ou * len + l) * inner + i] +=
                  (*o.grad)[(ou * len_total + off + l) * inner + i];
      }
    };
  return out;
}

Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
  if (t.rank() != 2) throw ShapeError("gather_rows: expects 2-D, got " + shape_str(t.shape));
  if (idx.empty()) throw ParamError("gather_rows: empty index list");
  const int rows = t.shape[0], cols = t.shape[1];
  for (int i : idx)
    if (i < 0 || i >= rows)
      throw ContractError("gather_rows: index " + std::to_string(i) + " outside " +
                          std::to_string(rows) + " rows");
  Tensor out = make_output({static_cast<int>(idx.size()), cols}, {t});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < cols; ++c) out.at(static_cast<int>(r), c) = t.at(idx[r], c);
  if (out.node)
    out.node->backprop = [idx, cols](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < cols; ++c)
          (*t.grad)[static_cast<std::size_t>(idx[r]) * cols + c] +=
              (*o.grad)[r * cols + c];
    };
  return out;
}

Tensor gather1d(const Tensor& t, const std::vector<int>& idx) {
  if (t.rank() != 1) throw ShapeError("gather1d: expects 1-D, got " + shape_str(t.shape));
  if (idx.empty()) throw ParamError("gather1d: empty index list");
  const int n = t.shape[0];
  for (int i : idx)
    if (i < 0 || i >= n)
      throw ContractError("gather1d: index " + std::to_string(i) + " outside length " +
                          std::to_string(n));
  Tensor out = make_output({static_cast<int>(idx.size())}, {t});
  for (std::size_t r = 0; r < idx.size(); ++r) (*out.data)[r] = (*t.data)[idx[r]];
  if (out.node)
    out.node->backprop = [idx](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t r = 0; r < idx.size(); ++r) (*t.grad)[idx[r]] += (*o.grad)[r];
    };
  return out;
}

Tensor mean_axis(const Tensor& t, int axis) {
  check_axis(t, axis, "mean_axis");
  std::vector<int> out_shape;
  for (int i = 0; i < t.rank(); ++i)
    if (i != axis) out_shape.push_back(t.shape[i]);
  std::size_t outer, len, inner;
  axis_extents(t.shape, axis, outer, len, inner);
  Tensor out = make_output(out_shape, {t});
  const double inv = 1.0 / static_cast<double>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < len; ++l) acc += (*t.data)[(o * len + l) * inner + i];
      (*out.data)[o * inner + i] = acc * inv;
    }
  if (out.node)
    out.node->backprop = [outer, len, inner, inv](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t i = 0; i < inner; ++i) {
          const double g = (*o.grad)[ou * inner + i] * inv;
          for (std::size_t l = 0; l < len; ++l) (*t.grad)[(ou * len + l) * inner + i] += g;
        }
    };
  return out;
}

Tensor sum_all(const Tensor& t) {
  Tensor out = make_output({}, {t});
  double acc = 0.0;
  for (double v : *t.data) acc += v;
  (*out.data)[0] = acc;
  if (out.node)
    out.node->backprop = [](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      const double g = (*o.grad)[0];
      for (double& gv : *t.grad) gv += g;
    };
  return out;
}

Tensor sum_squares(const Tensor& t) {
  Tensor out = make_output({}, {t});
  double acc = 0.0;
  for (double v : *t.data) acc += v * v;
  (*out.data)[0] = acc;
  if (out.node)
    out.node->backprop = [](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      const double g = (*o.grad)[0];
      const std::size_t n = t.numel();
      for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += 2.0 * g * (*t.data)[i];
    };
  return out;
}

Tensor softmax_rows(const Tensor& t, double temperature) {
  if (t.rank() != 2) throw ShapeError("softmax_rows: expects 2-D, got " + shape_str(t.shape));
  if (!(temperature > 0.0)) throw ParamError("softmax_rows: temperature must be positive");
  const int rows = t.shape[0], cols = t.shape[1];
  Tensor out = make_output(t.shape, {t});
  for (int r = 0; r < rows; ++r) {
    double mx = t.at(r, 0) / temperature;
    for (int c = 1; c < cols; ++c) mx = std::max(mx, t.at(r, c) / temperature);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double e = std::exp(t.at(r, c) / temperature - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (int c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  if (out.node)
    out.node->backprop = [rows, cols, temperature](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (int r = 0; r < rows; ++r) {
        double dsum = 0.0;
        for (int c = 0; c < cols; ++c)
          dsum += (*o.grad)[static_cast<std::size_t>(r) * cols + c] * o.at(r, c);
        for (int c = 0; c < cols; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          (*t.grad)[i] += o.at(r, c) * ((*o.grad)[i] - dsum) / temperature;
        }
      }
    };
  return out;
}

Tensor logsumexp_all(const Tensor& t) {
  Tensor out = make_output({}, {t});
  double mx = (*t.data)[0];
  for (double v : *t.data) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : *t.data) z += std::exp(v - mx);
  (*out.data)[0] = mx + std::log(z);
  if (out.node)
    out.node->backprop = [](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      const double lse = (*o.data)[0];
      const double g = (*o.grad)[0];
      const std::size_t n = t.numel();
      for (std::size_t i = 0; i < n; ++i)
        (*t.grad)[i] += g * std::exp((*t.data)[i] - lse);
    };
  return out;
}

Tensor log_elem(const Tensor& t) {
  Tensor out = make_output(t.shape, {t});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    if (!((*t.data)[i] > 0.0)) throw NumericError("log_elem: non-positive input");
    (*out.data)[i] = std::log((*t.data)[i]);
  }
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i] / (*t.data)[i];
    };
  return out;
}

Tensor silu(const Tensor& t) {
  Tensor out = make_output(t.shape, {t});
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (*t.data)[i];
    (*out.data)[i] = x / (1.0 + std::exp(-x));
  }
  if (out.node)
    out.node->backprop = [n](const Tensor& o) {
      const Tensor& t = o.node->parents[0];
      if (!t.requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = (*t.data)[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        (*t.grad)[i] += (*o.grad)[i] * (s + x * s * (1.0 - s));
      }
    };
  return out;
}

std::vector<int> topk_desc(const std::vector<double>& values, int k) {
  if (k < 1 || k > static_cast<int>(values.size()))
    throw ParamError("topk_desc: k = " + std::to_string(k) + " outside [1, " +
                     std::to_string(values.size()) + "]");
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  order.resize(k);
  return order;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss tensor");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, shape " + shape_str(loss.shape));
  if (!loss.requires_grad)
    throw ContractError("backward: loss is not connected to any differentiable leaf");
  if (!loss.node) {  // loss is itself a leaf parameter
    (*loss.grad)[0] += 1.0;
    return;
  }

  // Iterative post-order DFS over the producing nodes.
  std::vector<Tensor> order;
  std::unordered_set<const Node*> seen;
  struct Frame {
    Tensor t;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss, 0});
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    bool descended = false;
    while (f.next_parent < f.t.node->parents.size()) {
      const Tensor& p = f.t.node->parents[f.next_parent++];
      if (p.node && p.requires_grad && !seen.count(p.node.get())) {
        seen.insert(p.node.get());
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && f.next_parent >= f.t.node->parents.size()) {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  // Reset intermediate grads so that each sweep contributes exactly once.
  for (const Tensor& t : order) std::fill(t.grad->begin(), t.grad->end(), 0.0);
  (*order.back().grad)[0] = 1.0;  // order.back() == loss
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (it->node->backprop) it->node->backprop(*it);
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params)
    if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

void assert_all_finite(const Tensor& t, const std::string& context) {
  for (double v : *t.data)
    if (!std::isfinite(v)) throw NumericError(context + ": non-finite value encountered");
}

}  // namespace winmatch
