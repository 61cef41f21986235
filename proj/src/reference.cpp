#include "winmatch/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "winmatch/rng.hpp"
#include "winmatch/window_attention.hpp"

namespace winmatch::ref {

namespace {

// y = x . W + b for one position.
void linear_map(const double* x, const std::vector<double>& w,
                const std::vector<double>& b, int c, double* y) {
  for (int o = 0; o < c; ++o) {
    double acc = b[o];
    for (int i = 0; i < c; ++i) acc += x[i] * w[static_cast<std::size_t>(i) * c + o];
    y[o] = acc;
  }
}

}  // namespace

std::vector<double> top_k_window_attention(const Alg1Inputs& in) {
  const int h = in.h, w = in.w, c = in.c, s = in.side, tk = in.top_k;
  if (h % s || w % s) throw std::runtime_error("reference: side does not tile extents");
  const int n = (h / s) * (w / s);
  const int ppw = s * s;
  if (tk < 1 || tk > n) throw std::runtime_error("reference: top_k out of range");
  const int positions = h * w;

  // Per-position q (from x1) and k, v (from x2).
  std::vector<double> q(static_cast<std::size_t>(positions) * c);
  std::vector<double> k(q.size()), v(q.size());
  for (int p = 0; p < positions; ++p) {
    linear_map(&in.x1[static_cast<std::size_t>(p) * c], in.wq, in.bq, c,
               &q[static_cast<std::size_t>(p) * c]);
    linear_map(&in.x2[static_cast<std::size_t>(p) * c], in.wk, in.bk, c,
               &k[static_cast<std::size_t>(p) * c]);
    linear_map(&in.x2[static_cast<std::size_t>(p) * c], in.wv, in.bv, c,
               &v[static_cast<std::size_t>(p) * c]);
  }

  // Window partition: window i, local patch l -> flat position.
  const int gw = w / s;
  auto window_pos = [&](int win, int local) {
    const int wr = win / gw, wc = win % gw;
    const int pr = local / s, pc = local % s;
    return (wr * s + pr) * w + (wc * s + pc);
  };

  // Window means.
  std::vector<double> q_bar(static_cast<std::size_t>(n) * c, 0.0);
  std::vector<double> k_bar(q_bar.size(), 0.0), v_bar(q_bar.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < ppw; ++l) {
      const int p = window_pos(i, l);
      for (int a = 0; a < c; ++a) {
        q_bar[static_cast<std::size_t>(i) * c + a] += q[static_cast<std::size_t>(p) * c + a];
        k_bar[static_cast<std::size_t>(i) * c + a] += k[static_cast<std::size_t>(p) * c + a];
        v_bar[static_cast<std::size_t>(i) * c + a] += v[static_cast<std::size_t>(p) * c + a];
      }
    }
  for (double& x : q_bar) x /= ppw;
  for (double& x : k_bar) x /= ppw;
  for (double& x : v_bar) x /= ppw;

  // Summary similarity and per-row top-k (ties toward the lower index).
  std::vector<int> chosen(static_cast<std::size_t>(n) * tk);
  for (int i = 0; i < n; ++i) {
    std::vector<double> sim(n);
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int a = 0; a < c; ++a)
        acc += q_bar[static_cast<std::size_t>(i) * c + a] *
               k_bar[static_cast<std::size_t>(j) * c + a];
      sim[j] = acc;
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (sim[a] != sim[b]) return sim[a] > sim[b];
      return a < b;
    });
    for (int t = 0; t < tk; ++t) chosen[static_cast<std::size_t>(i) * tk + t] = order[t];
  }

  // Attention of every query patch over its window's augmented key/value set:
  // the top-k windows' fine entries followed by every window's summary.
  const int kv_rows = tk * ppw + n;
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<double> out(static_cast<std::size_t>(positions) * c, 0.0);
  std::vector<double> keys(static_cast<std::size_t>(kv_rows) * c);
  std::vector<double> vals(keys.size());
  std::vector<double> logits(kv_rows);
  for (int i = 0; i < n; ++i) {
    int row = 0;
    for (int t = 0; t < tk; ++t) {
      const int win = chosen[static_cast<std::size_t>(i) * tk + t];
      for (int l = 0; l < ppw; ++l, ++row) {
        const int p = window_pos(win, l);
        for (int a = 0; a < c; ++a) {
          keys[static_cast<std::size_t>(row) * c + a] = k[static_cast<std::size_t>(p) * c + a];
          vals[static_cast<std::size_t>(row) * c + a] = v[static_cast<std::size_t>(p) * c + a];
        }
      }
    }
    for (int j = 0; j < n; ++j, ++row)
      for (int a = 0; a < c; ++a) {
        keys[static_cast<std::size_t>(row) * c + a] = k_bar[static_cast<std::size_t>(j) * c + a];
        vals[static_cast<std::size_t>(row) * c + a] = v_bar[static_cast<std::size_t>(j) * c + a];
      }

    for (int l = 0; l < ppw; ++l) {
      const int p = window_pos(i, l);
      for (int r = 0; r < kv_rows; ++r) {
        double acc = 0.0;
        for (int a = 0; a < c; ++a)
          acc += q[static_cast<std::size_t>(p) * c + a] *
                 keys[static_cast<std::size_t>(r) * c + a];
        logits[r] = acc * inv_sqrt_c / in.temperature;
      }
      double z = 0.0;
      for (int r = 0; r < kv_rows; ++r) z += std::exp(logits[r]);
      for (int r = 0; r < kv_rows; ++r) {
        const double wgt = std::exp(logits[r]) / z;
        for (int a = 0; a < c; ++a)
          out[static_cast<std::size_t>(p) * c + a] +=
              wgt * vals[static_cast<std::size_t>(r) * c + a];
      }
    }
  }
  return out;
}

OracleReport run_alg1_oracle_suite(int instances, std::uint64_t seed) {
  OracleReport report;
  report.instances = instances;
  for (int inst = 0; inst < instances; ++inst) {
    Rng rng(mix_seed(seed, inst));
    const int c = rng.uniform_int(1, 4);
    const int h = rng.uniform_int(1, 8);
    const int w = rng.uniform_int(1, 8);

    Alg1Inputs in;
    in.h = h;
    in.w = w;
    in.c = c;
    in.temperature = 1.0;
    auto fill = [&](std::vector<double>& v, std::size_t n, double s) {
      v.resize(n);
      for (double& x : v) x = rng.normal() * s;
    };
    const std::size_t map_n = static_cast<std::size_t>(h) * w * c;
    fill(in.x1, map_n, 1.0);
    fill(in.x2, map_n, 1.0);
    const double ws = 1.0 / std::sqrt(static_cast<double>(c));
    fill(in.wq, static_cast<std::size_t>(c) * c, ws);
    fill(in.wk, static_cast<std::size_t>(c) * c, ws);
    fill(in.wv, static_cast<std::size_t>(c) * c, ws);
    fill(in.bq, c, 0.1);
    fill(in.bk, c, 0.1);
    fill(in.bv, c, 0.1);

    AttentionParams params = AttentionParams::identity(c);
    params.wq = Tensor::from({c, c}, in.wq);
    params.bq = Tensor::from({c}, in.bq);
    params.wk = Tensor::from({c, c}, in.wk);
    params.bk = Tensor::from({c}, in.bk);
    params.wv = Tensor::from({c, c}, in.wv);
    params.bv = Tensor::from({c}, in.bv);
    Tensor x1 = Tensor::from({h, w, c}, in.x1);
    Tensor x2 = Tensor::from({h, w, c}, in.x2);

    for (int s = 1; s <= std::min(h, w); ++s) {
      if (h % s || w % s) continue;
      const int n = (h / s) * (w / s);
      for (int tk = 1; tk <= n; ++tk) {
        in.side = s;
        in.top_k = tk;
        std::vector<double> expect = top_k_window_attention(in);
        WindowContext ctx = WindowContext::make(h, w, s, tk);
        Tensor got = winmatch::top_k_window_attention(x1, x2, ctx, params, in.temperature);
        for (std::size_t i = 0; i < expect.size(); ++i)
          report.max_abs_diff =
              std::max(report.max_abs_diff, std::fabs(expect[i] - (*got.data)[i]));
        ++report.cases;
      }
    }
  }
  return report;
}

}  // namespace winmatch::ref
