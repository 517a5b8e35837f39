#include "pgr/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pgr/errors.hpp"
#include "pgr/rng.hpp"

namespace pgr::unet {

namespace {

template <typename T>
void ensure(Tensor<T>& t, int c, int h, int w, bool zero) {
  if (t.c != c || t.h != h || t.w != w) {
    t.c = c;
    t.h = h;
    t.w = w;
    t.v.assign(static_cast<size_t>(c) * h * w, T(0));
  } else if (zero) {
    std::fill(t.v.begin(), t.v.end(), T(0));
  }
}

// C (M x N) += A (M x K) * B (K x N). Each row of C belongs to one
// thread, so results do not depend on the thread count.
template <typename T>
void gemm_axpy(int M, int K, int N, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<size_t>(i) * N;
    const T* arow = A + static_cast<size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      T a = arow[k];
      const T* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

template <typename T>
void transpose(int R, int C, const T* in, std::vector<T>& out) {
  out.resize(static_cast<size_t>(R) * C);
  constexpr int kBlk = 32;
  for (int r0 = 0; r0 < R; r0 += kBlk)
    for (int c0 = 0; c0 < C; c0 += kBlk) {
      int r1 = std::min(r0 + kBlk, R), c1 = std::min(c0 + kBlk, C);
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c)
          out[static_cast<size_t>(c) * R + r] =
              in[static_cast<size_t>(r) * C + c];
    }
}

// Unit zero padding, k x k patches; col is (c*k*k) x (h*w).
template <typename T>
void im2col(const Tensor<T>& x, int k, std::vector<T>& col) {
  int h = x.h, w = x.w, pad = k / 2;
  size_t P = x.plane();
  col.assign(static_cast<size_t>(x.c) * k * k * P, T(0));
  for (int ci = 0; ci < x.c; ++ci) {
    const T* plane = x.ch(ci);
    for (int dy = 0; dy < k; ++dy) {
      int sy0 = dy - pad;
      for (int dx = 0; dx < k; ++dx) {
        int sx0 = dx - pad;
        T* dst =
            col.data() + (static_cast<size_t>(ci) * k * k + dy * k + dx) * P;
        for (int y = 0; y < h; ++y) {
          int sy = y + sy0;
          if (sy < 0 || sy >= h) continue;
          const T* srow = plane + static_cast<size_t>(sy) * w;
          T* drow = dst + static_cast<size_t>(y) * w;
          int x_lo = std::max(0, -sx0);
          int x_hi = std::min(w, w - sx0);
          for (int xx = x_lo; xx < x_hi; ++xx) drow[xx] = srow[xx + sx0];
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, int c, int h, int w, int k,
            Tensor<T>& dx) {
  int pad = k / 2;
  size_t P = static_cast<size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T* plane = dx.ch(ci);
    for (int dy = 0; dy < k; ++dy) {
      int sy0 = dy - pad;
      for (int dxi = 0; dxi < k; ++dxi) {
        int sx0 = dxi - pad;
        const T* src =
            col.data() + (static_cast<size_t>(ci) * k * k + dy * k + dxi) * P;
        for (int y = 0; y < h; ++y) {
          int sy = y + sy0;
          if (sy < 0 || sy >= h) continue;
          T* drow = plane + static_cast<size_t>(sy) * w;
          const T* srow = src + static_cast<size_t>(y) * w;
          int x_lo = std::max(0, -sx0);
          int x_hi = std::min(w, w - sx0);
          for (int xx = x_lo; xx < x_hi; ++xx) drow[xx + sx0] += srow[xx];
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const ParamArray<T>& W, const ParamArray<T>& B,
                  const Tensor<T>& x, Tensor<T>& y, bool relu,
                  std::vector<T>& col) {
  int oc = W.dims[0], ic = W.dims[1], k = W.dims[2];
  if (x.c != ic) throw domain_error("conv_forward: channel mismatch");
  ensure(y, oc, x.h, x.w, false);
  size_t P = y.plane();
  for (int o = 0; o < oc; ++o)
    std::fill(y.ch(o), y.ch(o) + P, B.w[static_cast<size_t>(o)]);
  const T* mat = k == 1 ? x.v.data() : (im2col(x, k, col), col.data());
  gemm_axpy(oc, ic * k * k, static_cast<int>(P), W.w.data(), mat, y.v.data());
  if (relu)
    for (T& v : y.v) v = v > T(0) ? v : T(0);
}

// y_post is the stored post-activation output; dy is consumed in place.
template <typename T>
void conv_backward(ParamArray<T>& W, ParamArray<T>& B, const Tensor<T>& x,
                   const Tensor<T>& y_post, Tensor<T>& dy, Tensor<T>* dx,
                   bool relu, std::vector<T>& col, std::vector<T>& colt,
                   std::vector<T>& dcol, std::vector<T>& wt) {
  int oc = W.dims[0], ic = W.dims[1], k = W.dims[2];
  size_t P = dy.plane();
  int K = ic * k * k;
  if (relu)
    for (size_t i = 0; i < dy.v.size(); ++i)
      if (y_post.v[i] <= T(0)) dy.v[i] = T(0);

  for (int o = 0; o < oc; ++o) {
    T acc = T(0);
    const T* row = dy.ch(o);
    for (size_t p = 0; p < P; ++p) acc += row[p];
    B.g[static_cast<size_t>(o)] += acc;
  }

  const T* mat = k == 1 ? x.v.data() : (im2col(x, k, col), col.data());
  transpose(K, static_cast<int>(P), mat, colt);
  gemm_axpy(oc, static_cast<int>(P), K, dy.v.data(), colt.data(), W.g.data());

  if (dx) {
    transpose(oc, K, W.w.data(), wt);
    dcol.assign(static_cast<size_t>(K) * P, T(0));
    gemm_axpy(K, oc, static_cast<int>(P), wt.data(), dy.v.data(), dcol.data());
    ensure(*dx, ic, x.h, x.w, true);
    if (k == 1)
      std::copy(dcol.begin(), dcol.end(), dx->v.begin());
    else
      col2im(dcol, ic, x.h, x.w, k, *dx);
  }
}

// 2x2 stride-2 max pool; the first maximum wins ties so the argmax is
// unambiguous. idx stores absolute indices into the input buffer.
template <typename T>
void maxpool2(const Tensor<T>& x, Tensor<T>& y, std::vector<int>& idx) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw domain_error("maxpool2: odd input size");
  ensure(y, x.c, x.h / 2, x.w / 2, false);
  idx.resize(y.v.size());
  size_t out_i = 0;
  for (int ci = 0; ci < x.c; ++ci) {
    const T* plane = x.ch(ci);
    size_t plane_off = static_cast<size_t>(ci) * x.plane();
    for (int oy = 0; oy < y.h; ++oy) {
      for (int ox = 0; ox < y.w; ++ox) {
        size_t base = static_cast<size_t>(2 * oy) * x.w + 2 * ox;
        size_t cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
        size_t best = cand[0];
        T m = plane[cand[0]];
        for (int t = 1; t < 4; ++t)
          if (plane[cand[t]] > m) {
            m = plane[cand[t]];
            best = cand[t];
          }
        y.v[out_i] = m;
        idx[out_i] = static_cast<int>(plane_off + best);
        ++out_i;
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const std::vector<int>& idx, const Tensor<T>& dy,
                       Tensor<T>& dx) {
  for (size_t i = 0; i < dy.v.size(); ++i)
    dx.v[static_cast<size_t>(idx[i])] += dy.v[i];
}

template <typename T>
void upsample2(const Tensor<T>& x, Tensor<T>& y) {
  ensure(y, x.c, x.h * 2, x.w * 2, false);
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.ch(ci);
    T* dst = y.ch(ci);
    for (int iy = 0; iy < y.h; ++iy) {
      const T* srow = src + static_cast<size_t>(iy / 2) * x.w;
      T* drow = dst + static_cast<size_t>(iy) * y.w;
      for (int ix = 0; ix < y.w; ++ix) drow[ix] = srow[ix / 2];
    }
  }
}

template <typename T>
void upsample2_backward(const Tensor<T>& dy, Tensor<T>& dx, int c, int h,
                        int w) {
  ensure(dx, c, h, w, true);
  for (int ci = 0; ci < c; ++ci) {
    const T* src = dy.ch(ci);
    T* dst = dx.ch(ci);
    for (int iy = 0; iy < dy.h; ++iy) {
      const T* srow = src + static_cast<size_t>(iy) * dy.w;
      T* drow = dst + static_cast<size_t>(iy / 2) * w;
      for (int ix = 0; ix < dy.w; ++ix) drow[ix / 2] += srow[ix];
    }
  }
}

template <typename T>
void concat2(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& y) {
  ensure(y, a.c + b.c, a.h, a.w, false);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
}

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

template <typename T>
void reflect_pad(const Tensor<T>& x, int target, int pad_lo, Tensor<T>& y) {
  ensure(y, x.c, target, target, false);
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.ch(ci);
    T* dst = y.ch(ci);
    for (int iy = 0; iy < target; ++iy) {
      int sy = reflect_index(iy - pad_lo, x.h);
      const T* srow = src + static_cast<size_t>(sy) * x.w;
      T* drow = dst + static_cast<size_t>(iy) * target;
      for (int ix = 0; ix < target; ++ix)
        drow[ix] = srow[reflect_index(ix - pad_lo, x.w)];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------
// Model

template <typename T>
Model<T> Model<T>::make(int in_channels, int base_width, int stages,
                        uint64_t seed) {
  if (in_channels < 1 || base_width < 1 || stages < 1 || stages > 8)
    throw input_error("Model::make: bad architecture");
  Model<T> m;
  m.in_channels_ = in_channels;
  m.base_width_ = base_width;
  m.stages_ = stages;

  auto width = [&](int s1) { return base_width << (s1 - 1); };  // s1 >= 1
  auto add = [&](const std::string& name, int oc, int ic, int k) {
    ParamArray<T> w;
    w.name = name + ".weight";
    w.dims = {oc, ic, k, k};
    w.w.assign(static_cast<size_t>(oc) * ic * k * k, T(0));
    m.params_.push_back(std::move(w));
    ParamArray<T> b;
    b.name = name + ".bias";
    b.dims = {oc};
    b.w.assign(static_cast<size_t>(oc), T(0));
    m.params_.push_back(std::move(b));
  };

  for (int s = 1; s <= stages; ++s) {
    int ic = s == 1 ? in_channels : width(s - 1);
    std::string base = "enc" + std::to_string(s);
    add(base + ".conv1", width(s), ic, 3);
    add(base + ".conv2", width(s), width(s), 3);
  }
  int bnw = base_width << stages;
  add("bottleneck.conv1", bnw, width(stages), 3);
  add("bottleneck.conv2", bnw, bnw, 3);
  for (int s = stages; s >= 1; --s) {
    int above = s == stages ? bnw : width(s + 1);
    std::string base = "dec" + std::to_string(s);
    add(base + ".up", width(s), above, 3);
    add(base + ".conv1", width(s), 2 * width(s), 3);
    add(base + ".conv2", width(s), width(s), 3);
  }
  add("head", 1, width(1), 1);

  rng::Engine eng = rng::make_engine(seed, 0x554e4554u);  // init stream
  for (ParamArray<T>& p : m.params_) {
    p.g.assign(p.w.size(), T(0));
    p.m.assign(p.w.size(), T(0));
    p.v.assign(p.w.size(), T(0));
    if (p.dims.size() == 1) continue;  // biases start at zero
    double fan_in = static_cast<double>(p.dims[1]) * p.dims[2] * p.dims[3];
    double bound = std::sqrt(6.0 / fan_in);
    for (T& x : p.w) x = static_cast<T>(rng::uniform(eng, -bound, bound));
  }
  return m;
}

namespace {

// Offsets into the canonical parameter order; stage indices 0-based.
struct Layout {
  int stages;
  int enc(int s, int conv) const { return 4 * s + 2 * conv; }
  int bn(int conv) const { return 4 * stages + 2 * conv; }
  int dec(int s, int part) const {  // part 0 = up, 1 = conv1, 2 = conv2
    return 4 * stages + 4 + 6 * (stages - 1 - s) + 2 * part;
  }
  int head() const { return 4 * stages + 4 + 6 * stages; }
};

}  // namespace

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& input, Workspace<T>& ws) const {
  if (input.c != in_channels_)
    throw input_error("forward: wrong input channel count");
  if (input.h != input.w || input.h < 2)
    throw input_error("forward: input must be square, at least 2x2");
  int n = input.h;
  int mult = 1 << stages_;
  int N = (n + mult - 1) / mult * mult;
  int pad_lo = (N - n) / 2;
  ws.tile_px = n;
  ws.padded_px = N;
  ws.pad_lo = pad_lo;

  if (N == n)
    ws.x_pad = input;
  else
    reflect_pad(input, N, pad_lo, ws.x_pad);

  ws.enc_a.resize(stages_);
  ws.enc_b.resize(stages_);
  ws.pool.resize(stages_);
  ws.pool_idx.resize(stages_);
  ws.up_nn.resize(stages_);
  ws.up_c.resize(stages_);
  ws.cat.resize(stages_);
  ws.dec_a.resize(stages_);
  ws.dec_b.resize(stages_);

  Layout L{stages_};
  const Tensor<T>* cur = &ws.x_pad;
  for (int s = 0; s < stages_; ++s) {
    conv_forward(params_[L.enc(s, 0)], params_[L.enc(s, 0) + 1], *cur,
                 ws.enc_a[s], true, ws.col);
    conv_forward(params_[L.enc(s, 1)], params_[L.enc(s, 1) + 1], ws.enc_a[s],
                 ws.enc_b[s], true, ws.col);
    maxpool2(ws.enc_b[s], ws.pool[s], ws.pool_idx[s]);
    cur = &ws.pool[s];
  }
  conv_forward(params_[L.bn(0)], params_[L.bn(0) + 1], *cur, ws.bn_a, true,
               ws.col);
  conv_forward(params_[L.bn(1)], params_[L.bn(1) + 1], ws.bn_a, ws.bn_b, true,
               ws.col);
  cur = &ws.bn_b;
  for (int s = stages_ - 1; s >= 0; --s) {
    upsample2(*cur, ws.up_nn[s]);
    conv_forward(params_[L.dec(s, 0)], params_[L.dec(s, 0) + 1], ws.up_nn[s],
                 ws.up_c[s], true, ws.col);
    concat2(ws.enc_b[s], ws.up_c[s], ws.cat[s]);
    conv_forward(params_[L.dec(s, 1)], params_[L.dec(s, 1) + 1], ws.cat[s],
                 ws.dec_a[s], true, ws.col);
    conv_forward(params_[L.dec(s, 2)], params_[L.dec(s, 2) + 1], ws.dec_a[s],
                 ws.dec_b[s], true, ws.col);
    cur = &ws.dec_b[s];
  }
  conv_forward(params_[L.head()], params_[L.head() + 1], *cur, ws.out_sig,
               false, ws.col);
  for (T& v : ws.out_sig.v) v = T(1) / (T(1) + std::exp(-v));

  Tensor<T> out(1, n, n);
  for (int y = 0; y < n; ++y)
    std::copy(ws.out_sig.ch(0) + static_cast<size_t>(y + pad_lo) * N + pad_lo,
              ws.out_sig.ch(0) + static_cast<size_t>(y + pad_lo) * N + pad_lo +
                  n,
              out.ch(0) + static_cast<size_t>(y) * n);
  return out;
}

template <typename T>
void Model<T>::backward(const Tensor<T>& d_output, Workspace<T>& ws) {
  int n = ws.tile_px, N = ws.padded_px, pad_lo = ws.pad_lo;
  if (d_output.c != 1 || d_output.h != n || d_output.w != n)
    throw input_error("backward: gradient shape mismatch");
  Layout L{stages_};

  // Through the crop and the sigmoid.
  Tensor<T> dlog(1, N, N);
  for (int y = 0; y < n; ++y) {
    const T* srow = d_output.ch(0) + static_cast<size_t>(y) * n;
    T* drow = dlog.ch(0) + static_cast<size_t>(y + pad_lo) * N + pad_lo;
    std::copy(srow, srow + n, drow);
  }
  for (size_t i = 0; i < dlog.v.size(); ++i) {
    T s = ws.out_sig.v[i];
    dlog.v[i] *= s * (T(1) - s);
  }

  Tensor<T> d_cur;
  conv_backward(params_[L.head()], params_[L.head() + 1], ws.dec_b[0],
                ws.out_sig, dlog, &d_cur, false, ws.col, ws.colt, ws.dcol,
                ws.wt);

  std::vector<Tensor<T>> d_skip(stages_);
  Tensor<T> d_a, d_cat, d_up, d_nn;
  for (int s = 0; s < stages_; ++s) {
    // d_cur holds the gradient at dec_b[s].
    conv_backward(params_[L.dec(s, 2)], params_[L.dec(s, 2) + 1], ws.dec_a[s],
                  ws.dec_b[s], d_cur, &d_a, true, ws.col, ws.colt, ws.dcol,
                  ws.wt);
    conv_backward(params_[L.dec(s, 1)], params_[L.dec(s, 1) + 1], ws.cat[s],
                  ws.dec_a[s], d_a, &d_cat, true, ws.col, ws.colt, ws.dcol,
                  ws.wt);
    int skip_c = ws.enc_b[s].c;
    ensure(d_skip[s], skip_c, d_cat.h, d_cat.w, false);
    std::copy(d_cat.v.begin(), d_cat.v.begin() + d_skip[s].v.size(),
              d_skip[s].v.begin());
    ensure(d_up, d_cat.c - skip_c, d_cat.h, d_cat.w, false);
    std::copy(d_cat.v.begin() + d_skip[s].v.size(), d_cat.v.end(),
              d_up.v.begin());
    conv_backward(params_[L.dec(s, 0)], params_[L.dec(s, 0) + 1], ws.up_nn[s],
                  ws.up_c[s], d_up, &d_nn, true, ws.col, ws.colt, ws.dcol,
                  ws.wt);
    const Tensor<T>& below = s == stages_ - 1 ? ws.bn_b : ws.dec_b[s + 1];
    upsample2_backward(d_nn, d_cur, below.c, below.h, below.w);
  }

  // d_cur now matches bn_b.
  conv_backward(params_[L.bn(1)], params_[L.bn(1) + 1], ws.bn_a, ws.bn_b,
                d_cur, &d_a, true, ws.col, ws.colt, ws.dcol, ws.wt);
  conv_backward(params_[L.bn(0)], params_[L.bn(0) + 1], ws.pool[stages_ - 1],
                ws.bn_a, d_a, &d_cur, true, ws.col, ws.colt, ws.dcol, ws.wt);

  Tensor<T> d_enc_b;
  for (int s = stages_ - 1; s >= 0; --s) {
    // d_cur matches pool[s]; add the skip-path gradient after unpooling.
    ensure(d_enc_b, ws.enc_b[s].c, ws.enc_b[s].h, ws.enc_b[s].w, true);
    maxpool2_backward(ws.pool_idx[s], d_cur, d_enc_b);
    for (size_t i = 0; i < d_enc_b.v.size(); ++i)
      d_enc_b.v[i] += d_skip[s].v[i];
    conv_backward(params_[L.enc(s, 1)], params_[L.enc(s, 1) + 1], ws.enc_a[s],
                  ws.enc_b[s], d_enc_b, &d_a, true, ws.col, ws.colt, ws.dcol,
                  ws.wt);
    const Tensor<T>& below = s == 0 ? ws.x_pad : ws.pool[s - 1];
    conv_backward(params_[L.enc(s, 0)], params_[L.enc(s, 0) + 1], below,
                  ws.enc_a[s], d_a, s == 0 ? nullptr : &d_cur, true, ws.col,
                  ws.colt, ws.dcol, ws.wt);
  }
}

template <typename T>
void Model<T>::zero_grads() {
  for (ParamArray<T>& p : params_) std::fill(p.g.begin(), p.g.end(), T(0));
}

template <typename T>
void Model<T>::scale_grads(T factor) {
  for (ParamArray<T>& p : params_)
    for (T& g : p.g) g *= factor;
}

template <typename T>
void Model<T>::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (ParamArray<T>& p : params_) {
    for (size_t i = 0; i < p.w.size(); ++i) {
      double g = static_cast<double>(p.g[i]);
      double m = beta1 * static_cast<double>(p.m[i]) + (1.0 - beta1) * g;
      double v = beta2 * static_cast<double>(p.v[i]) + (1.0 - beta2) * g * g;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      p.w[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
  }
}

template <typename T>
double loss_masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                       const std::vector<uint8_t>& mask, Tensor<T>* d_pred) {
  if (pred.c != 1 || target.c != 1 || pred.h != target.h ||
      pred.w != target.w || mask.size() != pred.plane())
    throw input_error("loss_masked_mse: shape mismatch");
  size_t n_valid = 0;
  for (uint8_t m : mask) n_valid += m != 0;
  if (n_valid == 0) throw domain_error("loss_masked_mse: empty mask");
  double loss = 0.0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    double d = static_cast<double>(pred.v[i]) - target.v[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n_valid);
  if (d_pred) {
    ensure(*d_pred, 1, pred.h, pred.w, true);
    double scale = 2.0 / static_cast<double>(n_valid);
    for (size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      d_pred->v[i] = static_cast<T>(
          scale * (static_cast<double>(pred.v[i]) - target.v[i]));
    }
  }
  return loss;
}

// ---------------------------------------------------------------------
// Parameter snapshots and serialization

ModelParams init_params(uint64_t seed, int in_channels, int base_width,
                        int stages) {
  Model<float> m = Model<float>::make(in_channels, base_width, stages, seed);
  return params_from_model(m, seed, 0);
}

template <typename T>
Model<T> model_from_params(const ModelParams& p) {
  Model<T> m = Model<T>::make(p.in_channels, p.base_width, p.stages, 0);
  auto& arrays = m.params();
  if (arrays.size() != p.arrays.size())
    throw input_error("model parameters do not match the architecture");
  for (size_t i = 0; i < arrays.size(); ++i) {
    const NamedArray& src = p.arrays[i];
    if (src.name != arrays[i].name || src.dims != arrays[i].dims ||
        src.values.size() != arrays[i].w.size())
      throw input_error("model parameter '" + src.name +
                        "' does not match the architecture");
    for (size_t j = 0; j < src.values.size(); ++j)
      arrays[i].w[j] = static_cast<T>(src.values[j]);
  }
  return m;
}

template <typename T>
ModelParams params_from_model(const Model<T>& m, uint64_t init_seed,
                              int epochs_trained) {
  ModelParams p;
  p.in_channels = m.in_channels();
  p.base_width = m.base_width();
  p.stages = m.stages();
  p.init_seed = init_seed;
  p.epochs_trained = epochs_trained;
  for (const ParamArray<T>& a : m.params()) {
    NamedArray out;
    out.name = a.name;
    out.dims = a.dims;
    out.values.resize(a.w.size());
    for (size_t i = 0; i < a.w.size(); ++i)
      out.values[i] = static_cast<float>(a.w[i]);
    p.arrays.push_back(std::move(out));
  }
  return p;
}

namespace {

constexpr char kModelMagic[4] = {'U', 'N', 'E', 'T'};
constexpr uint8_t kModelVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_u16(std::ofstream& f, uint16_t v) {
  f.write(reinterpret_cast<const char*>(&v), 2);
}
uint32_t get_u32(std::ifstream& f, const std::string& path) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4))
    throw input_error("truncated model file: " + path);
  return v;
}
uint16_t get_u16(std::ifstream& f, const std::string& path) {
  uint16_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 2))
    throw input_error("truncated model file: " + path);
  return v;
}

}  // namespace

void save_params(const ModelParams& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot write model: " + path);
  f.write(kModelMagic, 4);
  f.put(static_cast<char>(kModelVersion));
  put_u32(f, static_cast<uint32_t>(p.arrays.size()));
  for (const NamedArray& a : p.arrays) {
    put_u16(f, static_cast<uint16_t>(a.name.size()));
    f.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(f, static_cast<uint32_t>(a.dims.size()));
    for (int d : a.dims) put_u32(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(a.values.data()),
            static_cast<std::streamsize>(a.values.size() * sizeof(float)));
  }
  nlohmann::json meta;
  meta["in_channels"] = p.in_channels;
  meta["base_width"] = p.base_width;
  meta["stages"] = p.stages;
  meta["init_seed"] = p.init_seed;
  meta["epochs_trained"] = p.epochs_trained;
  std::string blob = meta.dump();
  put_u32(f, static_cast<uint32_t>(blob.size()));
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw input_error("model write failed: " + path);
}

ModelParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open model: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
    throw input_error("not a model file: " + path);
  if (f.get() != kModelVersion)
    throw input_error("unsupported model version: " + path);
  uint32_t count = get_u32(f, path);
  if (count > 4096) throw input_error("implausible array count: " + path);
  ModelParams p;
  for (uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    uint16_t name_len = get_u16(f, path);
    a.name.resize(name_len);
    if (!f.read(a.name.data(), name_len))
      throw input_error("truncated model file: " + path);
    uint32_t rank = get_u32(f, path);
    if (rank == 0 || rank > 8) throw input_error("bad array rank: " + path);
    size_t n = 1;
    a.dims.resize(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = get_u32(f, path);
      if (dim == 0 || dim > (1u << 24))
        throw input_error("bad array dimension: " + path);
      a.dims[d] = static_cast<int>(dim);
      n *= dim;
    }
    a.values.resize(n);
    if (!f.read(reinterpret_cast<char*>(a.values.data()),
                static_cast<std::streamsize>(n * sizeof(float))))
      throw input_error("truncated array payload: " + path);
    p.arrays.push_back(std::move(a));
  }
  uint32_t blob_len = get_u32(f, path);
  std::string blob(blob_len, '\0');
  if (!f.read(blob.data(), blob_len))
    throw input_error("truncated model metadata: " + path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob);
  } catch (const std::exception& e) {
    throw input_error("bad model metadata in " + path + ": " + e.what());
  }
  p.in_channels = meta.at("in_channels").get<int>();
  p.base_width = meta.at("base_width").get<int>();
  p.stages = meta.at("stages").get<int>();
  p.init_seed = meta.at("init_seed").get<uint64_t>();
  p.epochs_trained = meta.at("epochs_trained").get<int>();
  return p;
}

// ---------------------------------------------------------------------
// Training and inference

template <typename T>
Tensor<T> assemble_input(const geo::GridTile& elevation,
                         const geo::GridTile& estimate) {
  if (elevation.size_px != estimate.size_px)
    throw input_error("assemble_input: tile sizes differ");
  int n = elevation.size_px;
  Tensor<T> in(2, n, n);
  T* est_plane = in.ch(0);
  T* elev_plane = in.ch(1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      size_t k = static_cast<size_t>(i) * n + j;
      if (estimate.valid(i, j))
        est_plane[k] =
            static_cast<T>(dataset::normalize_pg(estimate.at(i, j)));
      if (elevation.valid(i, j))
        elev_plane[k] = static_cast<T>(
            std::clamp(elevation.at(i, j) / 100.0, 0.0, 1.0));
    }
  return in;
}

namespace {

struct PreparedSample {
  Tensor<float> input;
  Tensor<float> target;
  std::vector<uint8_t> mask;
  bool usable = false;
};

PreparedSample prepare(const dataset::Sample& s) {
  PreparedSample p;
  p.input = assemble_input<float>(s.elevation, s.estimate);
  int n = s.elevation.size_px;
  p.target = Tensor<float>(1, n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (s.target.valid(i, j))
        p.target.v[static_cast<size_t>(i) * n + j] =
            static_cast<float>(dataset::normalize_pg(s.target.at(i, j)));
  p.mask = s.mask;
  for (uint8_t m : p.mask)
    if (m) {
      p.usable = true;
      break;
    }
  return p;
}

TrainResult run_training(Model<float>& model,
                         const std::vector<dataset::Sample>& samples,
                         const TrainConfig& cfg, uint64_t init_seed,
                         int prior_epochs) {
  if (samples.empty()) throw input_error("train: no samples");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw input_error("train: bad training configuration");
  int n = samples.front().elevation.size_px;
  for (const dataset::Sample& s : samples)
    if (s.elevation.size_px != n)
      throw input_error("train: samples have mixed tile sizes");

  std::vector<PreparedSample> prep;
  prep.reserve(samples.size());
  bool any = false;
  for (const dataset::Sample& s : samples) {
    prep.push_back(prepare(s));
    any = any || prep.back().usable;
  }
  if (!any) throw domain_error("train: every sample has an empty mask");

  Workspace<float> ws;
  rng::Engine order_eng = rng::make_engine(cfg.seed, 0x53485546u);  // shuffle
  std::vector<size_t> idx(prep.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::shuffle(idx, order_eng);
    double loss_sum = 0.0;
    size_t counted = 0;
    for (size_t start = 0; start < idx.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop =
          std::min(idx.size(), start + static_cast<size_t>(cfg.batch_size));
      model.zero_grads();
      int in_batch = 0;
      for (size_t q = start; q < stop; ++q) {
        PreparedSample& pr = prep[idx[q]];
        if (!pr.usable) continue;
        Tensor<float> out = model.forward(pr.input, ws);
        Tensor<float> dout;
        double loss = loss_masked_mse(out, pr.target, pr.mask, &dout);
        model.backward(dout, ws);
        loss_sum += loss;
        ++counted;
        ++in_batch;
      }
      if (in_batch == 0) continue;
      model.scale_grads(1.0f / static_cast<float>(in_batch));
      model.adam_step(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    }
    result.epoch_loss.push_back(counted ? loss_sum / counted : 0.0);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d/%d loss %.6g\n", epoch + 1, cfg.epochs,
                   result.epoch_loss.back());
  }
  result.params =
      params_from_model(model, init_seed, prior_epochs + cfg.epochs);
  return result;
}

}  // namespace

TrainResult train(const std::vector<dataset::Sample>& samples,
                  const TrainConfig& cfg) {
  Model<float> model = Model<float>::make(2, 32, 4, cfg.seed);
  return run_training(model, samples, cfg, cfg.seed, 0);
}

TrainResult train_from(const ModelParams& start,
                       const std::vector<dataset::Sample>& samples,
                       const TrainConfig& cfg) {
  Model<float> model = model_from_params<float>(start);
  return run_training(model, samples, cfg, start.init_seed,
                      start.epochs_trained);
}

prop::Heatmap predict(const ModelParams& p, const geo::GridTile& elevation,
                      const geo::GridTile& estimate) {
  Model<float> model = model_from_params<float>(p);
  Tensor<float> input = assemble_input<float>(elevation, estimate);
  Workspace<float> ws;
  Tensor<float> out = model.forward(input, ws);

  prop::Heatmap hm;
  hm.generator = prop::Generator::model;
  hm.tile = geo::GridTile(elevation.size_px, elevation.cell_size_m);
  int n = elevation.size_px;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (elevation.valid(i, j) && estimate.valid(i, j))
        hm.tile.set(i, j,
                    dataset::denormalize_pg(
                        out.v[static_cast<size_t>(i) * n + j]));
  return hm;
}

template class Model<float>;
template class Model<double>;
template double loss_masked_mse<float>(const Tensor<float>&,
                                       const Tensor<float>&,
                                       const std::vector<uint8_t>&,
                                       Tensor<float>*);
template double loss_masked_mse<double>(const Tensor<double>&,
                                        const Tensor<double>&,
                                        const std::vector<uint8_t>&,
                                        Tensor<double>*);
template Tensor<float> assemble_input<float>(const geo::GridTile&,
                                             const geo::GridTile&);
template Tensor<double> assemble_input<double>(const geo::GridTile&,
                                               const geo::GridTile&);
template Model<float> model_from_params<float>(const ModelParams&);
template Model<double> model_from_params<double>(const ModelParams&);
template ModelParams params_from_model<float>(const Model<float>&, uint64_t,
                                              int);
template ModelParams params_from_model<double>(const Model<double>&, uint64_t,
                                               int);

}  // namespace pgr::unet
